"""Command-line interface.

Subcommands: ``generate``, ``train``, ``predict``, ``evaluate``,
``baselines``, ``check``. Every run writes a ``manifest.json`` into its
output directory recording the command, the fully resolved configuration,
SHA-256 digests of the inputs, the seed, and the artifact paths. Nothing
embeds timestamps and all writes are atomic, so rerunning a command with
identical inputs reproduces every output byte for byte.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures (with a
single machine-readable error line on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .baselines import clustered_fit, lioness_networks, notears_fit
from .errors import DatasetParseError, InvalidInputError, TrainingDivergedError
from .evaluation import (
    EvalReport,
    MethodResult,
    bootstrap_mse,
    clustered_method,
    heldout_mse,
    lioness_method,
    notmad_method,
    population_method,
    threshold_sweep,
)
from .fileio import (
    file_digest,
    load_dataset,
    load_json,
    save_dataset,
    save_eval_report_csv,
    save_json,
    save_network,
    save_training_log,
    load_contexts,
)
from .mixture import ArchetypeDictionary, load_model, save_model
from .notmad import TrainConfig, TrainedModel, predict_networks, train
from .synth import SynthSpec, SynthTruth, generate

TOOL_NAME = "ctxdag"


def _default_threads() -> int:
    env = os.environ.get("CTXDAG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _write_manifest(out_dir, command, config, inputs, seed, artifacts, extra=None):
    manifest = {
        "tool": TOOL_NAME,
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(path): file_digest(path) for path in inputs},
        "seed": seed,
        "artifacts": sorted(artifacts),
    }
    if extra:
        manifest.update(extra)
    save_json(os.path.join(out_dir, "manifest.json"), manifest)


def _ensure_out(path) -> str:
    os.makedirs(path, exist_ok=True)
    os.makedirs(os.path.join(path, "figures"), exist_ok=True)
    return path


def _cmd_generate(args) -> int:
    spec_values = load_json(args.spec) if args.spec else {}
    spec = SynthSpec.from_dict(spec_values)
    truth = generate(spec)
    out = _ensure_out(args.out)

    artifacts = ["train.csv", "truth.json", "manifest.json"]
    save_dataset(os.path.join(out, "train.csv"), truth.train())
    if spec.n_test > 0:
        save_dataset(os.path.join(out, "test.csv"), truth.test())
        artifacts.append("test.csv")
    save_json(os.path.join(out, "truth.json"), _truth_payload(truth))
    _write_manifest(
        out,
        "generate",
        spec.to_dict(),
        [args.spec] if args.spec else [],
        spec.seed,
        artifacts,
    )
    return 0


def _truth_payload(truth: SynthTruth) -> dict:
    return {
        "format_version": 1,
        "spec": truth.spec.to_dict(),
        "archetypes": truth.dictionary.archetypes.tolist(),
        "mixing_matrix": truth.mixing_matrix.tolist(),
        "topological_order": truth.topological_order.tolist(),
        "Z": truth.Z.tolist(),
        "group_labels": truth.group_labels.tolist(),
    }


def _load_truth(path):
    payload = load_json(path)
    if payload.get("format_version") != 1:
        raise InvalidInputError(f"{path}: unsupported truth format version")
    spec = SynthSpec.from_dict(payload["spec"])
    dictionary = ArchetypeDictionary(np.asarray(payload["archetypes"], dtype=float))
    Z = np.asarray(payload["Z"], dtype=float)
    return spec, dictionary, Z


def _cmd_train(args) -> int:
    data = load_dataset(args.data)
    config_values = load_json(args.config) if args.config else {}
    config = TrainConfig.from_dict(config_values)
    model = train(data, config)
    out = _ensure_out(args.out)

    save_model(os.path.join(out, "model.json"), model.dictionary, model.encoder)
    save_training_log(os.path.join(out, "training_log.csv"), model.training_log)
    artifacts = ["model.json", "training_log.csv", "manifest.json"]
    if model.training_log:
        from .report import training_curves_figure

        training_curves_figure(
            model.training_log, os.path.join(out, "figures", "training_curves.png")
        )
        artifacts.append("figures/training_curves.png")
    inputs = [args.data] + ([args.config] if args.config else [])
    _write_manifest(out, "train", config.to_dict(), inputs, config.seed, artifacts)
    return 0


def _cmd_predict(args) -> int:
    dictionary, encoder = load_model(args.model)
    contexts = load_contexts(args.contexts)
    model = TrainedModel(dictionary, encoder, TrainConfig(K=dictionary.K))
    networks = predict_networks(
        model, contexts, project=args.project, threshold=args.threshold
    )
    out = _ensure_out(args.out)
    artifacts = ["manifest.json"]
    for index, W in enumerate(networks):
        name = f"network_{index:04d}.csv"
        save_network(os.path.join(out, name), W)
        artifacts.append(name)
    config = {"project": bool(args.project), "threshold": args.threshold}
    _write_manifest(out, "predict", config, [args.model, args.contexts], None, artifacts)
    return 0


def _cmd_evaluate(args) -> int:
    test_data = load_dataset(args.test)
    report = EvalReport()
    out = _ensure_out(args.out)

    truth = None
    if args.truth:
        spec, true_dictionary, Z = _load_truth(args.truth)
        if test_data.n != spec.n_test:
            raise InvalidInputError(
                f"test set has {test_data.n} rows but the truth file expects {spec.n_test}"
            )
        test_networks = np.einsum(
            "nk,kpq->npq", Z[spec.n_train :], true_dictionary.archetypes
        )
        truth = (true_dictionary, test_networks)

    names = []
    for path in args.model:
        base = os.path.splitext(os.path.basename(path))[0]
        name = base
        suffix = 1
        while name in names:
            suffix += 1
            name = f"{base}_{suffix}"
        names.append(name)

        dictionary, encoder = load_model(path)
        model = TrainedModel(dictionary, encoder, TrainConfig(K=dictionary.K))
        predicted = predict_networks(
            model, test_data.C, project=args.project, threshold=args.threshold
        )
        mse = heldout_mse(predicted, test_data.X)
        report.methods[name] = MethodResult(mse, 0.0, [mse])
        if truth is not None:
            true_dictionary, test_networks = truth
            report.structure[name] = threshold_sweep(predicted, test_networks)
            if dictionary.K >= true_dictionary.K:
                from .evaluation import archetype_recovery

                report.archetype_recovery[name] = archetype_recovery(
                    dictionary, true_dictionary
                )

    artifacts = _write_report(out, report)
    config = {
        "project": bool(args.project),
        "threshold": args.threshold,
        "models": list(args.model),
    }
    inputs = list(args.model) + [args.test] + ([args.truth] if args.truth else [])
    _write_manifest(out, "evaluate", config, inputs, None, artifacts)
    return 0


def _write_report(out, report: EvalReport) -> list[str]:
    from .report import render_report_figures

    save_json(os.path.join(out, "report.json"), report.to_json_dict())
    save_eval_report_csv(os.path.join(out, "report.csv"), report.to_csv_rows())
    artifacts = ["report.json", "report.csv", "manifest.json"]
    for figure in render_report_figures(report, os.path.join(out, "figures")):
        artifacts.append(f"figures/{figure}")
    return artifacts


def _cmd_baselines(args) -> int:
    train_data = load_dataset(args.train)
    test_data = load_dataset(args.test)
    out = _ensure_out(args.out)
    report = EvalReport()
    artifacts = []

    methods = {
        "population": population_method(),
        "clustered": clustered_method(args.clusters),
        "lioness": lioness_method(),
    }
    if train_data.group_labels is not None:
        methods["oracle_clustered"] = clustered_method(0, use_oracle_labels=True)

    if args.bootstrap >= 2:
        for name, method in methods.items():
            report.methods[name] = bootstrap_mse(
                method,
                train_data,
                test_data,
                resamples=args.bootstrap,
                seed=args.seed,
                threads=args.threads,
            )
    else:
        for name, method in methods.items():
            predictor = method(train_data, args.seed)
            mse = heldout_mse(predictor(test_data), test_data.X)
            report.methods[name] = MethodResult(mse, 0.0, [mse])

    # Fitted structures from the full training set, for inspection.
    W_pop = notears_fit(train_data.X, seed=args.seed)
    save_network(os.path.join(out, "population.csv"), W_pop)
    artifacts.append("population.csv")
    clustered = clustered_fit(train_data, args.clusters, seed=args.seed)
    for g, W in enumerate(clustered.graphs):
        name = f"cluster_{g}.csv"
        save_network(os.path.join(out, name), W)
        artifacts.append(name)
    if train_data.group_labels is not None:
        oracle = clustered_fit(train_data, 0, use_oracle_labels=True, seed=args.seed)
        for g, W in enumerate(oracle.graphs):
            name = f"oracle_{g}.csv"
            save_network(os.path.join(out, name), W)
            artifacts.append(name)

    artifacts += _write_report(out, report)
    config = {
        "clusters": args.clusters,
        "bootstrap": args.bootstrap,
        "threads": args.threads,
    }
    _write_manifest(
        out, "baselines", config, [args.train, args.test], args.seed, artifacts
    )
    return 0


def _cmd_check(args) -> int:
    from .diagnostics import run_self_checks

    results = run_self_checks(args.seed)
    failed = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name} ({result.detail})")
        failed += not result.passed
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL_NAME,
        description="Context-specific Bayesian network estimation via archetype mixtures.",
    )
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_generate = sub.add_parser("generate", help="synthesize a benchmark dataset")
    p_generate.add_argument("--spec", help="JSON file of generator settings (defaults apply)")
    p_generate.add_argument("--out", required=True, help="output directory")
    p_generate.set_defaults(func=_cmd_generate)

    p_train = sub.add_parser("train", help="fit a mixture model to a dataset")
    p_train.add_argument("--data", required=True, help="training dataset CSV")
    p_train.add_argument("--config", help="JSON file of training settings (defaults apply)")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.set_defaults(func=_cmd_train)

    p_predict = sub.add_parser("predict", help="emit per-row networks for contexts")
    p_predict.add_argument("--model", required=True, help="model JSON file")
    p_predict.add_argument("--contexts", required=True, help="contexts CSV (or dataset CSV)")
    p_predict.add_argument("--project", action="store_true", help="project each network to a DAG")
    p_predict.add_argument(
        "--threshold", type=float, default=0.0, help="zero entries with |w| <= threshold"
    )
    p_predict.add_argument("--out", required=True, help="output directory")
    p_predict.set_defaults(func=_cmd_predict)

    p_eval = sub.add_parser("evaluate", help="score models on a held-out dataset")
    p_eval.add_argument(
        "--model", action="append", required=True, help="model JSON file (repeatable)"
    )
    p_eval.add_argument("--test", required=True, help="held-out dataset CSV")
    p_eval.add_argument("--truth", help="truth JSON from the generate step")
    p_eval.add_argument("--project", action="store_true", help="project predictions to DAGs")
    p_eval.add_argument(
        "--threshold", type=float, default=0.0, help="zero entries with |w| <= threshold"
    )
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_base = sub.add_parser("baselines", help="fit and score the baseline estimators")
    p_base.add_argument("--train", required=True, help="training dataset CSV")
    p_base.add_argument("--test", required=True, help="held-out dataset CSV")
    p_base.add_argument("--clusters", type=int, default=3, help="k for the clustered baseline")
    p_base.add_argument(
        "--bootstrap", type=int, default=0, help="bootstrap resamples (0 = single fit)"
    )
    p_base.add_argument("--seed", type=int, default=0)
    p_base.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help="worker threads (default: CTXDAG_THREADS or the CPU count)",
    )
    p_base.add_argument("--out", required=True, help="output directory")
    p_base.set_defaults(func=_cmd_baselines)

    p_check = sub.add_parser("check", help="run the built-in invariant self-checks")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.set_defaults(func=_cmd_check)

    return parser


def cli_dispatch(argv=None) -> int:
    """Parse and run a command line; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    try:
        return args.func(args)
    except (
        InvalidInputError,
        DatasetParseError,
        TrainingDivergedError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
