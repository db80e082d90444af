"""Context-specific Bayesian network estimation via archetype mixtures.

The library learns a small dictionary of archetypal DAG weight matrices
together with a context encoder; each sample's network is the convex
mixture of the archetypes selected by its context. Baseline estimators
(population, clustered, per-sample) and a synthetic benchmark generator
ship alongside, plus a CLI (``ctxdag``) covering the whole pipeline.
"""

__version__ = "0.1.0"

from .acyclicity import h, h_gradient, matrix_exponential
from .baselines import (
    ClusteredModel,
    PenaltySchedule,
    PopulationModel,
    clustered_fit,
    kmeans,
    lioness_networks,
    notears_fit,
)
from .dag import (
    CompatibilityResult,
    binarize,
    is_dag,
    mixture_compatibility_check,
    project_to_dag,
    topological_order,
)
from .errors import DatasetParseError, InvalidInputError, TrainingDivergedError
from .evaluation import (
    AblationReport,
    EvalReport,
    archetype_recovery,
    bootstrap_mse,
    edge_scores,
    group_average_gap,
    heldout_mse,
    run_ablation,
    structural_hamming,
    threshold_sweep,
)
from .mixture import (
    ArchetypeDictionary,
    FeedForwardEncoder,
    LinearEncoder,
    backward,
    encode,
    generate_graph,
    load_model,
    make_encoder,
    save_model,
)
from .notmad import (
    EpochRecord,
    TrainConfig,
    TrainedModel,
    notmad_objective,
    predict_network,
    predict_networks,
    train,
    train_restarts,
)
from .sem import Dataset, sample_sem, sem_loss, sem_loss_gradient
from .synth import SynthSpec, SynthTruth, generate

__all__ = [
    "__version__",
    "h",
    "h_gradient",
    "matrix_exponential",
    "binarize",
    "is_dag",
    "topological_order",
    "project_to_dag",
    "mixture_compatibility_check",
    "CompatibilityResult",
    "Dataset",
    "sample_sem",
    "sem_loss",
    "sem_loss_gradient",
    "ArchetypeDictionary",
    "LinearEncoder",
    "FeedForwardEncoder",
    "make_encoder",
    "encode",
    "generate_graph",
    "backward",
    "save_model",
    "load_model",
    "TrainConfig",
    "TrainedModel",
    "EpochRecord",
    "train",
    "train_restarts",
    "notmad_objective",
    "predict_network",
    "predict_networks",
    "PenaltySchedule",
    "notears_fit",
    "kmeans",
    "clustered_fit",
    "ClusteredModel",
    "PopulationModel",
    "lioness_networks",
    "SynthSpec",
    "SynthTruth",
    "generate",
    "heldout_mse",
    "bootstrap_mse",
    "group_average_gap",
    "structural_hamming",
    "edge_scores",
    "threshold_sweep",
    "archetype_recovery",
    "run_ablation",
    "AblationReport",
    "EvalReport",
    "InvalidInputError",
    "TrainingDivergedError",
    "DatasetParseError",
]
