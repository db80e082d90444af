"""On-disk formats: dataset CSV, network CSV, training log, JSON helpers.

Every write lands atomically (temp file in the target directory, then
rename), floats are serialized with ``repr`` so values round-trip exactly,
and nothing here embeds timestamps, so identical runs produce identical
bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import tempfile

import numpy as np

from .errors import DatasetParseError
from .notmad import TRAINING_LOG_HEADER, EpochRecord
from .sem import Dataset

DATASET_GROUP_COLUMN = "group"
NETWORK_FORMAT_VERSION = 1
_NETWORK_HEADER_RE = re.compile(r"^# network-format v(\d+) p=(\d+)$")


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def save_json(path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Dataset CSV: header x_0..x_{p-1},c_0..c_{m-1}[,group]
# ---------------------------------------------------------------------------


def dataset_header(p: int, m: int, with_group: bool) -> list[str]:
    header = [f"x_{j}" for j in range(p)] + [f"c_{j}" for j in range(m)]
    if with_group:
        header.append(DATASET_GROUP_COLUMN)
    return header


def save_dataset(path, data: Dataset) -> None:
    with_group = data.group_labels is not None
    header = dataset_header(data.p, data.m, with_group)
    lines = [",".join(header)]
    for i in range(data.n):
        cells = [repr(float(v)) for v in data.X[i]] + [repr(float(v)) for v in data.C[i]]
        if with_group:
            cells.append(str(int(data.group_labels[i])))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_dataset_header(header: list[str], path) -> tuple[int, int, bool]:
    p = 0
    while p < len(header) and header[p] == f"x_{p}":
        p += 1
    m = 0
    while p + m < len(header) and header[p + m] == f"c_{m}":
        m += 1
    rest = header[p + m :]
    with_group = rest == [DATASET_GROUP_COLUMN]
    if p < 1 or m < 1 or (rest and not with_group):
        raise DatasetParseError(
            f"{path}: header must be x_0..x_(p-1),c_0..c_(m-1)[,{DATASET_GROUP_COLUMN}], "
            f"got {','.join(header)}"
        )
    return p, m, with_group


def _parse_cell(cell: str, row: int, column: str, path) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DatasetParseError(
            f"{path}: row {row}, column {column}: {cell!r} is not a number"
        ) from None
    if not np.isfinite(value):
        raise DatasetParseError(
            f"{path}: row {row}, column {column}: non-finite value {cell!r}"
        )
    return value


def load_dataset(path) -> Dataset:
    """Parse a dataset CSV; malformed cells are reported by row and column."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError(f"{path}: file is empty") from None
        p, m, with_group = _parse_dataset_header([h.strip() for h in header], path)
        names = dataset_header(p, m, with_group)
        X_rows, C_rows, labels = [], [], []
        for row_index, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(names):
                raise DatasetParseError(
                    f"{path}: row {row_index} has {len(cells)} cells, expected {len(names)}"
                )
            values = [
                _parse_cell(cell.strip(), row_index, names[col], path)
                for col, cell in enumerate(cells[: p + m])
            ]
            X_rows.append(values[:p])
            C_rows.append(values[p:])
            if with_group:
                cell = cells[p + m].strip()
                try:
                    labels.append(int(cell))
                except ValueError:
                    raise DatasetParseError(
                        f"{path}: row {row_index}, column {DATASET_GROUP_COLUMN}: "
                        f"{cell!r} is not an integer"
                    ) from None
    if not X_rows:
        raise DatasetParseError(f"{path}: no data rows")
    return Dataset(
        np.array(X_rows), np.array(C_rows), np.array(labels) if with_group else None
    )


def load_contexts(path) -> np.ndarray:
    """Context matrix from a dataset CSV or a contexts-only CSV (c_0..c_{m-1})."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = [h.strip() for h in fh.readline().rstrip("\n").split(",")]
    if header and header[0] == "c_0":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            names = next(reader)
            m = len(names)
            if names != [f"c_{j}" for j in range(m)]:
                raise DatasetParseError(f"{path}: contexts header must be c_0..c_(m-1)")
            rows = []
            for row_index, cells in enumerate(reader, start=1):
                if not cells:
                    continue
                if len(cells) != m:
                    raise DatasetParseError(
                        f"{path}: row {row_index} has {len(cells)} cells, expected {m}"
                    )
                rows.append(
                    [
                        _parse_cell(cell.strip(), row_index, names[col], path)
                        for col, cell in enumerate(cells)
                    ]
                )
        if not rows:
            raise DatasetParseError(f"{path}: no data rows")
        return np.array(rows)
    return load_dataset(path).C


def save_contexts(path, C: np.ndarray) -> None:
    C = np.asarray(C, dtype=float)
    lines = [",".join(f"c_{j}" for j in range(C.shape[1]))]
    for row in C:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Network CSV: one-line header with p and a format version, then p rows
# ---------------------------------------------------------------------------


def save_network(path, W: np.ndarray) -> None:
    W = np.asarray(W, dtype=float)
    lines = [f"# network-format v{NETWORK_FORMAT_VERSION} p={W.shape[0]}"]
    for row in W:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_network(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        match = _NETWORK_HEADER_RE.match(header)
        if not match:
            raise DatasetParseError(f"{path}: missing or malformed network header")
        version, p = int(match.group(1)), int(match.group(2))
        if version != NETWORK_FORMAT_VERSION:
            raise DatasetParseError(
                f"{path}: unsupported network format version {version}"
            )
        rows = []
        for row_index, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != p:
                raise DatasetParseError(
                    f"{path}: row {row_index} has {len(cells)} cells, expected {p}"
                )
            rows.append(
                [_parse_cell(c, row_index, f"col_{j}", path) for j, c in enumerate(cells)]
            )
    if len(rows) != p:
        raise DatasetParseError(f"{path}: expected {p} rows, found {len(rows)}")
    return np.array(rows)


# ---------------------------------------------------------------------------
# Training log CSV
# ---------------------------------------------------------------------------


def save_training_log(path, records: list[EpochRecord]) -> None:
    lines = [",".join(TRAINING_LOG_HEADER)]
    for rec in records:
        lines.append(
            ",".join(
                [
                    str(rec.epoch),
                    repr(float(rec.pred_loss)),
                    repr(float(rec.mean_h)),
                    repr(float(rec.arch_l1)),
                    repr(float(rec.arch_h)),
                ]
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_training_log(path) -> list[EpochRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRAINING_LOG_HEADER:
            raise DatasetParseError(f"{path}: unexpected training log header {header}")
        records = []
        for cells in reader:
            if not cells:
                continue
            records.append(
                EpochRecord(
                    int(cells[0]),
                    float(cells[1]),
                    float(cells[2]),
                    float(cells[3]),
                    float(cells[4]),
                )
            )
    return records


def save_eval_report_csv(path, rows: list[tuple]) -> None:
    lines = ["section,method,key,metric,value"]
    for section, method, key, metric, value in rows:
        lines.append(f"{section},{method},{key},{metric},{repr(float(value))}")
    atomic_write_text(path, "\n".join(lines) + "\n")
