"""Dataset ingestion, train/test split construction and feature scaling.

Labels follow the anomaly-detection convention: 0 is normal, 1 is anomaly.
Labels are only used to build splits and to evaluate; none of the fitting
code in this package accepts them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class DataError(ValueError):
    """Raised for malformed input files and impossible split requests."""


@dataclass(frozen=True)
class LabeledTable:
    features: np.ndarray
    labels: np.ndarray
    name: str = "table"

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if labels.shape != (features.shape[0],):
            raise DataError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        if not np.all((labels == 0) | (labels == 1)):
            raise DataError("labels must be 0 or 1")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_normal(self) -> int:
        return int(np.sum(self.labels == 0))

    @property
    def n_anomaly(self) -> int:
        return int(np.sum(self.labels == 1))


@dataclass(frozen=True)
class ExperimentSplit:
    """Contaminated unlabeled training matrix plus a labeled test set.

    ``train_true_labels`` is kept for diagnostics and must not be handed to
    any fitting routine.
    """

    train_features: np.ndarray
    train_true_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    anomaly_ratio: float
    split_seed: int
    contamination_seed: int
    train_index: np.ndarray = field(repr=False)
    test_index: np.ndarray = field(repr=False)
    discarded_index: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DatasetDescriptor:
    """Where a dataset lives and how to read its labels."""

    name: str
    path: str
    label_column: str
    positive_values: tuple[str, ...]
    reverse_labels: bool = False
    delimiter: str = ","

    def load(self, base_dir: str | Path | None = None) -> LabeledTable:
        path = Path(self.path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_csv(
            path,
            self.label_column,
            self.positive_values,
            reverse_labels=self.reverse_labels,
            delimiter=self.delimiter,
            name=self.name,
        )


def _parse_float(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def load_csv(
    path: str | Path,
    label_column: str,
    positive_label_values: Iterable[str],
    reverse_labels: bool = False,
    delimiter: str = ",",
    name: str | None = None,
) -> LabeledTable:
    """Read a delimited text file with a header row into a LabeledTable.

    Columns whose every value parses as a number are used as-is. Any other
    column is one-hot encoded, with the category vocabulary taken from the
    whole file in sorted order. Rows with an empty cell are rejected.

    Parameters
    ----------
    path : path to the file.
    label_column : header name of the label column.
    positive_label_values : label strings mapped to 1 (anomaly); every
        other label string that appears is mapped to 0.
    reverse_labels : swap the 0/1 mapping after it is computed.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    positive = {str(v).strip() for v in positive_label_values}
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header of {path}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            row = [cell.strip() for cell in row]
            if any(cell == "" for cell in row):
                raise DataError(f"{path}:{lineno}: missing value")
            rows.append(row)
    if not rows:
        raise DataError(f"{path} has no data rows")

    label_idx = header.index(label_column)
    raw_labels = [row[label_idx] for row in rows]
    if positive and not positive & set(raw_labels):
        raise DataError(
            f"none of the positive label values {sorted(positive)} occur in {path}"
        )
    labels = np.array([1 if v in positive else 0 for v in raw_labels], dtype=np.int64)
    if reverse_labels:
        labels = 1 - labels

    blocks = []
    for j, col in enumerate(header):
        if j == label_idx:
            continue
        values = [row[j] for row in rows]
        parsed = [_parse_float(v) for v in values]
        if all(p is not None for p in parsed):
            blocks.append(np.array(parsed, dtype=np.float64)[:, None])
        else:
            vocab = sorted(set(values))
            lookup = {v: i for i, v in enumerate(vocab)}
            onehot = np.zeros((len(values), len(vocab)))
            onehot[np.arange(len(values)), [lookup[v] for v in values]] = 1.0
            blocks.append(onehot)
    if not blocks:
        raise DataError(f"{path} has no feature columns")
    features = np.hstack(blocks)
    if not np.all(np.isfinite(features)):
        raise DataError(f"{path} contains non-finite numeric values")
    return LabeledTable(features, labels, name or path.stem)


def make_split(
    table: LabeledTable,
    anomaly_ratio: float,
    split_seed: int,
    contamination_seed: int,
) -> ExperimentSplit:
    """Build a contaminated training set and a held-out test set.

    Half of the normal rows (chosen with ``split_seed``) form the training
    pool. Then ``round(anomaly_ratio * len(train))`` of those normals are
    swapped for anomalies (chosen with ``contamination_seed``), so the
    training size is the same for every ratio. Swapped-out normals are
    discarded; everything else not in train goes to test.
    """
    if not 0.0 <= anomaly_ratio <= 0.10:
        raise DataError(f"anomaly_ratio must be in [0, 0.10], got {anomaly_ratio}")
    labels = table.labels
    normal_idx = np.flatnonzero(labels == 0)
    anomaly_idx = np.flatnonzero(labels == 1)
    if normal_idx.size == 0:
        raise DataError("table has no normal rows")
    if anomaly_idx.size == 0:
        raise DataError("table has no anomalous rows")

    split_rng = np.random.default_rng(split_seed)
    perm = split_rng.permutation(normal_idx)
    n_train = perm.size // 2
    if n_train == 0:
        raise DataError("need at least two normal rows")
    train_normals, test_normals = perm[:n_train], perm[n_train:]

    n_swap = int(round(anomaly_ratio * n_train))
    if n_swap > anomaly_idx.size:
        raise DataError(
            f"ratio {anomaly_ratio} needs {n_swap} anomalies, table has {anomaly_idx.size}"
        )
    if n_swap > n_train:
        raise DataError("more anomalies requested than training rows")
    cont_rng = np.random.default_rng(contamination_seed)
    swapped_out = np.sort(cont_rng.choice(train_normals, size=n_swap, replace=False))
    swapped_in = np.sort(cont_rng.choice(anomaly_idx, size=n_swap, replace=False))

    train_index = np.sort(
        np.concatenate([np.setdiff1d(train_normals, swapped_out), swapped_in])
    )
    test_index = np.sort(
        np.concatenate([test_normals, np.setdiff1d(anomaly_idx, swapped_in)])
    )
    X, y = table.features, table.labels
    return ExperimentSplit(
        train_features=X[train_index],
        train_true_labels=y[train_index],
        test_features=X[test_index],
        test_labels=y[test_index],
        anomaly_ratio=float(anomaly_ratio),
        split_seed=int(split_seed),
        contamination_seed=int(contamination_seed),
        train_index=train_index,
        test_index=test_index,
        discarded_index=swapped_out,
    )


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) * self.std + self.mean


def fit_scaler(train: np.ndarray) -> Scaler:
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] == 0:
        raise DataError("train must be a non-empty 2-D matrix")
    mean = train.mean(axis=0)
    std = train.std(axis=0)  # population convention (ddof=0)
    std = np.where(std > 0, std, 1.0)
    return Scaler(mean, std)


def standardize(train: np.ndarray, test: np.ndarray):
    """Scale both matrices with statistics estimated on ``train`` only.

    Returns ``(train_std, test_std, scaler)``.
    """
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if test.ndim != 2 or train.ndim != 2 or train.shape[1] != test.shape[1]:
        raise DataError(
            f"column mismatch: train {train.shape}, test {test.shape}"
        )
    scaler = fit_scaler(train)
    return scaler.transform(train), scaler.transform(test), scaler


def synth_blobs(
    n_normal: int,
    n_anomaly: int,
    dims: int,
    separation: float,
    seed: int,
) -> LabeledTable:
    """Two unit-covariance Gaussian blobs: normals at the origin, anomalies
    at distance ``separation`` along a random unit direction."""
    if n_normal <= 0 or n_anomaly <= 0 or dims < 1 or not separation > 0:
        raise DataError("synth_blobs needs positive counts, dims >= 1, separation > 0")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dims)
    direction /= np.linalg.norm(direction)
    normals = rng.standard_normal((n_normal, dims))
    anomalies = rng.standard_normal((n_anomaly, dims)) + separation * direction
    features = np.vstack([normals, anomalies])
    labels = np.concatenate([np.zeros(n_normal, np.int64), np.ones(n_anomaly, np.int64)])
    return LabeledTable(features, labels, name=f"synth-{dims}d")

