"""Transformation-prediction representation for tabular data.

Each row ``x`` is mapped through M fixed random projections ``W_m x``; a
small dense network followed by a softmax head is trained to tell which
projection produced its input. After training, one Gaussian density
estimator per projection is fitted on the network features, and a row's
anomaly score is the lowest per-projection GDE score (the highest
normality).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from ._kernel_py import LEAKY_SLOPE, leaky_relu
from .occ import DEFAULT_SHRINKAGE, GdeModel, fit_views, score_views

CHECKPOINT_VERSION = 1
HIDDEN_WIDTH = 8
HIDDEN_LAYERS = 5
BATCH_ROWS = 64


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TransformationBank:
    """M random projections of shape (r, d), entries i.i.d. standard normal."""

    matrices: np.ndarray  # (M, r, d)
    seed: int

    @property
    def n_transforms(self) -> int:
        return self.matrices.shape[0]

    @property
    def out_dims(self) -> int:
        return self.matrices.shape[1]

    @property
    def in_dims(self) -> int:
        return self.matrices.shape[2]

    def project(self, X: np.ndarray) -> np.ndarray:
        """``(n, d) -> (n, M, r)`` with ``out[i, m] = W_m @ X[i]``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.in_dims:
            raise ValueError(f"expected (n, {self.in_dims}) rows, got {X.shape}")
        M, r, d = self.matrices.shape
        flat = X @ self.matrices.reshape(M * r, d).T
        return flat.reshape(X.shape[0], M, r)


def make_bank(d: int, M: int, r: int, seed: int) -> TransformationBank:
    if d < 1 or M < 1 or r < 1:
        raise ValueError("d, M and r must be positive")
    rng = np.random.default_rng(seed)
    mats = rng.standard_normal((M, r, d))
    mats.setflags(write=False)
    return TransformationBank(mats, int(seed))


def init_params(in_dims: int, n_classes: int, rng: np.random.Generator,
                width: int = HIDDEN_WIDTH, layers: int = HIDDEN_LAYERS) -> list[np.ndarray]:
    """Fan-in uniform weights, zero biases. Layout ``[W1, b1, ..., Wh, bh]``."""
    params = []
    fan_in = in_dims
    for _ in range(layers):
        bound = 1.0 / math.sqrt(fan_in)
        params += [rng.uniform(-bound, bound, (width, fan_in)), np.zeros(width)]
        fan_in = width
    bound = 1.0 / math.sqrt(fan_in)
    params += [rng.uniform(-bound, bound, (n_classes, fan_in)), np.zeros(n_classes)]
    return params


def forward(params: Sequence[np.ndarray], z: np.ndarray):
    """Features and logits for one input vector or a batch of them."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("input contains non-finite values")
    if z.shape[-1] != params[0].shape[1]:
        raise ValueError(f"expected inputs of size {params[0].shape[1]}, got {z.shape[-1]}")
    h = z
    for W, b in zip(params[:-2:2], params[1:-2:2]):
        h = leaky_relu(h @ W.T + b)
    return h, h @ params[-2].T + params[-1]


@dataclass
class ReprModel:
    bank: TransformationBank
    params: list[np.ndarray]
    velocity: list[np.ndarray]
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 3e-5
    shrinkage: float = DEFAULT_SHRINKAGE
    gdes: list[GdeModel] | None = None
    steps_taken: int = 0
    losses: list[float] = field(default_factory=list, repr=False)

    @property
    def finalized(self) -> bool:
        return self.gdes is not None

    @property
    def n_transforms(self) -> int:
        return self.bank.n_transforms

    def transform(self, X: np.ndarray, chunk_rows: int = 2048) -> np.ndarray:
        """Network features of every projection: ``(n, d) -> (n, M, width)``."""
        X = np.asarray(X, dtype=np.float64)
        M = self.n_transforms
        out = np.empty((X.shape[0], M, self.params[-2].shape[1]))
        for start in range(0, X.shape[0], chunk_rows):
            Z = self.bank.project(X[start:start + chunk_rows])
            feats = kernels.features(self.params, Z.reshape(-1, Z.shape[-1]))
            out[start:start + chunk_rows] = feats.reshape(Z.shape[0], M, -1)
        return out

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.transform(X)

    def score(self, X: np.ndarray) -> np.ndarray:
        return repr_score(self, X)


def make_model(d: int, M: int = 32, r: int = 32, bank_seed: int = 0, init_seed: int = 0,
               learning_rate: float = 1e-3, momentum: float = 0.9,
               weight_decay: float = 3e-5, shrinkage: float = DEFAULT_SHRINKAGE) -> ReprModel:
    bank = make_bank(d, M, r, bank_seed)
    params = init_params(r, M, np.random.default_rng(init_seed))
    return ReprModel(
        bank=bank,
        params=params,
        velocity=[np.zeros_like(p) for p in params],
        learning_rate=learning_rate,
        momentum=momentum,
        weight_decay=weight_decay,
        shrinkage=shrinkage,
    )


def batch_loss_and_grads(params, projected: np.ndarray):
    """Cross-entropy of predicting m from ``W_m x`` for every row and every m.

    ``projected`` has shape ``(b, M, r)``; the loss is the mean over the
    ``b * M`` classification instances.
    """
    b, M, r = projected.shape
    labels = np.tile(np.arange(M, dtype=np.int64), b)
    return kernels.loss_and_grads(params, projected.reshape(b * M, r), labels)


def sgd_update(model: ReprModel, grads: Sequence[np.ndarray]) -> None:
    """Momentum SGD with L2 decay: ``v = mu v + (g + wd p); p -= lr v``."""
    for p, v, g in zip(model.params, model.velocity, grads):
        v *= model.momentum
        v += g + model.weight_decay * p
        p -= model.learning_rate * v


def train_step(model: ReprModel, batch: np.ndarray | None = None,
               projected: np.ndarray | None = None) -> float:
    """One optimizer step on a mini-batch of raw rows (or their projections)."""
    if model.finalized:
        raise RuntimeError("model is finalized; training is closed")
    if projected is None:
        if batch is None or len(batch) == 0:
            raise ValueError("empty batch")
        projected = model.bank.project(batch)
    if projected.shape[0] == 0:
        raise ValueError("empty batch")
    loss, grads = batch_loss_and_grads(model.params, projected)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss at step {model.steps_taken}")
    sgd_update(model, grads)
    model.steps_taken += 1
    model.losses.append(loss)
    return loss


def finalize(model: ReprModel, refined_features: np.ndarray) -> ReprModel:
    """Fit one GDE per projection on the network features of the given rows."""
    X = np.asarray(refined_features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty matrix of rows to finalize on")
    model.gdes = fit_views(model.transform(X), model.shrinkage)
    return model


def repr_score(model: ReprModel, X: np.ndarray) -> np.ndarray:
    if not model.finalized:
        raise RuntimeError("model is not finalized")
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    scores = score_views(model.gdes, model.transform(X[None, :] if single else X))
    return float(scores[0]) if single else scores


# Checkpoints: a single .npz holding every array plus a JSON header.

def model_arrays(model: ReprModel, prefix: str = "") -> tuple[dict, dict]:
    arrays = {f"{prefix}bank": model.bank.matrices}
    for i, (p, v) in enumerate(zip(model.params, model.velocity)):
        arrays[f"{prefix}param_{i}"] = p
        arrays[f"{prefix}velocity_{i}"] = v
    if model.gdes is not None:
        for m, g in enumerate(model.gdes):
            arrays[f"{prefix}gde_{m}_mean"] = g.mean
            arrays[f"{prefix}gde_{m}_factor"] = g.covariance_factor
            arrays[f"{prefix}gde_{m}_scalars"] = np.array([g.log_det, g.shrinkage])
    meta = {
        "bank_seed": model.bank.seed,
        "n_params": len(model.params),
        "n_gdes": None if model.gdes is None else len(model.gdes),
        "learning_rate": model.learning_rate,
        "momentum": model.momentum,
        "weight_decay": model.weight_decay,
        "shrinkage": model.shrinkage,
        "steps_taken": model.steps_taken,
    }
    return arrays, meta


def model_from_arrays(arrays, meta: dict, prefix: str = "") -> ReprModel:
    n = meta["n_params"]
    gdes = None
    if meta["n_gdes"] is not None:
        gdes = []
        for m in range(meta["n_gdes"]):
            log_det, shrink = arrays[f"{prefix}gde_{m}_scalars"]
            gdes.append(GdeModel(arrays[f"{prefix}gde_{m}_mean"],
                                 arrays[f"{prefix}gde_{m}_factor"], float(log_det), float(shrink)))
    bank = np.array(arrays[f"{prefix}bank"])
    bank.setflags(write=False)
    return ReprModel(
        bank=TransformationBank(bank, meta["bank_seed"]),
        params=[np.array(arrays[f"{prefix}param_{i}"]) for i in range(n)],
        velocity=[np.array(arrays[f"{prefix}velocity_{i}"]) for i in range(n)],
        learning_rate=meta["learning_rate"],
        momentum=meta["momentum"],
        weight_decay=meta["weight_decay"],
        shrinkage=meta["shrinkage"],
        gdes=gdes,
        steps_taken=meta["steps_taken"],
    )


def save_model(model: ReprModel, path: str | Path) -> None:
    arrays, meta = model_arrays(model)
    meta["format"] = "stoc-repr"
    meta["version"] = CHECKPOINT_VERSION
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_model(path: str | Path) -> ReprModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != "stoc-repr" or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path} is not a version {CHECKPOINT_VERSION} representation checkpoint")
        return model_from_arrays({k: data[k] for k in data.files}, meta)


__all__ = [
    "LEAKY_SLOPE",
    "BATCH_ROWS",
    "DivergenceError",
    "ReprModel",
    "TransformationBank",
    "batch_loss_and_grads",
    "finalize",
    "forward",
    "init_params",
    "load_model",
    "make_bank",
    "make_model",
    "repr_score",
    "save_model",
    "sgd_update",
    "train_step",
]
