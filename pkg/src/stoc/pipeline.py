"""Self-trained one-class classification (STOC) pipelines.

Three ways to fit a scorer on unlabeled, possibly contaminated rows:

``baseline``
    train the representation on every row, fit the final GDE(s) on every row.
``stoc-fixed``
    keep the representation fixed, refine the rows once, fit the final
    GDE(s) on the rows that survive.
``stoc-full``
    interleave representation training with refinement on an epoch
    schedule; the training pool is replaced by the surviving rows at each
    scheduled epoch. A last refinement picks the rows for the final GDEs.

The representation is either the raw (already standardized) features or a
trained transformation-prediction network (:mod:`stoc.goad`).
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import goad
from .occ import DEFAULT_SHRINKAGE, GdeModel, gde_fit, gde_score
from .refine import RefinementConfig, RefinedSet, exclusion_rates, refine_data

log = logging.getLogger(__name__)

MODES = ("baseline", "stoc-fixed", "stoc-full")
REPRESENTATIONS = ("goad", "raw")
DEFAULT_SCHEDULE = (1, 2, 5, 10, 20, 50, 100, 500)
CHECKPOINT_VERSION = 1
# keep the projected training set in memory below this many float64 values
PROJECTION_CACHE_LIMIT = 1 << 25


def gamma_for_ratio(assumed_ratio: float) -> float:
    """Twice the assumed contamination; 0.005 when none is assumed."""
    if assumed_ratio < 0:
        raise ValueError("assumed_ratio must be non-negative")
    return 0.005 if assumed_ratio == 0 else min(1.0, 2.0 * assumed_ratio)


@dataclass(frozen=True)
class StocConfig:
    mode: str = "stoc-full"
    representation: str = "goad"
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    n_transforms: int = 32
    projection_dims: int = 32
    steps: int = 1024
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 3e-5
    batch_rows: int = goad.BATCH_ROWS
    schedule: tuple[int, ...] = DEFAULT_SCHEDULE
    repeat_every: int | None = 500
    shrinkage: float = DEFAULT_SHRINKAGE
    master_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}")
        if self.mode == "stoc-full" and self.representation != "goad":
            raise ValueError("stoc-full needs a trainable representation")
        for name in ("n_transforms", "projection_dims", "batch_rows"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if any(e < 1 for e in self.schedule):
            raise ValueError("schedule epochs start at 1")
        if self.repeat_every is not None and self.repeat_every < 1:
            raise ValueError("repeat_every must be positive")
        object.__setattr__(self, "schedule", tuple(sorted(set(int(e) for e in self.schedule))))

    def seeds(self) -> dict[str, int]:
        """Independent streams for the bank, initialization and shuffling."""
        children = np.random.SeedSequence(self.master_seed).spawn(3)
        keys = ("bank", "init", "shuffle")
        return {k: int(c.generate_state(1)[0]) for k, c in zip(keys, children)}

    def is_refinement_epoch(self, epoch: int) -> bool:
        if epoch in self.schedule:
            return True
        if self.repeat_every is None or not self.schedule:
            return False
        last = self.schedule[-1]
        return epoch > last and (epoch - last) % self.repeat_every == 0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schedule"] = list(self.schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StocConfig":
        d = dict(d)
        d["refinement"] = RefinementConfig(**d.get("refinement", {}))
        d["schedule"] = tuple(d.get("schedule", DEFAULT_SCHEDULE))
        return cls(**d)


@dataclass
class StocPipeline:
    config: StocConfig
    model: goad.ReprModel | None = None
    final_gde: GdeModel | None = None
    extractor: Callable[[np.ndarray], np.ndarray] | None = None
    refined: RefinedSet | None = None
    history: list[dict] = field(default_factory=list)

    @property
    def fitted(self) -> bool:
        return self.final_gde is not None or (self.model is not None and self.model.finalized)

    def predict(self, queries: np.ndarray) -> np.ndarray:
        """Anomaly score per row; higher is more anomalous."""
        if not self.fitted:
            raise RuntimeError("pipeline is not fitted")
        Q = np.asarray(queries, dtype=np.float64)
        if Q.ndim != 2:
            raise ValueError("queries must be a 2-D matrix")
        if self.model is not None:
            if Q.shape[1] != self.model.bank.in_dims:
                raise ValueError(f"expected {self.model.bank.in_dims} columns, got {Q.shape[1]}")
            return goad.repr_score(self.model, Q)
        feats = Q if self.extractor is None else self.extractor(Q)
        return gde_score(self.final_gde, feats)


def _record(history: list, refined: RefinedSet, stage: str, epoch, hidden_labels) -> None:
    entry = {
        "stage": stage,
        "epoch": epoch,
        "kept": int(refined.kept_indices.size),
        "rejected": int(refined.pseudo_labels.sum()),
        "thresholds": [float(t) for t in refined.thresholds],
    }
    if hidden_labels is not None:
        anom, norm = exclusion_rates(refined, hidden_labels)
        entry["excluded_anomaly_fraction"] = anom
        entry["excluded_normal_fraction"] = norm
    history.append(entry)


def _new_model(X: np.ndarray, config: StocConfig) -> goad.ReprModel:
    seeds = config.seeds()
    return goad.make_model(
        X.shape[1],
        M=config.n_transforms,
        r=config.projection_dims,
        bank_seed=seeds["bank"],
        init_seed=seeds["init"],
        learning_rate=config.learning_rate,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        shrinkage=config.shrinkage,
    )


def _train(model: goad.ReprModel, X: np.ndarray, config: StocConfig,
           on_epoch: Callable[[int], np.ndarray | None] | None = None) -> None:
    """Run ``config.steps`` optimizer steps, one shuffled pass over the pool per epoch.

    ``on_epoch(epoch)`` is called before each epoch and may return a new pool
    of row indices.
    """
    n = X.shape[0]
    M, r = model.n_transforms, model.bank.out_dims
    cache = model.bank.project(X) if n * M * r <= PROJECTION_CACHE_LIMIT else None
    rng = np.random.default_rng(config.seeds()["shuffle"])
    pool = np.arange(n)
    step = epoch = 0
    while step < config.steps:
        epoch += 1
        if on_epoch is not None:
            new_pool = on_epoch(epoch)
            if new_pool is not None:
                pool = new_pool
        order = rng.permutation(pool)
        for start in range(0, order.size, config.batch_rows):
            if step >= config.steps:
                break
            idx = order[start:start + config.batch_rows]
            projected = cache[idx] if cache is not None else model.bank.project(X[idx])
            goad.train_step(model, projected=projected)
            step += 1


def _check_train(train) -> np.ndarray:
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("train must be a matrix with at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("train contains non-finite values")
    return X


def fit_baseline(train: np.ndarray, config: StocConfig) -> StocPipeline:
    """No refinement: representation and final scorer both see every row."""
    X = _check_train(train)
    pipe = StocPipeline(config)
    if config.representation == "raw":
        pipe.final_gde = gde_fit(X, config.shrinkage)
        return pipe
    model = _new_model(X, config)
    _train(model, X, config)
    pipe.model = goad.finalize(model, X)
    return pipe


def fit_stoc_fixed(train: np.ndarray, config: StocConfig, extractor=None,
                   hidden_labels=None) -> StocPipeline:
    """Refine once on fixed features, then fit the final scorer on kept rows.

    ``extractor`` may be a trained :class:`goad.ReprModel` (its GDEs are
    refitted), any callable returning an ``(n, dim)`` feature matrix, or
    ``None``: raw features for ``representation="raw"``, otherwise a
    representation trained on every row first.
    """
    X = _check_train(train)
    pipe = StocPipeline(config)
    if extractor is None and config.representation == "goad":
        extractor = _new_model(X, config)
        _train(extractor, X, config)
    if isinstance(extractor, goad.ReprModel):
        extractor = copy.deepcopy(extractor)
        extractor.gdes = None
        refined = refine_data(X, extractor.transform, config.refinement, call_index=0)
        _record(pipe.history, refined, "final", None, hidden_labels)
        pipe.model = goad.finalize(extractor, X[_enough(refined, X)])
    else:
        refined = refine_data(X, extractor, config.refinement, call_index=0)
        _record(pipe.history, refined, "final", None, hidden_labels)
        kept = X[_enough(refined, X)]
        pipe.extractor = extractor
        pipe.final_gde = gde_fit(kept if extractor is None else extractor(kept), config.shrinkage)
    pipe.refined = refined
    return pipe


def _enough(refined: RefinedSet, X: np.ndarray) -> np.ndarray:
    if refined.kept_indices.size < 2:
        raise ValueError(
            f"refinement kept {refined.kept_indices.size} of {X.shape[0]} rows; "
            "too few to fit a density (lower gamma)"
        )
    return refined.kept_indices


def fit_stoc_full(train: np.ndarray, config: StocConfig, hidden_labels=None) -> StocPipeline:
    """Self-training: refinement at scheduled epochs, warm-started network."""
    X = _check_train(train)
    if config.representation != "goad":
        raise ValueError("stoc-full needs representation='goad'")
    pipe = StocPipeline(config)
    model = _new_model(X, config)
    calls = 0

    def on_epoch(epoch: int):
        nonlocal calls
        if not config.is_refinement_epoch(epoch):
            return None
        refined = refine_data(X, model.transform, config.refinement, call_index=calls)
        calls += 1
        _record(pipe.history, refined, "scheduled", epoch, hidden_labels)
        log.debug("epoch %d: kept %d/%d rows", epoch, refined.kept_indices.size, X.shape[0])
        return _enough(refined, X)

    _train(model, X, config, on_epoch)
    refined = refine_data(X, model.transform, config.refinement, call_index=calls)
    _record(pipe.history, refined, "final", None, hidden_labels)
    pipe.model = goad.finalize(model, X[_enough(refined, X)])
    pipe.refined = refined
    return pipe


def fit(train: np.ndarray, config: StocConfig, hidden_labels=None) -> StocPipeline:
    """Dispatch on ``config.mode``."""
    if config.mode == "baseline":
        return fit_baseline(train, config)
    if config.mode == "stoc-fixed":
        return fit_stoc_fixed(train, config, hidden_labels=hidden_labels)
    return fit_stoc_full(train, config, hidden_labels=hidden_labels)


def predict(pipeline: StocPipeline, queries: np.ndarray) -> np.ndarray:
    return pipeline.predict(queries)


def save_pipeline(pipeline: StocPipeline, path: str | Path) -> None:
    if not pipeline.fitted:
        raise RuntimeError("only fitted pipelines can be saved")
    if pipeline.extractor is not None:
        raise ValueError("pipelines with a custom extractor cannot be serialized")
    arrays, meta = {}, {
        "format": "stoc-pipeline",
        "version": CHECKPOINT_VERSION,
        "config": pipeline.config.to_dict(),
        "history": pipeline.history,
        "repr": None,
    }
    if pipeline.model is not None:
        arrays, meta["repr"] = goad.model_arrays(pipeline.model, prefix="repr_")
    if pipeline.final_gde is not None:
        g = pipeline.final_gde
        arrays["final_mean"] = g.mean
        arrays["final_factor"] = g.covariance_factor
        arrays["final_scalars"] = np.array([g.log_det, g.shrinkage])
    if pipeline.refined is not None:
        arrays["refined_pseudo_labels"] = pipeline.refined.pseudo_labels
        arrays["refined_thresholds"] = pipeline.refined.thresholds
        arrays["refined_folds"] = pipeline.refined.fold_assignment
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_pipeline(path: str | Path) -> StocPipeline:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != "stoc-pipeline" or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path} is not a version {CHECKPOINT_VERSION} pipeline checkpoint")
        arrays = {k: data[k] for k in data.files}
    pipe = StocPipeline(StocConfig.from_dict(meta["config"]), history=meta["history"])
    if meta["repr"] is not None:
        pipe.model = goad.model_from_arrays(arrays, meta["repr"], prefix="repr_")
    if "final_mean" in arrays:
        log_det, shrink = arrays["final_scalars"]
        pipe.final_gde = GdeModel(arrays["final_mean"], arrays["final_factor"],
                                  float(log_det), float(shrink))
    if "refined_pseudo_labels" in arrays:
        pseudo = arrays["refined_pseudo_labels"]
        pipe.refined = RefinedSet(np.flatnonzero(pseudo == 0), pseudo,
                                  arrays["refined_thresholds"], arrays["refined_folds"])
    return pipe
