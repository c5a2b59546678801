"""Repeated-split evaluation protocol.

Every (ratio, mode, split, seed) combination is one run: build the split,
standardize with training statistics, fit, score the test rows, compute
metrics. Runs are independent and may execute in a process pool; results
are always assembled in the same order, so output does not depend on the
worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .data import LabeledTable, make_split, standardize
from .pipeline import StocConfig, fit, gamma_for_ratio, save_pipeline

log = logging.getLogger(__name__)

METRIC_NAMES = ("f1", "auc", "ap", "recall_p70", "recall_p90")
RUN_COLUMNS = (
    "dataset", "ratio", "mode", "representation", "split", "seed_index",
    "split_seed", "contamination_seed", "model_seed", "gamma", "k",
    "n_train", "n_test", "f1", "auc", "ap", "recall_p70", "recall_p90",
    "excluded_anomaly_fraction", "excluded_normal_fraction", "error",
)
CURVE_COLUMNS = ("dataset", "ratio", "mode", "n_runs", "n_failed") + tuple(
    f"{m}_{stat}" for m in METRIC_NAMES for stat in ("mean", "std")
)


def derive_seed(*parts: int) -> int:
    """Deterministic 32-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class RunRecord:
    dataset: str
    ratio: float
    mode: str
    representation: str
    split: int
    seed_index: int
    split_seed: int
    contamination_seed: int
    model_seed: int
    gamma: float
    k: int
    n_train: int = 0
    n_test: int = 0
    f1: float = math.nan
    auc: float = math.nan
    ap: float = math.nan
    recall_p70: float = math.nan
    recall_p90: float = math.nan
    excluded_anomaly_fraction: float = math.nan
    excluded_normal_fraction: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class MetricsReport:
    runs: list[RunRecord]
    aggregates: list[dict] = field(default_factory=list)

    @property
    def failed(self) -> list[RunRecord]:
        return [r for r in self.runs if not r.ok]

    def aggregate(self, ratio: float, mode: str) -> dict:
        for row in self.aggregates:
            if row["ratio"] == ratio and row["mode"] == mode:
                return row
        raise KeyError((ratio, mode))

    def to_dict(self) -> dict:
        return {
            "runs": [dataclasses.asdict(r) for r in self.runs],
            "aggregates": self.aggregates,
            "failures": len(self.failed),
            "warning": (f"{len(self.failed)} run(s) failed and were excluded from aggregates"
                        if self.failed else None),
        }


def aggregate(runs: Sequence[RunRecord]) -> list[dict]:
    """Mean and sample standard deviation per (ratio, mode), failures excluded."""
    keys = []
    for r in runs:
        if (r.ratio, r.mode) not in keys:
            keys.append((r.ratio, r.mode))
    rows = []
    for ratio, mode in keys:
        group = [r for r in runs if r.ratio == ratio and r.mode == mode]
        good = [r for r in group if r.ok]
        row = {"dataset": group[0].dataset, "ratio": ratio, "mode": mode,
               "n_runs": len(good), "n_failed": len(group) - len(good)}
        for name in METRIC_NAMES:
            vals = np.array([getattr(r, name) for r in good], dtype=np.float64)
            row[f"{name}_mean"] = float(vals.mean()) if vals.size else math.nan
            row[f"{name}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else math.nan)
        rows.append(row)
    return rows


@dataclass(frozen=True)
class RunSpec:
    ratio: float
    mode: str
    split: int
    seed_index: int
    split_seed: int
    contamination_seed: int
    model_seed: int
    gamma: float


def plan_runs(ratios: Iterable[float], modes: Iterable[str], splits: int, seeds: int,
              master_seed: int = 0, gamma: float | str = "auto") -> list[RunSpec]:
    specs = []
    for ratio in ratios:
        g = gamma_for_ratio(ratio) if gamma == "auto" else float(gamma)
        for mode in modes:
            for split in range(splits):
                for seed_index in range(seeds):
                    specs.append(RunSpec(
                        ratio=float(ratio), mode=mode, split=split, seed_index=seed_index,
                        split_seed=derive_seed(master_seed, split, 0),
                        contamination_seed=derive_seed(master_seed, split, 1),
                        model_seed=derive_seed(master_seed, split, seed_index, 2),
                        gamma=g,
                    ))
    return specs


def execute_run(table: LabeledTable, spec: RunSpec, template: StocConfig,
                checkpoint_dir: str | None = None) -> RunRecord:
    rec = RunRecord(
        dataset=table.name, ratio=spec.ratio, mode=spec.mode,
        representation=template.representation, split=spec.split,
        seed_index=spec.seed_index, split_seed=spec.split_seed,
        contamination_seed=spec.contamination_seed, model_seed=spec.model_seed,
        gamma=spec.gamma, k=template.refinement.ensemble_count,
    )
    try:
        split = make_split(table, spec.ratio, spec.split_seed, spec.contamination_seed)
        train, test, _ = standardize(split.train_features, split.test_features)
        config = dataclasses.replace(
            template,
            mode=spec.mode,
            master_seed=spec.model_seed,
            refinement=dataclasses.replace(
                template.refinement, gamma=spec.gamma, partition_seed=spec.model_seed),
        )
        pipe = fit(train, config, hidden_labels=split.train_true_labels)
        scores = pipe.predict(test)
        y = split.test_labels
        rec.n_train, rec.n_test = train.shape[0], test.shape[0]
        rec.f1 = metrics.f1_at_ratio(scores, y)
        rec.auc = metrics.auc(scores, y)
        rec.ap = metrics.ap(*metrics.minority_positive(scores, y))
        rec.recall_p70 = metrics.recall_at_precision(scores, y, 70)
        rec.recall_p90 = metrics.recall_at_precision(scores, y, 90)
        if pipe.history:
            final = pipe.history[-1]
            rec.excluded_anomaly_fraction = final.get("excluded_anomaly_fraction", math.nan)
            rec.excluded_normal_fraction = final.get("excluded_normal_fraction", math.nan)
        if checkpoint_dir is not None:
            name = f"{table.name}_r{spec.ratio:g}_{spec.mode}_s{spec.split}_m{spec.seed_index}.npz"
            save_pipeline(pipe, Path(checkpoint_dir) / name)
    except Exception as exc:  # recorded per run, excluded from aggregates
        log.warning("run %s failed: %s", spec, exc)
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _execute_star(args):
    return execute_run(*args)


def run_protocol(table: LabeledTable, ratios: Sequence[float], modes: Sequence[str],
                 template: StocConfig, splits: int = 5, seeds: int = 5,
                 master_seed: int = 0, gamma: float | str = "auto", workers: int = 1,
                 checkpoint_dir: str | None = None) -> MetricsReport:
    """Run the full (ratio x mode x split x seed) grid and aggregate."""
    specs = plan_runs(ratios, modes, splits, seeds, master_seed, gamma)
    jobs = [(table, spec, template, checkpoint_dir) for spec in specs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_execute_star, jobs))
    else:
        runs = [_execute_star(job) for job in jobs]
    return MetricsReport(runs, aggregate(runs))


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_runs_csv(runs: Sequence[RunRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in runs:
            w.writerow([_fmt(getattr(r, c)) for c in RUN_COLUMNS])


def read_runs_csv(path: str | Path) -> list[RunRecord]:
    types = {f.name: f.type for f in dataclasses.fields(RunRecord)}
    runs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for c in RUN_COLUMNS:
                t = types[c]
                if t in ("int", int):
                    kw[c] = int(row[c])
                elif t in ("float", float):
                    kw[c] = float(row[c])
                else:
                    kw[c] = row[c]
            runs.append(RunRecord(**kw))
    return runs


def write_curves_csv(aggregates: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in aggregates:
            w.writerow([_fmt(row[c]) for c in CURVE_COLUMNS])
