"""Experiment configuration, dataset registry and on-disk outputs."""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .data import DatasetDescriptor, LabeledTable, fit_scaler, synth_blobs
from .pipeline import MODES, REPRESENTATIONS, StocConfig, fit_stoc_fixed, gamma_for_ratio
from .protocol import (
    MetricsReport,
    aggregate,
    read_runs_csv,
    run_protocol,
    write_curves_csv,
    write_runs_csv,
)
from .refine import RefinementConfig


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class DatasetDefaults:
    descriptor: DatasetDescriptor | None
    n_transforms: int
    steps: int
    max_ratio: float = 0.10


# CSV conversions of the benchmark files: one header row, a "label" column.
REGISTRY: dict[str, DatasetDefaults] = {
    "kdd": DatasetDefaults(
        DatasetDescriptor("kdd", "kddcup.csv", "label", ("normal.", "normal")), 32, 1 << 10),
    "kdd-rev": DatasetDefaults(
        DatasetDescriptor("kdd-rev", "kddcup.csv", "label", ("normal.", "normal"),
                          reverse_labels=True), 32, 1 << 10, max_ratio=0.025),
    "thyroid": DatasetDefaults(
        DatasetDescriptor("thyroid", "thyroid.csv", "label", ("1",)), 256, 1 << 16),
    "arrhythmia": DatasetDefaults(
        DatasetDescriptor("arrhythmia", "arrhythmia.csv", "label", ("1",)), 256, 1 << 16),
    "synth": DatasetDefaults(None, 32, 1 << 10),
}
BENCHMARK_DATASETS = ("kdd", "kdd-rev", "thyroid", "arrhythmia")


@dataclass
class ExperimentConfig:
    dataset: str = "synth"
    data_path: str | None = None
    label_column: str | None = None
    positive_values: list[str] | None = None
    reverse_labels: bool | None = None
    ratios: list[float] = field(default_factory=lambda: [0.0, 0.025, 0.05, 0.075, 0.1])
    gamma: float | str = "auto"
    k: int = 5
    modes: list[str] = field(default_factory=lambda: ["baseline", "stoc-full"])
    representation: str = "goad"
    n_transforms: int | None = None
    projection_dims: int = 32
    steps: int | None = None
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 3e-5
    splits: int = 5
    seeds: int = 5
    scale_factor: float = 1.0
    out: str = "results"
    workers: int | None = None  # None: one per available core
    seed: int = 0
    checkpoints: bool = False
    synth: dict = field(default_factory=lambda: {
        "n_normal": 2000, "n_anomaly": 200, "dims": 8, "separation": 6.0, "seed": 0})

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{path} is not valid JSON: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def defaults(self) -> DatasetDefaults | None:
        return REGISTRY.get(self.dataset)

    def resolved_steps(self) -> int:
        steps = self.steps if self.steps is not None else self.defaults.steps
        return max(1, int(round(steps * self.scale_factor)))

    def resolved_workers(self) -> int:
        return self.workers if self.workers is not None else (os.cpu_count() or 1)

    def resolved_transforms(self) -> int:
        return self.n_transforms if self.n_transforms is not None else self.defaults.n_transforms

    def validate(self) -> "ExperimentConfig":
        if self.dataset not in REGISTRY and self.data_path is None:
            raise ConfigError("dataset", f"unknown dataset {self.dataset!r} and no data_path given")
        if self.dataset not in REGISTRY and (self.label_column is None or not self.positive_values):
            raise ConfigError("label_column", "custom datasets need label_column and positive_values")
        if not self.ratios:
            raise ConfigError("ratios", "at least one ratio is required")
        max_ratio = self.defaults.max_ratio if self.defaults else 0.10
        for r in self.ratios:
            if not isinstance(r, (int, float)) or not 0.0 <= r <= max_ratio:
                raise ConfigError("ratios", f"{r} outside [0, {max_ratio}]")
        if self.gamma != "auto":
            if isinstance(self.gamma, bool) or not isinstance(self.gamma, (int, float)) \
                    or not 0.0 <= self.gamma <= 1.0:
                raise ConfigError("gamma", f"must be 'auto' or a fraction in [0, 1], got {self.gamma!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError("k", f"must be a positive integer, got {self.k!r}")
        if not self.modes or any(m not in MODES for m in self.modes):
            raise ConfigError("modes", f"each mode must be one of {MODES}")
        if self.representation not in REPRESENTATIONS:
            raise ConfigError("representation", f"must be one of {REPRESENTATIONS}")
        if self.representation == "raw" and "stoc-full" in self.modes:
            raise ConfigError("modes", "stoc-full needs representation 'goad'")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError("workers", f"must be a positive integer, got {self.workers!r}")
        for name in ("splits", "seeds", "projection_dims"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        for name in ("n_transforms", "steps"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        if not (isinstance(self.scale_factor, (int, float)) and 0.0 < self.scale_factor <= 1.0):
            raise ConfigError("scale_factor", f"must be in (0, 1], got {self.scale_factor!r}")
        for name in ("learning_rate", "momentum", "weight_decay"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v < 0 or not math.isfinite(v):
                raise ConfigError(name, f"must be a non-negative number, got {v!r}")
        return self

    def descriptor(self) -> DatasetDescriptor | None:
        base = self.defaults.descriptor if self.defaults else None
        if base is None and self.dataset == "synth" and self.data_path is None:
            return None
        if base is None:
            base = DatasetDescriptor(self.dataset, "", self.label_column or "label",
                                     tuple(self.positive_values or ()))
        path = self.data_path or os.environ.get("STOC_DATA_DIR", ".")
        if Path(path).is_dir():
            path = str(Path(path) / (base.path or f"{self.dataset}.csv"))
        return dataclasses.replace(
            base,
            path=path,
            label_column=self.label_column or base.label_column,
            positive_values=tuple(self.positive_values) if self.positive_values else base.positive_values,
            reverse_labels=base.reverse_labels if self.reverse_labels is None else self.reverse_labels,
        )

    def load_table(self) -> LabeledTable:
        desc = self.descriptor()
        if desc is None:
            s = self.synth
            return synth_blobs(s["n_normal"], s["n_anomaly"], s["dims"], s["separation"], s["seed"])
        if not Path(desc.path).is_file():
            raise ConfigError("data_path", f"dataset file not found: {desc.path}")
        return desc.load()

    def stoc_template(self) -> StocConfig:
        return StocConfig(
            mode=self.modes[0] if self.representation == "goad" else "baseline",
            representation=self.representation,
            refinement=RefinementConfig(self.k, 0.0 if self.gamma == "auto" else float(self.gamma)),
            n_transforms=self.resolved_transforms(),
            projection_dims=self.projection_dims,
            steps=self.resolved_steps(),
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            master_seed=self.seed,
        )


def config_hash(config: ExperimentConfig) -> str:
    canon = json.dumps(_result_relevant(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _result_relevant(config: ExperimentConfig) -> dict:
    d = config.to_dict()
    for key in ("out", "workers", "checkpoints"):
        d.pop(key)
    return d


def manifest(config: ExperimentConfig) -> dict:
    return {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "stoc_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "resolved": {
            "steps": config.resolved_steps(),
            "n_transforms": config.resolved_transforms(),
        },
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Run the protocol and write report.json, runs.csv, curves.csv, manifest.json."""
    config.validate()
    table = config.load_table()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = None
    if config.checkpoints:
        ckpt = out / "checkpoints"
        ckpt.mkdir(exist_ok=True)
    report = run_protocol(
        table, config.ratios, config.modes, config.stoc_template(),
        splits=config.splits, seeds=config.seeds, master_seed=config.seed,
        gamma=config.gamma, workers=config.resolved_workers(),
        checkpoint_dir=None if ckpt is None else str(ckpt),
    )
    write_outputs(report, out)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest(config), fh, indent=2)
    return report


def write_outputs(report: MetricsReport, out: Path) -> None:
    write_runs_csv(report.runs, out / "runs.csv")
    write_curves_csv(report.aggregates, out / "curves.csv")
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, allow_nan=True)


def reaggregate(out: str | Path) -> MetricsReport:
    out = Path(out)
    runs = read_runs_csv(out / "runs.csv")
    report = MetricsReport(runs, aggregate(runs))
    write_curves_csv(report.aggregates, out / "curves.csv")
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, allow_nan=True)
    return report


def refine_only(config: ExperimentConfig, assumed_ratio: float | None = None) -> Path:
    """Refine every row of the dataset once and write per-row verdicts.

    Writes ``refined.csv`` (row, verdict, fold), ``rejected.txt`` (one
    rejected row index per line) and ``thresholds.json``.
    Labels are not read.
    """
    config.validate()
    table = config.load_table()
    X = fit_scaler(table.features).transform(table.features)
    if config.gamma == "auto":
        ratio = assumed_ratio if assumed_ratio is not None else max(config.ratios)
        gamma = gamma_for_ratio(ratio)
    else:
        gamma = float(config.gamma)
    template = config.stoc_template()
    stoc_config = dataclasses.replace(
        template, mode="stoc-fixed",
        refinement=RefinementConfig(config.k, gamma, partition_seed=config.seed),
    )
    pipe = fit_stoc_fixed(X, stoc_config)
    refined = pipe.refined
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "refined.csv"
    with open(path, "w") as fh:
        fh.write("row,verdict,fold\n")
        for i, (label, fold) in enumerate(zip(refined.pseudo_labels, refined.fold_assignment)):
            fh.write(f"{i},{'rejected' if label else 'kept'},{fold}\n")
    with open(out / "rejected.txt", "w") as fh:
        fh.writelines(f"{i}\n" for i in refined.rejected_indices)
    with open(out / "thresholds.json", "w") as fh:
        json.dump({
            "gamma": gamma,
            "k": config.k,
            "thresholds": [float(t) for t in refined.thresholds],
            "kept": int(refined.kept_indices.size),
            "rejected": int(refined.pseudo_labels.sum()),
        }, fh, indent=2)
    return path
