"""Command-line front end.

Subcommands::

    stoc run          --dataset thyroid --ratios 0,0.05,0.1 --modes baseline,stoc-full
    stoc refine-only  --dataset synth --representation raw --gamma 0.2
    stoc validate     --config experiment.json
    stoc report       --out results/

A JSON file given with ``--config`` supplies defaults; command-line flags
override it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiment import (
    ConfigError,
    ExperimentConfig,
    reaggregate,
    refine_only,
    run_experiment,
)
from .data import DataError

log = logging.getLogger("stoc")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _gamma(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be 'auto' or a number, got {text!r}") from None


# flag name -> ExperimentConfig field
_FLAGS = {
    "dataset": "dataset",
    "data_path": "data_path",
    "label_column": "label_column",
    "positive_values": "positive_values",
    "ratios": "ratios",
    "gamma": "gamma",
    "k": "k",
    "modes": "modes",
    "representation": "representation",
    "n_transforms": "n_transforms",
    "steps": "steps",
    "splits": "splits",
    "seeds": "seeds",
    "scale_factor": "scale_factor",
    "out": "out",
    "workers": "workers",
    "seed": "seed",
    "checkpoints": "checkpoints",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    # every default is None so an absent flag never overrides the config file
    p.add_argument("--config", help="JSON experiment file; flags override its values")
    p.add_argument("--dataset", help="kdd, kdd-rev, thyroid, arrhythmia, synth, or a custom name")
    p.add_argument("--data-path", help="CSV file, or a directory holding the registry file names")
    p.add_argument("--label-column", help="label column for custom datasets")
    p.add_argument("--positive-values", type=_names, help="comma-separated anomaly label values")
    p.add_argument("--ratios", type=_floats, help="comma-separated contamination ratios")
    p.add_argument("--gamma", type=_gamma, help="'auto' (twice the ratio) or a fixed fraction")
    p.add_argument("--k", type=int, help="number of refinement folds")
    p.add_argument("--modes", type=_names, help="comma-separated: baseline, stoc-fixed, stoc-full")
    p.add_argument("--representation", choices=("goad", "raw"))
    p.add_argument("--n-transforms", type=int, help="override the per-dataset transformation count")
    p.add_argument("--steps", type=int, help="override the per-dataset step budget")
    p.add_argument("--splits", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--scale-factor", type=float, help="multiplies step budgets, in (0, 1]")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="parallel runs (default: available cores)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--checkpoints", action="store_true", default=None,
                   help="save every fitted pipeline under OUT/checkpoints/")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stoc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the evaluation protocol and write reports")
    _add_config_flags(p)

    p = sub.add_parser("refine-only", help="refine a dataset once and write per-row verdicts")
    _add_config_flags(p)
    p.add_argument("--assumed-ratio", type=float,
                   help="contamination assumed by --gamma auto (default: largest ratio)")

    p = sub.add_parser("validate", help="check a configuration without running it")
    _add_config_flags(p)

    p = sub.add_parser("report", help="re-aggregate OUT/runs.csv into report.json and curves.csv")
    p.add_argument("--out", required=True)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    # refine-only always runs the fixed-representation refinement
    base = {"modes": ["stoc-fixed"]} if args.command == "refine-only" else {}
    if args.config:
        with open(args.config) as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{args.config} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be a JSON object")
        base.update(loaded)
    for flag, name in _FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[name] = value
    return ExperimentConfig.from_dict(base).validate()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            report = reaggregate(args.out)
            _summarize(report)
            return 0
        config = config_from_args(args)
        if args.command == "validate":
            print(f"ok: {config.dataset}, {len(config.ratios)} ratio(s), "
                  f"{len(config.modes)} mode(s), {config.splits * config.seeds} runs each")
            return 0
        if args.command == "refine-only":
            path = refine_only(config, args.assumed_ratio)
            print(f"wrote {path}")
            return 0
        report = run_experiment(config)
        _summarize(report)
        return 0 if not report.failed else 3
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def _summarize(report) -> None:
    for row in report.aggregates:
        print(f"{row['dataset']:>12} ratio={row['ratio']:<6g} {row['mode']:<10} "
              f"F1 {row['f1_mean']:6.2f} +- {row['f1_std']:5.2f}  "
              f"AUC {row['auc_mean']:6.2f}  AP {row['ap_mean']:6.2f}  "
              f"(n={row['n_runs']}, failed={row['n_failed']})")
    if report.failed:
        print(f"warning: {len(report.failed)} run(s) failed; see runs.csv", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
