"""Self-trained one-class classification for unsupervised tabular anomaly detection."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    DataError,
    ExperimentSplit,
    LabeledTable,
    load_csv,
    make_split,
    standardize,
    synth_blobs,
)
from .occ import GdeModel, gde_fit, gde_score  # noqa: E402
from .pipeline import (  # noqa: E402
    StocConfig,
    StocPipeline,
    fit,
    fit_baseline,
    fit_stoc_fixed,
    fit_stoc_full,
    gamma_for_ratio,
    load_pipeline,
    predict,
    save_pipeline,
)
from .refine import RefinedSet, RefinementConfig, refine_data  # noqa: E402

__all__ = [
    "DataError",
    "ExperimentSplit",
    "GdeModel",
    "LabeledTable",
    "RefinedSet",
    "RefinementConfig",
    "StocConfig",
    "StocPipeline",
    "fit",
    "fit_baseline",
    "fit_stoc_fixed",
    "fit_stoc_full",
    "gamma_for_ratio",
    "gde_fit",
    "gde_score",
    "load_csv",
    "load_pipeline",
    "make_split",
    "predict",
    "refine_data",
    "save_pipeline",
    "standardize",
    "synth_blobs",
]
