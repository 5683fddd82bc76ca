"""
Cohort data: synthetic generation, CSV ingestion and healthy-control
preprocessing.
"""

from .cohort import Cohort, LABEL_VALUES
from .synthetic import generate_synthetic, generate_loadings, analytic_shift
from .preprocess import (
    ConfoundFit,
    PreprocessStats,
    deconfound,
    fit_confounds,
    apply_confounds,
    standardize,
    unstandardize,
    fit_preprocessing,
    apply_preprocessing,
)
from .io import IngestReport, load_csv, save_csv, load_cohort_dir, write_provenance

__all__ = [
    "Cohort",
    "LABEL_VALUES",
    "generate_synthetic",
    "generate_loadings",
    "analytic_shift",
    "ConfoundFit",
    "PreprocessStats",
    "deconfound",
    "fit_confounds",
    "apply_confounds",
    "standardize",
    "unstandardize",
    "fit_preprocessing",
    "apply_preprocessing",
    "IngestReport",
    "load_csv",
    "save_csv",
    "load_cohort_dir",
    "write_provenance",
]
