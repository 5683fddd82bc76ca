"""
Healthy-control preprocessing.

Confound regression (cubic age + linear ICV) and per-feature
standardisation. Both are fitted on healthy_train rows only and then applied
to every subject with the same coefficients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
import pandas as pd

from ..errors import DataError
from ..schemas import CohortLabel
from .cohort import Cohort

logger = logging.getLogger(__name__)

CONFOUND_COLUMNS = ("age", "icv")
DESIGN_WIDTH = 5  # [1, age, age^2, age^3, icv]


@dataclass(frozen=True)
class ConfoundFit:
    """OLS coefficients per feature plus the covariate scaling used in the design."""

    age_mean: float
    age_std: float
    icv_mean: float
    icv_std: float
    coefficients: Dict[str, np.ndarray]  # modality -> (5, P_m)

    def design(self, covariates: pd.DataFrame) -> np.ndarray:
        age = (covariates["age"].to_numpy(dtype=np.float64) - self.age_mean) / self.age_std
        icv = (covariates["icv"].to_numpy(dtype=np.float64) - self.icv_mean) / self.icv_std
        return np.column_stack([np.ones_like(age), age, age ** 2, age ** 3, icv])


@dataclass(frozen=True)
class PreprocessStats:
    """
    Everything needed to preprocess new subjects like the training cohort.

    ``mean``/``std`` hold per-feature healthy_train statistics (after
    deconfounding when ``confound`` is set).
    """

    mean: Dict[str, np.ndarray] = field(default_factory=dict)
    std: Dict[str, np.ndarray] = field(default_factory=dict)
    confound: Optional[ConfoundFit] = None

    def to_dict(self) -> dict:
        out = {
            "mean": {k: v.tolist() for k, v in self.mean.items()},
            "std": {k: v.tolist() for k, v in self.std.items()},
            "confound": None,
        }
        if self.confound is not None:
            c = self.confound
            out["confound"] = {
                "age_mean": c.age_mean,
                "age_std": c.age_std,
                "icv_mean": c.icv_mean,
                "icv_std": c.icv_std,
                "coefficients": {k: v.tolist() for k, v in c.coefficients.items()},
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PreprocessStats":
        confound = None
        if data.get("confound"):
            c = data["confound"]
            confound = ConfoundFit(
                age_mean=float(c["age_mean"]),
                age_std=float(c["age_std"]),
                icv_mean=float(c["icv_mean"]),
                icv_std=float(c["icv_std"]),
                coefficients={k: np.asarray(v, dtype=np.float64) for k, v in c["coefficients"].items()},
            )
        return cls(
            mean={k: np.asarray(v, dtype=np.float64) for k, v in data.get("mean", {}).items()},
            std={k: np.asarray(v, dtype=np.float64) for k, v in data.get("std", {}).items()},
            confound=confound,
        )


def _healthy_train(cohort: Cohort) -> np.ndarray:
    mask = cohort.mask(CohortLabel.HEALTHY_TRAIN)
    if not mask.any():
        raise DataError("No healthy_train subjects to fit preprocessing on")
    return mask


# ── Confound regression ──────────────────────────────────────────────

def fit_confounds(cohort: Cohort, covariates: Optional[pd.DataFrame] = None) -> ConfoundFit:
    """Fit per-feature OLS on [1, age, age^2, age^3, icv] over healthy_train rows."""
    covariates = cohort.covariates if covariates is None else covariates.reset_index(drop=True)
    if covariates is None:
        raise DataError("Deconfounding needs covariates")
    missing = [c for c in CONFOUND_COLUMNS if c not in covariates.columns]
    if missing:
        raise DataError(f"Covariates missing columns: {missing}")
    if len(covariates) != cohort.n_subjects:
        raise DataError(f"Covariates have {len(covariates)} rows, expected {cohort.n_subjects}")
    values = covariates[list(CONFOUND_COLUMNS)].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DataError("Covariates contain missing or non-finite values")

    mask = _healthy_train(cohort)
    train_cov = covariates[mask]
    age_std = float(train_cov["age"].std(ddof=0))
    icv_std = float(train_cov["icv"].std(ddof=0))
    fit = ConfoundFit(
        age_mean=float(train_cov["age"].mean()),
        age_std=age_std if age_std > 0 else 1.0,
        icv_mean=float(train_cov["icv"].mean()),
        icv_std=icv_std if icv_std > 0 else 1.0,
        coefficients={},
    )
    design = fit.design(train_cov)
    rank = np.linalg.matrix_rank(design)
    if rank < DESIGN_WIDTH:
        raise DataError(
            f"Confound design is rank deficient (rank {rank} < {DESIGN_WIDTH})",
            "covariates are degenerate on healthy_train",
        )
    coefficients = {}
    for name, x in cohort.modalities.items():
        coef, *_ = np.linalg.lstsq(design, x[mask], rcond=None)
        coefficients[name] = coef
    return replace(fit, coefficients=coefficients)


def apply_confounds(cohort: Cohort, fit: ConfoundFit, covariates: Optional[pd.DataFrame] = None) -> Cohort:
    covariates = cohort.covariates if covariates is None else covariates.reset_index(drop=True)
    if covariates is None:
        raise DataError("Deconfounding needs covariates")
    design = fit.design(covariates)
    return cohort.replace_modalities(
        {name: x - design @ fit.coefficients[name] for name, x in cohort.modalities.items()}
    )


def deconfound(
    cohort: Cohort,
    covariates: Optional[pd.DataFrame] = None,
) -> tuple[Cohort, PreprocessStats]:
    """
    Regress age (cubic) and ICV (linear) out of every feature.

    Coefficients are fitted on healthy_train; residuals replace the features
    of all subjects.

    Raises:
        DataError: Missing covariates or a rank-deficient design
    """
    fit = fit_confounds(cohort, covariates)
    logger.info(f"Confounds regressed out of {sum(cohort.n_features.values())} features")
    return apply_confounds(cohort, fit, covariates), PreprocessStats(confound=fit)


# ── Standardisation ──────────────────────────────────────────────────

def standardize(
    cohort: Cohort,
    stats: Optional[PreprocessStats] = None,
) -> tuple[Cohort, PreprocessStats]:
    """
    Scale each feature to healthy_train mean 0 / std 1.

    Args:
        cohort: Input cohort
        stats: Previously fitted statistics; fitted on healthy_train when absent

    Raises:
        DataError: Zero-variance feature, or no healthy_train rows when fitting
    """
    if stats is None or not stats.mean:
        mask = _healthy_train(cohort)
        mean = {name: x[mask].mean(axis=0) for name, x in cohort.modalities.items()}
        std = {name: x[mask].std(axis=0) for name, x in cohort.modalities.items()}
        for name, s in std.items():
            zero = np.flatnonzero(s <= 0.0)
            if zero.size:
                cols = [cohort.feature_names[name][j] for j in zero[:5]]
                raise DataError(f"Zero-variance features in '{name}': {cols}")
        confound = stats.confound if stats is not None else None
        stats = PreprocessStats(mean=mean, std=std, confound=confound)

    missing = [name for name in cohort.modality_names if name not in stats.mean]
    if missing:
        raise DataError(f"No standardisation statistics for modalities {missing}")
    for name, x in cohort.modalities.items():
        if stats.mean[name].shape != (x.shape[1],):
            raise DataError(
                f"Modality '{name}' has {x.shape[1]} features, statistics cover {stats.mean[name].shape[0]}"
            )
    scaled = {
        name: (x - stats.mean[name]) / stats.std[name]
        for name, x in cohort.modalities.items()
    }
    return cohort.replace_modalities(scaled), stats


def unstandardize(cohort: Cohort, stats: PreprocessStats) -> Cohort:
    return cohort.replace_modalities(
        {name: x * stats.std[name] + stats.mean[name] for name, x in cohort.modalities.items()}
    )


# ── Full pipeline ────────────────────────────────────────────────────

def fit_preprocessing(cohort: Cohort, use_confounds: bool = False) -> tuple[Cohort, PreprocessStats]:
    """Deconfound (optionally) then standardise, fitting both on healthy_train."""
    confound = None
    if use_confounds:
        cohort, partial = deconfound(cohort)
        confound = partial.confound
    cohort, stats = standardize(cohort, PreprocessStats(confound=confound))
    return cohort, stats


def apply_preprocessing(cohort: Cohort, stats: PreprocessStats) -> Cohort:
    """Apply stored statistics to a new cohort (no refitting)."""
    if stats.confound is not None:
        cohort = apply_confounds(cohort, stats.confound)
    cohort, _ = standardize(cohort, stats)
    return cohort
