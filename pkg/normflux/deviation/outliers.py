"""
Outlier calls, the significance ratio and correlation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import DataError
from ..schemas import SignificanceResult

logger = logging.getLogger(__name__)

LATENT_P_THRESHOLD = 0.001
FEATURE_FAMILY_ALPHA = 0.05


@dataclass(frozen=True)
class OutlierCalls:
    """Per-subject outlier flags with the p-value behind each call."""

    flags: np.ndarray
    p_values: np.ndarray

    @property
    def n_flagged(self) -> int:
        return int(self.flags.sum())


def outlier_test_latent(
    distances: np.ndarray,
    dof: int,
    p_threshold: float = LATENT_P_THRESHOLD,
) -> OutlierCalls:
    """
    Refer squared Mahalanobis distances to a chi-square with ``dof`` degrees
    of freedom; flag upper-tail p below ``p_threshold``.

    Also used for D_mf with ``dof`` = feature count.
    """
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    d = np.atleast_1d(np.asarray(distances, dtype=np.float64))
    p = stats.chi2.sf(d * d, dof)
    return OutlierCalls(flags=p < p_threshold, p_values=p)


def chi2_flag_boundary(dof: int, p_threshold: float = LATENT_P_THRESHOLD) -> float:
    """Squared distance above which outlier_test_latent flags."""
    return float(stats.chi2.isf(p_threshold, dof))


def outlier_test_feature(
    d_uf: np.ndarray,
    n_features: int | None = None,
    alpha: float = FEATURE_FAMILY_ALPHA,
) -> OutlierCalls:
    """
    Two-sided standard-normal test per feature with Bonferroni correction.

    A subject is flagged when any feature has p < alpha / n_features.
    NaN scores (degenerate features) are ignored. ``p_values`` holds each
    subject's smallest per-feature p-value.
    """
    scores = np.atleast_2d(np.asarray(d_uf, dtype=np.float64))
    n_features = scores.shape[1] if n_features is None else n_features
    if n_features < 1:
        raise ValueError(f"n_features must be >= 1, got {n_features}")
    p = 2.0 * stats.norm.sf(np.abs(scores))
    p = np.where(np.isnan(scores), 1.0, p)
    p_min = p.min(axis=1) if p.shape[1] else np.ones(p.shape[0])
    return OutlierCalls(flags=p_min < alpha / n_features, p_values=p_min)


def significance_ratio(disease_flags: np.ndarray, holdout_flags: np.ndarray) -> SignificanceResult:
    """
    TPR / FPR of outlier calls.

    FPR = 0 gives ``ratio=None`` with ``ratio_infinite=True``.

    Raises:
        DataError: Either cohort is empty
    """
    disease = np.asarray(disease_flags, dtype=bool).reshape(-1)
    holdout = np.asarray(holdout_flags, dtype=bool).reshape(-1)
    if disease.size == 0 or holdout.size == 0:
        raise DataError(
            f"Significance ratio needs non-empty cohorts (disease={disease.size}, holdout={holdout.size})"
        )
    tpr = float(disease.mean())
    fpr = float(holdout.mean())
    infinite = fpr == 0.0
    if infinite:
        logger.warning(f"No holdout subject flagged (TPR={tpr:.3f}); significance ratio is infinite")
    return SignificanceResult(
        tpr=tpr,
        fpr=fpr,
        ratio=None if infinite else tpr / fpr,
        ratio_infinite=infinite,
        n_disease=int(disease.size),
        n_holdout=int(holdout.size),
        n_disease_outliers=int(disease.sum()),
        n_holdout_outliers=int(holdout.sum()),
    )


def pearson_corr(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """
    Sample Pearson r with a two-sided p-value (t with n-2 dof).

    Raises:
        ValueError: Unequal lengths, fewer than 3 points, or zero variance
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError(f"Length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise ValueError(f"Pearson correlation needs at least 3 points, got {x.size}")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ValueError("Pearson correlation is undefined for zero-variance input")
    result = stats.pearsonr(x, y)
    return float(result.statistic), float(result.pvalue)
