"""
Reference statistics and deviation distances.

Mahalanobis distances are evaluated with a Cholesky solve against the
(ridge-regularised) reference covariance; the inverse is never formed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np
from scipy import linalg

from ..errors import DataError, NumericError

logger = logging.getLogger(__name__)

RIDGE = 1e-6
ROBUST_RETAIN = 0.75
ROBUST_ROUNDS = 2
SYMMETRY_TOL = 1e-10


class StatsSource(str, Enum):
    """What the reference samples are."""
    LATENT = "latent"
    FEATURE_ERROR = "feature_error"


@dataclass(frozen=True)
class CohortStats:
    """
    Reference mean and covariance with a cached Cholesky factor.

    Raises:
        ValueError: Shape mismatch or asymmetric covariance
        NumericError: Covariance is not positive definite
    """

    mean: np.ndarray
    covariance: np.ndarray
    robust: bool = False
    source: StatsSource = StatsSource.LATENT
    _factor: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise ValueError("covariance must be symmetric")
        try:
            factor = linalg.cho_factor(cov, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as e:
            raise NumericError("Cholesky factorisation of the reference covariance failed", str(e)) from e
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "source", StatsSource(self.source))
        object.__setattr__(self, "_factor", factor)

    @property
    def dim(self) -> int:
        return self.mean.size

    def mahalanobis(self, x: np.ndarray) -> Union[float, np.ndarray]:
        """Distance of a vector (D,) or each row of a matrix (N, D) from the mean."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"Query has dimension {x.shape[-1]}, reference has {self.dim}")
        diff = x - self.mean
        solved = linalg.cho_solve(self._factor, diff.T).T
        squared = np.maximum(np.sum(diff * solved, axis=-1), 0.0)
        return float(np.sqrt(squared)) if x.ndim == 1 else np.sqrt(squared)


def _classical(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


def _ridge(cov: np.ndarray, ridge: float) -> np.ndarray:
    dim = cov.shape[0]
    scale = np.trace(cov) / dim
    lam = ridge * scale if scale > 0 else ridge
    return cov + lam * np.eye(dim)


def fit_cohort_stats(
    samples: np.ndarray,
    robust: bool = False,
    source: StatsSource | str = StatsSource.LATENT,
    ridge: float = RIDGE,
) -> CohortStats:
    """
    Fit reference statistics.

    ``robust=False``: sample mean and unbiased covariance. ``robust=True``:
    two rounds of ranking all subjects by Mahalanobis distance and refitting
    on the closest ceil(0.75 N). The covariance then gets ``ridge * trace / D``
    added to its diagonal.

    Args:
        samples: (N, D) reference samples
        robust: Use the trimmed estimator
        source: latent or feature_error
        ridge: Relative diagonal loading (0 disables it)

    Raises:
        DataError: N <= D or non-finite samples
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"Reference samples must be an (N, D) matrix, got shape {x.shape}")
    n, dim = x.shape
    if n <= dim:
        raise DataError(f"Need more reference subjects than dimensions (N={n}, D={dim})")
    if not np.all(np.isfinite(x)):
        raise DataError("Reference samples contain non-finite values")

    mean, cov = _classical(x)
    if robust:
        keep = math.ceil(ROBUST_RETAIN * n)
        for _ in range(ROBUST_ROUNDS):
            current = CohortStats(mean, _ridge(cov, max(ridge, RIDGE)), source=source)
            distances = current.mahalanobis(x)
            closest = np.argsort(distances, kind="stable")[:keep]
            mean, cov = _classical(x[closest])
        logger.debug(f"Robust fit retained {keep}/{n} subjects")
    cov = 0.5 * (cov + cov.T)
    if ridge > 0:
        cov = _ridge(cov, ridge)
    return CohortStats(mean=mean, covariance=cov, robust=robust, source=source)


def d_ml(z: np.ndarray, stats: CohortStats) -> Union[float, np.ndarray]:
    """Latent-space Mahalanobis deviation of one latent vector (or each row)."""
    if stats.source != StatsSource.LATENT:
        raise ValueError(f"d_ml needs latent statistics, got {stats.source.value}")
    return stats.mahalanobis(z)


def d_mf(recon_error: np.ndarray, stats: CohortStats) -> Union[float, np.ndarray]:
    """Feature-space Mahalanobis deviation of a squared reconstruction-error vector."""
    if stats.source != StatsSource.FEATURE_ERROR:
        raise ValueError(f"d_mf needs feature_error statistics, got {stats.source.value}")
    return stats.mahalanobis(recon_error)


@dataclass(frozen=True)
class FeatureNormStats:
    """Per-feature mean/std of healthy squared reconstruction errors."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return ~(self.std > 0.0)

    @property
    def n_features(self) -> int:
        return self.mean.size


def fit_feature_norm_stats(recon_error: np.ndarray) -> FeatureNormStats:
    errors = np.asarray(recon_error, dtype=np.float64)
    if errors.ndim != 2 or errors.shape[0] < 2:
        raise DataError(f"Need an (N >= 2, P) error matrix, got shape {errors.shape}")
    stats = FeatureNormStats(mean=errors.mean(axis=0), std=errors.std(axis=0, ddof=1))
    if stats.degenerate.any():
        logger.warning(f"{int(stats.degenerate.sum())} features have zero error variance; D_uf undefined there")
    return stats


def d_uf(recon_error: np.ndarray, stats: FeatureNormStats) -> np.ndarray:
    """
    Per-feature z-scores of squared reconstruction errors.

    Degenerate features (std = 0) score NaN.

    Raises:
        ValueError: Feature count mismatch
    """
    errors = np.asarray(recon_error, dtype=np.float64)
    if errors.shape[-1] != stats.n_features:
        raise ValueError(f"Error vector has {errors.shape[-1]} features, statistics cover {stats.n_features}")
    safe_std = np.where(stats.degenerate, 1.0, stats.std)
    scores = (errors - stats.mean) / safe_std
    return np.where(stats.degenerate, np.nan, scores)
