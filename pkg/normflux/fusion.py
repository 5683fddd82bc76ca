"""
Diagonal-Gaussian expert fusion.

Closed-form algebra for combining per-modality posteriors ("experts"):
product of experts (precisions add), generalised product of experts
(alpha-weighted precisions add, alpha on the modality simplex per latent
dimension) and the uniform mixture of experts. Also the KL divergence to the
standard normal, log density and reparameterised sampling.

Every function works on plain numpy arrays and on gradnet Tensors, so the
same code path serves scoring and training. Arrays may be single vectors of
shape (L,) or batches of shape (N, L); reductions always run over the last
axis and over experts in index order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .gradnet import Tensor
from .gradnet import tensor as gt

ArrayLike = Union[np.ndarray, Tensor]

VAR_FLOOR = 1e-8
SIMPLEX_TOL = 1e-9
LOG_2PI = math.log(2.0 * math.pi)


def _values(x: ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else x


def _coerce(x) -> ArrayLike:
    return x if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _log(x: ArrayLike) -> ArrayLike:
    return gt.log(x) if isinstance(x, Tensor) else np.log(x)


def _sqrt(x: ArrayLike) -> ArrayLike:
    return gt.sqrt(x) if isinstance(x, Tensor) else np.sqrt(x)


def _sum_last(x: ArrayLike) -> ArrayLike:
    return gt.tsum(x, axis=-1) if isinstance(x, Tensor) else np.sum(x, axis=-1)


# ── Types ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DiagGaussian:
    """
    Gaussian with diagonal covariance.

    Args:
        mean: Mean vector (L,) or batch (N, L)
        var: Variance, same shape as ``mean``, strictly positive

    Raises:
        ValueError: On shape mismatch or a non-positive variance
    """

    mean: ArrayLike
    var: ArrayLike

    def __post_init__(self):
        object.__setattr__(self, "mean", _coerce(self.mean))
        object.__setattr__(self, "var", _coerce(self.var))
        m, v = _values(self.mean), _values(self.var)
        if m.shape != v.shape:
            raise ValueError(f"mean shape {m.shape} does not match var shape {v.shape}")
        if m.ndim == 0:
            raise ValueError("DiagGaussian needs at least one dimension")
        if not np.all(v > 0.0):
            raise ValueError("DiagGaussian variance must be strictly positive")

    @classmethod
    def from_logvar(cls, mean: ArrayLike, logvar: ArrayLike, var_floor: float = VAR_FLOOR) -> "DiagGaussian":
        """Build from network outputs; exp(logvar) is floored at ``var_floor``."""
        if isinstance(logvar, Tensor):
            var = gt.floor(gt.exp(logvar), var_floor)
        else:
            var = np.maximum(np.exp(np.asarray(logvar, dtype=np.float64)), var_floor)
        return cls(mean, var)

    @classmethod
    def standard(cls, dim: int) -> "DiagGaussian":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return _values(self.mean).shape[-1]

    @property
    def precision(self) -> ArrayLike:
        return 1.0 / self.var

    def detach(self) -> "DiagGaussian":
        """numpy copy, with no tape."""
        return DiagGaussian(np.array(_values(self.mean)), np.array(_values(self.var)))


@dataclass(frozen=True)
class GpoeWeights:
    """
    Per-(modality, latent dimension) expert weights.

    ``alpha`` has shape (M, L); each column lies strictly inside the modality
    simplex. With a single modality the only simplex point is alpha = 1.
    """

    alpha: ArrayLike

    def __post_init__(self):
        object.__setattr__(self, "alpha", _coerce(self.alpha))
        a = _values(self.alpha)
        if a.ndim != 2:
            raise ValueError(f"alpha must be an (M, L) matrix, got shape {a.shape}")
        if a.shape[0] > 1 and not np.all((a > 0.0) & (a < 1.0)):
            raise ValueError("alpha entries must lie in (0, 1)")
        col_sums = a.sum(axis=0)
        if not np.all(np.abs(col_sums - 1.0) <= SIMPLEX_TOL):
            raise ValueError(
                f"alpha columns must sum to 1 (max deviation {np.max(np.abs(col_sums - 1.0)):.3e})"
            )

    @classmethod
    def uniform(cls, n_modalities: int, dim: int) -> "GpoeWeights":
        return cls(np.full((n_modalities, dim), 1.0 / n_modalities))

    @property
    def n_modalities(self) -> int:
        return _values(self.alpha).shape[0]

    @property
    def dim(self) -> int:
        return _values(self.alpha).shape[1]


@dataclass(frozen=True)
class MixturePosterior:
    """Uniform mixture of expert posteriors sharing one latent dimension."""

    components: tuple[DiagGaussian, ...]

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise ValueError("A mixture needs at least one component")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError(f"Mixture components disagree on latent dimension: {sorted(dims)}")
        object.__setattr__(self, "components", components)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_components, 1.0 / self.n_components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def mean(self) -> np.ndarray:
        """Mixture mean: the average of component means."""
        total = np.array(_values(self.components[0].mean), dtype=np.float64)
        for c in self.components[1:]:
            total = total + _values(c.mean)
        return total / self.n_components


# ── Fusion ───────────────────────────────────────────────────────────

def _check_experts(experts: Sequence[DiagGaussian]) -> None:
    if not experts:
        raise ValueError("Cannot fuse an empty expert list")
    shapes = {_values(e.mean).shape for e in experts}
    if len(shapes) != 1:
        raise ValueError(f"Experts disagree on shape: {sorted(shapes)}")


def poe_fuse(experts: Sequence[DiagGaussian]) -> DiagGaussian:
    """
    Product of experts: precision = sum 1/var, mean = precision-weighted mean.

    Raises:
        ValueError: Empty list or dimension mismatch
    """
    _check_experts(experts)
    precision = 1.0 / experts[0].var
    weighted_mean = experts[0].mean / experts[0].var
    for e in experts[1:]:
        precision = precision + 1.0 / e.var
        weighted_mean = weighted_mean + e.mean / e.var
    return DiagGaussian(weighted_mean / precision, 1.0 / precision)


def weighted_fuse(experts: Sequence[DiagGaussian], alpha: ArrayLike) -> DiagGaussian:
    """
    Weighted product of experts without the simplex constraint.

    precision = sum alpha_m / var_m and mean = (sum alpha_m mu_m / var_m) / precision,
    elementwise per latent dimension. ``alpha`` has one row per expert.
    """
    _check_experts(experts)
    a = _values(alpha)
    if a.ndim != 2 or a.shape[0] != len(experts) or a.shape[1] != experts[0].dim:
        raise ValueError(
            f"alpha shape {a.shape} does not match {len(experts)} experts of dimension {experts[0].dim}"
        )
    if isinstance(alpha, Tensor):
        rows = [alpha[m] for m in range(len(experts))]
    else:
        rows = [a[m] for m in range(len(experts))]
    precision = rows[0] / experts[0].var
    weighted_mean = rows[0] * experts[0].mean / experts[0].var
    for row, e in zip(rows[1:], experts[1:]):
        precision = precision + row / e.var
        weighted_mean = weighted_mean + row * e.mean / e.var
    return DiagGaussian(weighted_mean / precision, 1.0 / precision)


def gpoe_fuse(experts: Sequence[DiagGaussian], weights: GpoeWeights) -> DiagGaussian:
    """
    Generalised product of experts with simplex-constrained weights.

    Raises:
        ValueError: Dimension mismatch (weights are validated by GpoeWeights)
    """
    if weights.n_modalities != len(experts):
        raise ValueError(
            f"{weights.n_modalities} weight rows for {len(experts)} experts"
        )
    return weighted_fuse(experts, weights.alpha)


# ── Densities and sampling ───────────────────────────────────────────

def kl_to_std_normal(q: DiagGaussian) -> ArrayLike:
    """KL(q || N(0, I)) = 1/2 sum(var + mean^2 - 1 - ln var); one value per row."""
    return 0.5 * _sum_last(q.var + q.mean * q.mean - 1.0 - _log(q.var))


def log_pdf(g: DiagGaussian, x: ArrayLike) -> ArrayLike:
    """Exact diagonal-Gaussian log density of ``x``."""
    x = _coerce(x)
    if _values(x).shape[-1] != g.dim:
        raise ValueError(f"x has dimension {_values(x).shape[-1]}, expected {g.dim}")
    diff = x - g.mean
    return -0.5 * _sum_last(LOG_2PI + _log(g.var) + diff * diff / g.var)


def reparam_sample(g: DiagGaussian, noise: ArrayLike) -> ArrayLike:
    """mean + sqrt(var) * noise; differentiable in mean and var."""
    noise = _coerce(noise)
    if _values(noise).shape != _values(g.mean).shape:
        raise ValueError(
            f"noise shape {_values(noise).shape} does not match posterior shape {_values(g.mean).shape}"
        )
    return g.mean + _sqrt(g.var) * noise


def moe_sample(
    mixture: MixturePosterior,
    rng: np.random.Generator,
    noise: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """
    Draw one sample from a uniform mixture.

    The component index is drawn uniformly; the sample comes from that
    component by reparameterisation (``noise`` overrides the standard
    normal draw).

    Returns:
        (sample, component_index)
    """
    index = int(rng.integers(mixture.n_components))
    component = mixture.components[index].detach()
    if noise is None:
        noise = rng.standard_normal(_values(component.mean).shape)
    return np.asarray(reparam_sample(component, noise)), index
