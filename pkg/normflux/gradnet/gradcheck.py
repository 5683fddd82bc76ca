"""
Finite-difference gradient checker.

Compares tape gradients against central differences for every scalar entry
of every parameter of anything exposing ``parameters()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .tensor import Tensor


class HasParameters(Protocol):
    def parameters(self) -> Sequence[Tensor]: ...


@dataclass
class GradCheckReport:
    """
    Outcome of a gradient check.

    ``max_rel_error`` uses the floored relative error and decides ``passed``.
    Entries whose gradient magnitude reaches the floor are also summarised by
    their plain relative error; smaller entries by their absolute error.
    """

    max_rel_error: float
    tolerance: float
    n_checked: int
    per_parameter: list[float] = field(default_factory=list)
    floor: float = 1e-2
    max_plain_rel_error: float = 0.0
    n_above_floor: int = 0
    max_abs_error_below_floor: float = 0.0
    n_below_floor: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-2) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from dominating."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    diff = np.abs(analytic - numeric)
    return np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)


def grad_check(
    net: HasParameters,
    loss_fn: Callable[[HasParameters], Tensor],
    tolerance: float = 1e-4,
    h: float = 1e-5,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-2,
) -> GradCheckReport:
    """
    Check analytic gradients of ``loss_fn(net)`` against central differences.

    Args:
        net: Object exposing ``parameters()``
        loss_fn: Callable returning a scalar Tensor; must be deterministic
        tolerance: Pass threshold on the max relative error
        h: Finite-difference step
        max_entries_per_param: Optionally subsample entries of large parameters
        rng: Source for subsampling
        floor: Gradient magnitude below which errors are judged absolutely
            (0 gives the plain relative error everywhere)

    Returns:
        GradCheckReport with the max relative error over all checked entries
    """
    params = list(net.parameters())
    for p in params:
        p.zero_grad()
    loss = loss_fn(net)
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    per_param: list[float] = []
    n_checked = 0
    all_analytic, all_numeric = [], []
    for p, grad in zip(params, analytic):
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)  # view: writes perturb the parameter
        indices = np.arange(flat.size)
        if max_entries_per_param is not None and flat.size > max_entries_per_param:
            indices = np.sort(rng.choice(flat.size, size=max_entries_per_param, replace=False))
        numeric = np.empty(len(indices))
        for k, idx in enumerate(indices):
            original = flat[idx]
            flat[idx] = original + h
            plus = loss_fn(net).item()
            flat[idx] = original - h
            minus = loss_fn(net).item()
            flat[idx] = original
            numeric[k] = (plus - minus) / (2.0 * h)
        checked = grad.reshape(-1)[indices]
        err = relative_error(checked, numeric, floor)
        param_worst = float(err.max()) if err.size else 0.0
        per_param.append(param_worst)
        worst = max(worst, param_worst)
        n_checked += len(indices)
        all_analytic.append(checked)
        all_numeric.append(numeric)

    for p in params:
        p.zero_grad()

    a = np.concatenate(all_analytic) if all_analytic else np.zeros(0)
    n = np.concatenate(all_numeric) if all_numeric else np.zeros(0)
    large = np.maximum(np.abs(a), np.abs(n)) >= floor
    plain = relative_error(a[large], n[large], 0.0)
    abs_small = np.abs(a[~large] - n[~large])
    return GradCheckReport(
        max_rel_error=worst,
        tolerance=tolerance,
        n_checked=n_checked,
        per_parameter=per_param,
        floor=floor,
        max_plain_rel_error=float(plain.max()) if plain.size else 0.0,
        n_above_floor=int(large.sum()),
        max_abs_error_below_floor=float(abs_small.max()) if abs_small.size else 0.0,
        n_below_floor=int((~large).sum()),
    )
