"""
Adam optimizer.

Standard Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8).
A parameter whose gradient is missing or identically zero is left untouched
for that step, moments included, so a zero gradient is always a no-op.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment accumulators plus step counter."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], learning_rate: float = 1e-4) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "t": self.t,
            "m": [{"shape": list(a.shape), "values": a.reshape(-1).tolist()} for a in self.m],
            "v": [{"shape": list(a.shape), "values": a.reshape(-1).tolist()} for a in self.v],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdamState":
        def arrays(items):
            return [np.asarray(d["values"], dtype=np.float64).reshape(d["shape"]) for d in items]

        return cls(
            learning_rate=float(data["learning_rate"]),
            beta1=float(data["beta1"]),
            beta2=float(data["beta2"]),
            eps=float(data["eps"]),
            t=int(data["t"]),
            m=arrays(data["m"]),
            v=arrays(data["v"]),
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
) -> None:
    """
    Apply one Adam update in place.

    Args:
        params: Parameters to update
        grads: One gradient per parameter (None counts as zero)
        state: Optimizer state, mutated (moments and t)

    Raises:
        ValueError: If shapes of params, grads and accumulators disagree
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(
            f"Parameter/gradient/state count mismatch: "
            f"{len(params)}/{len(grads)}/{len(state.m)}"
        )
    for p, g, m in zip(params, grads, state.m):
        if m.shape != p.shape or (g is not None and np.shape(g) != p.shape):
            raise ValueError(f"Shape mismatch for parameter {p.shape}")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    step_size = state.learning_rate / bc1

    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None or not np.any(g):
            continue
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(state.v[i] / bc2) + state.eps
        p.data -= step_size * state.m[i] / denom


class Adam:
    """
    Optimizer bound to a parameter list.

    Args:
        params: Trainable tensors
        learning_rate: Step size
    """

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 1e-4):
        self.params = list(params)
        self.state = AdamState.for_params(self.params, learning_rate)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
