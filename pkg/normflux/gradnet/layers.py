"""
MLP building blocks.

Linear layers are Glorot-uniform initialised with zero biases; an Mlp chains
them with ReLU between consecutive layers.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor, as_tensor, relu


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))], shape (fan_out, fan_in)."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class LinearLayer:
    """
    Affine map ``y = x W^T + b``.

    Args:
        weight: Tensor of shape (out, in)
        bias: Tensor of shape (out,)
    """

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise ValueError(
                f"Inconsistent layer shapes: weight {weight.shape}, bias {bias.shape}"
            )
        self.weight = weight
        self.bias = bias

    @classmethod
    def create(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "LinearLayer":
        weight = Tensor(glorot_uniform(in_dim, out_dim, rng), requires_grad=True)
        bias = Tensor(np.zeros(out_dim), requires_grad=True)
        return cls(weight, bias)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"Input dimension {x.shape[-1]} does not match layer input {self.in_dim}"
            )
        return x @ self.weight.T + self.bias


class Mlp:
    """
    Stack of linear layers with ReLU applied between them.

    Args:
        layers: Linear layers whose dimensions chain
        activate_output: Also apply ReLU after the last layer (used for
            trunks that feed further heads)
    """

    def __init__(self, layers: Sequence[LinearLayer], activate_output: bool = False):
        if not layers:
            raise ValueError("An Mlp needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"Layer dimensions do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )
        self.layers = list(layers)
        self.activate_output = activate_output

    @classmethod
    def create(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        activate_output: bool = False,
    ) -> "Mlp":
        """Build an Mlp from a size list, e.g. ``[82, 20, 40]``."""
        if len(sizes) < 2:
            raise ValueError(f"Need at least input and output sizes, got {list(sizes)}")
        layers = [LinearLayer.create(i, o, rng) for i, o in zip(sizes, sizes[1:])]
        return cls(layers, activate_output=activate_output)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, x) -> Tensor:
        h = as_tensor(x)
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < last or self.activate_output:
                h = relu(h)
        return h


def mlp_forward(net: Mlp, input) -> Tensor:
    """Run ``net`` on ``input``, recording the tape when parameters require grad."""
    return net(input)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every parameter ``loss`` depends on."""
    loss.backward()


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
