"""Minimal parameter containers on top of :mod:`hwstcl.autodiff`."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    """Collects parameters from attributes (Tensors, Modules, lists of Modules)."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad and val.is_leaf:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.w = uniform_init(rng, n_in, (n_in, n_out))
        self.b = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.w, self.b)


class MLP(Module):
    """affine -> ReLU -> affine, hidden width equal to the output width."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.w1 = uniform_init(rng, n_in, (n_in, n_out))
        self.b1 = Tensor(np.zeros(n_out), requires_grad=True)
        self.w2 = uniform_init(rng, n_out, (n_out, n_out))
        self.b2 = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(ad.relu(ad.linear(x, self.w1, self.b1)), self.w2, self.b2)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if not training or p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.mul(x, Tensor(keep))
