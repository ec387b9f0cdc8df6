"""Weighted GIN feature lifting and joint spatio-temporal GIN propagation."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import SparsePattern, Tensor
from .nn import MLP, Module
from .stgraph import HawkesKernel, JointOperator, assemble


class GinLayer(Module):
    """``h_v <- mlp((1 + eps) h_v + sum_u A_vu h_u)``.

    Setting ``bypass_mlp`` skips the MLP and returns the aggregated
    pre-activation (used to check the raw aggregation).
    """

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.eps = Tensor(0.0, requires_grad=True)
        self.mlp = MLP(n_in, n_out, rng)
        self.bypass_mlp = False

    def __call__(self, H: Tensor, aggregate: Callable[[Tensor], Tensor]) -> Tensor:
        pre = ad.add(ad.mul(ad.add(1.0, self.eps), H), aggregate(H))
        return pre if self.bypass_mlp else self.mlp(pre)


def gin_forward(layer: GinLayer, A, H) -> Tensor:
    """Single-graph GIN update with a dense N x N adjacency (array or Tensor of values)."""
    H = H if isinstance(H, Tensor) else Tensor(H)
    A_data = A.data if isinstance(A, Tensor) else np.asarray(A, dtype=np.float64)
    n = A_data.shape[0]
    if A_data.shape != (n, n) or H.shape[0] != n:
        raise ValueError(f"gin_forward: adjacency {A_data.shape} vs features {H.shape}")
    rows, cols = np.nonzero(np.ones((n, n), dtype=bool))
    pattern = SparsePattern(rows, cols, (n, n))
    vals = ad.reshape(A, (n * n,)) if isinstance(A, Tensor) else Tensor(A_data.ravel())
    return layer(H, lambda h: ad.sparse_matmul(pattern, vals, h))


class EncoderStack(Module):
    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator,
                 n_spatial: int = 2, n_stgin: int = 3):
        dims = [d_in] + [hidden] * n_spatial
        self.spatial = [GinLayer(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        first = dims[-1]
        self.stgin = [GinLayer(first if k == 0 else hidden, hidden, rng) for k in range(n_stgin)]
        self.hidden = hidden

    def lift(self, X: Tensor, op: JointOperator) -> Tensor:
        """Per-window GIN over stacked features X of shape (B*T*N, d)."""
        H = X
        for layer in self.spatial:
            H = layer(H, op.apply_spatial)
        return H

    def propagate(self, H: Tensor, op: JointOperator) -> Tensor:
        Z = H
        for layer in self.stgin:
            Z = layer(Z, op.apply)
        return Z

    def __call__(self, X: Tensor, op: JointOperator) -> Tensor:
        return self.propagate(self.lift(X, op), op)


def lift(stack: EncoderStack, graphs, kernel=None) -> Tensor:
    """Lift one subject's window graphs to H of shape (T, N, C)."""
    op = assemble(graphs, kernel or HawkesKernel(L=0), temporal=False)
    X = Tensor(np.concatenate([g.X_t.X for g in graphs]))
    return ad.reshape(stack.lift(X, op), (op.T, op.N, -1))


def stgin_forward(stack: EncoderStack, H: Tensor, op: JointOperator) -> Tensor:
    """Joint propagation of H (T, N, C) through the STGIN layers, returning (T, N, C)."""
    T, N = H.shape[0], H.shape[1]
    if T * N != op.n_nodes:
        raise ValueError(f"operator has {op.n_nodes} nodes, H has {T}x{N}")
    Z = stack.propagate(ad.reshape(H, (T * N, H.shape[2])), op)
    return ad.reshape(Z, (T, N, -1))
