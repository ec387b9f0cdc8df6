"""Joint spatio-temporal operator over (window, ROI) nodes.

Node ``(t, i)`` of subject ``b`` in a batch of T-window, N-ROI subjects has
flat index ``(b * T + t) * N + i`` (all zero-based). The operator is the sum
of a block-diagonal spatial part holding each window's adjacency and a
temporal part linking each ROI to itself at later windows with weights from
an exponential lag kernel.
"""
from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import SparsePattern, Tensor

DIRECTIONS = ("causal", "literal")


class HawkesKernel:
    """Lag weights ``alpha * exp(-beta * lag)`` with ``alpha = exp(a_raw)``, ``beta = exp(b_raw)``."""

    def __init__(self, L: int = 3, alpha: float = 1.0, beta: float = 0.5):
        if L < 0:
            raise ValueError("L must be nonnegative")
        self.L = int(L)
        self.a_raw = Tensor(math.log(alpha) if alpha > 0 else -math.inf, requires_grad=True,
                            name="kernel.a_raw")
        self.b_raw = Tensor(math.log(beta) if beta > 0 else -math.inf, requires_grad=True,
                            name="kernel.b_raw")

    @property
    def alpha(self) -> float:
        return float(np.exp(self.a_raw.data.item()))

    @property
    def beta(self) -> float:
        return float(np.exp(self.b_raw.data.item()))

    def parameters(self) -> dict[str, Tensor]:
        return {"kernel.a_raw": self.a_raw, "kernel.b_raw": self.b_raw}

    def n_lags(self, T: int) -> int:
        return max(0, min(self.L, T - 1))

    def weights(self, T: int) -> Tensor:
        return kernel_weights(self, T)


def kernel_weights(k: HawkesKernel, T: int) -> Tensor:
    if T < 1:
        raise ValueError("T must be at least 1")
    lags = np.arange(1, k.n_lags(T) + 1, dtype=np.float64)
    beta = ad.exp(k.b_raw)
    return ad.exp(ad.sub(k.a_raw, ad.mul(beta, lags))) if lags.size else Tensor(np.zeros(0))


class JointOperator:
    """Sparse (B*T*N) x (B*T*N) operator for a batch of B subjects.

    ``spatial_values`` is a Tensor so callers may swap in a leaf that
    requires gradients (saliency). Temporal values are read from the kernel
    at every application.
    """

    def __init__(self, A: np.ndarray, kernel: HawkesKernel, direction: str = "causal",
                 temporal: bool = True, full_pattern: bool = False):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim == 3:
            A = A[None]
        if A.ndim != 4 or A.shape[2] != A.shape[3]:
            raise ValueError(f"expected adjacency of shape (B, T, N, N), got {A.shape}")
        if direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        B, T, N, _ = A.shape
        self.B, self.T, self.N = B, T, N
        self.n_nodes = B * T * N
        self.kernel = kernel
        self.direction = direction
        self.temporal = temporal

        if full_pattern:
            mask = np.broadcast_to(~np.eye(N, dtype=bool), A.shape)
        else:
            mask = A != 0.0
        b, t, i, j = np.nonzero(mask)
        base = (b * T + t) * N
        self.spatial = SparsePattern(base + i, base + j, (self.n_nodes, self.n_nodes))
        self.spatial_index = (b, t, i, j)
        self.spatial_values = Tensor(A[b, t, i, j])

        n_lags = kernel.n_lags(T) if temporal else 0
        rows, cols, lag = [], [], []
        for delta in range(1, n_lags + 1):
            bb, tt, ii = np.meshgrid(np.arange(B), np.arange(T - delta), np.arange(N), indexing="ij")
            src = ((bb * T + tt) * N + ii).ravel()
            dst = ((bb * T + tt + delta) * N + ii).ravel()
            if direction == "causal":
                rows.append(dst)
                cols.append(src)
            else:
                rows.append(src)
                cols.append(dst)
            lag.append(np.full(src.size, delta - 1))
        if rows:
            self.temporal_pattern = SparsePattern(np.concatenate(rows), np.concatenate(cols),
                                                  (self.n_nodes, self.n_nodes))
            self.temporal_lag = np.concatenate(lag).astype(np.int64)
        else:
            self.temporal_pattern = None
            self.temporal_lag = np.zeros(0, dtype=np.int64)

    @property
    def temporal_nnz(self) -> int:
        return int(self.temporal_lag.size)

    def temporal_values(self) -> Tensor:
        return ad.take(kernel_weights(self.kernel, self.T), self.temporal_lag)

    def apply_spatial(self, H: Tensor) -> Tensor:
        return ad.sparse_matmul(self.spatial, self.spatial_values, H)

    def apply(self, H: Tensor) -> Tensor:
        out = self.apply_spatial(H)
        if self.temporal_pattern is not None:
            out = out + ad.sparse_matmul(self.temporal_pattern, self.temporal_values(), H)
        return out

    def dense(self, part: str = "both") -> np.ndarray:
        out = np.zeros((self.n_nodes, self.n_nodes))
        if part in ("both", "spatial"):
            out += self.spatial.dense(self.spatial_values.data)
        if part in ("both", "temporal") and self.temporal_pattern is not None:
            out += self.temporal_pattern.dense(self.temporal_values().data)
        return out

    def dump_csv(self, path) -> None:
        """Write ``row,col,value,kind,lag`` records (lag 0 for spatial entries)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "value", "kind", "lag"])
            for r, c, v in zip(self.spatial.rows, self.spatial.cols, self.spatial_values.data):
                w.writerow([r, c, repr(float(v)), "spatial", 0])
            if self.temporal_pattern is not None:
                vals = self.temporal_values().data
                p = self.temporal_pattern
                for r, c, v, lg in zip(p.rows, p.cols, vals, self.temporal_lag):
                    w.writerow([r, c, repr(float(v)), "temporal", int(lg) + 1])


def assemble(graphs: Sequence, kernel: HawkesKernel, direction: str = "causal", *,
             temporal: bool = True, full_pattern: bool = False) -> JointOperator:
    """Operator for one subject from its window graphs (or a (T, N, N) array)."""
    if isinstance(graphs, np.ndarray):
        A = graphs
    else:
        shapes = {g.A_t.shape for g in graphs}
        if len(shapes) != 1:
            raise ValueError(f"window adjacencies disagree in shape: {sorted(shapes)}")
        A = np.stack([g.A_t for g in graphs])
    return JointOperator(A, kernel, direction, temporal=temporal, full_pattern=full_pattern)


def apply(op: JointOperator, H: Tensor) -> Tensor:
    if H.shape[0] != op.n_nodes:
        raise ValueError(f"operator has {op.n_nodes} nodes, features have {H.shape[0]} rows")
    return op.apply(H)
