"""Chebyshev graph convolution, bidirectional GRU readout and BCE loss."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import SparsePattern, Tensor
from .nn import Linear, Module, dropout, uniform_init

PROB_FLOOR = 1e-12


def scaled_laplacian_values(pattern: SparsePattern, values: Tensor) -> Tensor:
    """Values of ``L_sym - I = -D^-1/2 A D^-1/2`` on the pattern of A.

    Zero-degree nodes get zero rows and columns.
    """
    n = pattern.shape[0]
    deg = ad.reshape(ad.sparse_matmul(pattern, values, Tensor(np.ones((n, 1)))), (n,))
    isolated = deg.data <= 0.0
    safe = ad.add(deg, Tensor(isolated.astype(np.float64)))
    dinv = ad.mul(ad.div(1.0, ad.sqrt(safe)), Tensor((~isolated).astype(np.float64)))
    scale = ad.mul(ad.take(dinv, pattern.rows), ad.take(dinv, pattern.cols))
    return ad.neg(ad.mul(values, scale))


class ChebLayer(Module):
    def __init__(self, K: int, n_in: int, n_out: int, rng: np.random.Generator):
        if K < 1:
            raise ValueError("K must be at least 1")
        self.K = K
        self.weights = [_Weight(uniform_init(rng, K * n_in, (n_in, n_out))) for _ in range(K)]
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, Z: Tensor, pattern: SparsePattern, lap_values: Tensor) -> Tensor:
        out = ad.linear(Z, self.weights[0].w, self.bias)
        if self.K == 1:
            return out
        t_prev, t_cur = Z, ad.sparse_matmul(pattern, lap_values, Z)
        out = ad.add(out, ad.linear(t_cur, self.weights[1].w))
        for k in range(2, self.K):
            t_next = ad.sub(ad.mul(2.0, ad.sparse_matmul(pattern, lap_values, t_cur)), t_prev)
            out = ad.add(out, ad.linear(t_next, self.weights[k].w))
            t_prev, t_cur = t_cur, t_next
        return out


class _Weight(Module):
    def __init__(self, w: Tensor):
        self.w = w


def cheb_forward(layer: ChebLayer, Z_t, A_t) -> Tensor:
    """Chebyshev convolution of one window's node features with adjacency ``A_t``."""
    A = np.asarray(A_t, dtype=np.float64)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12):
        raise ValueError("ChebNet adjacency must be symmetric")
    if np.any(A < 0):
        raise ValueError("ChebNet adjacency must be nonnegative")
    Z_t = Z_t if isinstance(Z_t, Tensor) else Tensor(Z_t)
    rows, cols = np.nonzero(A)
    pattern = SparsePattern(rows, cols, A.shape)
    return layer(Z_t, pattern, scaled_laplacian_values(pattern, Tensor(A[rows, cols])))


class GRUCell(Module):
    """Gate layout follows the common (reset, update, candidate) convention:

    r = sig(x Wir + bir + h Whr + bhr), z = sig(x Wiz + biz + h Whz + bhz),
    n = tanh(x Win + bin + r * (h Whn + bhn)), h' = (1 - z) * n + z * h.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.w_ih = uniform_init(rng, hidden, (n_in, 3 * hidden))
        self.w_hh = uniform_init(rng, hidden, (hidden, 3 * hidden))
        self.b_ih = uniform_init(rng, hidden, (3 * hidden,))
        self.b_hh = uniform_init(rng, hidden, (3 * hidden,))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return self.step(ad.linear(x, self.w_ih, self.b_ih), h)

    def step(self, gi: Tensor, h: Tensor) -> Tensor:
        """Advance from precomputed input gates ``gi = x W_ih + b_ih``."""
        H = self.hidden
        gh = ad.linear(h, self.w_hh, self.b_hh)
        part = lambda g, k: ad.getitem(g, (Ellipsis, slice(k * H, (k + 1) * H)))  # noqa: E731
        r = ad.sigmoid(ad.add(part(gi, 0), part(gh, 0)))
        z = ad.sigmoid(ad.add(part(gi, 1), part(gh, 1)))
        n = ad.tanh(ad.add(part(gi, 2), ad.mul(r, part(gh, 2))))
        return ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, h))


class GruReadout(Module):
    """ChebNet per window, ROI-mean pooling, projection, bidirectional GRU, FC head."""

    def __init__(self, n_in: int, rng: np.random.Generator, K: int = 2, cheb_hidden: int = 64,
                 embed_dim: int = 256, gru_hidden: int = 256, dropout: float = 0.2):
        self.cheb = ChebLayer(K, n_in, cheb_hidden, rng)
        self.proj = Linear(cheb_hidden, embed_dim, rng)
        self.gru_fwd = GRUCell(embed_dim, gru_hidden, rng)
        self.gru_bwd = GRUCell(embed_dim, gru_hidden, rng)
        self.fc = Linear(2 * gru_hidden, 1, rng)
        self.dropout = dropout

    def window_embeddings(self, Z: Tensor, pattern: SparsePattern, lap_values: Tensor,
                          B: int, T: int, N: int, *, training: bool = False,
                          rng: np.random.Generator | None = None) -> Tensor:
        h = ad.relu(self.cheb(Z, pattern, lap_values))
        h = dropout(h, self.dropout, rng, training)
        pooled = ad.mean(ad.reshape(h, (B * T, N, h.shape[-1])), axis=1)
        return ad.reshape(self.proj(pooled), (B, T, -1))

    def sequence_logits(self, E: Tensor) -> Tensor:
        """Logits (B,) from window embeddings E of shape (B, T, embed)."""
        B, T = E.shape[0], E.shape[1]
        h_f = Tensor(np.zeros((B, self.gru_fwd.hidden)))
        h_b = Tensor(np.zeros((B, self.gru_bwd.hidden)))
        gi_f = ad.linear(E, self.gru_fwd.w_ih, self.gru_fwd.b_ih)
        gi_b = ad.linear(E, self.gru_bwd.w_ih, self.gru_bwd.b_ih)
        for t in range(T):
            h_f = self.gru_fwd.step(ad.getitem(gi_f, (slice(None), t)), h_f)
        for t in reversed(range(T)):
            h_b = self.gru_bwd.step(ad.getitem(gi_b, (slice(None), t)), h_b)
        return ad.reshape(self.fc(ad.concat([h_f, h_b], axis=1)), (B,))


def gru_classify(readout: GruReadout, window_embeddings) -> Tensor:
    """Probability of the positive class for one subject's (T, E) embedding sequence."""
    E = window_embeddings if isinstance(window_embeddings, Tensor) else Tensor(window_embeddings)
    E = ad.reshape(E, (1,) + E.shape)
    return ad.reshape(ad.sigmoid(readout.sequence_logits(E)), ())


def bce(probs, labels) -> Tensor:
    probs = probs if isinstance(probs, Tensor) else Tensor(probs)
    y = np.asarray(labels, dtype=np.float64)
    if probs.shape != y.shape:
        raise ValueError(f"bce: {probs.shape[0] if probs.ndim else 1} probabilities vs "
                         f"{y.size} labels")
    p = ad.clamp(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    ll = ad.add(ad.mul(Tensor(y), ad.log(p)), ad.mul(Tensor(1.0 - y), ad.log(ad.sub(1.0, p))))
    return ad.neg(ad.mean(ll))
