"""Lag-weighted contrastive objective over spatio-temporal ROI embeddings.

Same-ROI pairs across windows are pulled towards cosine similarity 1 and
different-ROI pairs towards 0. Each lag contributes in proportion to the
kernel weight of that lag; the weights appear in both numerator and
denominator, so the loss does not depend on the kernel amplitude.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .stgraph import HawkesKernel, kernel_weights

log = logging.getLogger(__name__)


@dataclass
class HwclConfig:
    lambda_neg: float = 0.2

    def __post_init__(self):
        if self.lambda_neg < 0:
            raise ValueError("lambda_neg must be nonnegative")


def lag_similarities(Z_norm, delta: int) -> list[np.ndarray]:
    """``S[t][n, m] = <Z_norm[t, n], Z_norm[t + delta, m]>`` for t = 0..T-delta-1."""
    Z = Z_norm.data if isinstance(Z_norm, Tensor) else np.asarray(Z_norm, dtype=np.float64)
    T = Z.shape[0]
    if not 1 <= delta <= T - 1:
        raise ValueError(f"delta must lie in [1, {T - 1}], got {delta}")
    return [Z[t] @ Z[t + delta].T for t in range(T - delta)]


def hwcl(Z: Tensor, kernel: HawkesKernel, cfg: HwclConfig = HwclConfig()) -> tuple[Tensor, Tensor, Tensor]:
    """Return ``(total, positive term, negative term)``.

    ``Z`` is (T, N, C) for one subject or (B, T, N, C) for a batch; batch
    losses are the mean of per-subject losses. Rows are l2-normalised here.
    """
    if Z.ndim == 3:
        Z = ad.reshape(Z, (1,) + Z.shape)
    B, T, N, C = Z.shape
    n_lags = kernel.n_lags(T)
    if n_lags == 0:
        if T < 2:
            log.warning("contrastive loss needs at least 2 windows; returning 0")
        zero = Tensor(0.0)
        return zero, zero, zero
    Zn = ad.reshape(ad.l2_normalize_rows(ad.reshape(Z, (B * T * N, C))), (B, T, N, C))
    w = kernel_weights(kernel, T)

    num_pos = num_neg = None
    den_terms = []
    for delta in range(1, n_lags + 1):
        early = ad.getitem(Zn, (slice(None), slice(0, T - delta)))
        late = ad.getitem(Zn, (slice(None), slice(delta, T)))
        diag = ad.sum(ad.mul(early, late), axis=-1)  # (B, T-delta, N)
        pos = ad.sum(ad.square(ad.sub(1.0, diag)), axis=(1, 2))
        sim = ad.matmul(early, ad.swapaxes(late, -1, -2))  # (B, T-delta, N, N)
        neg = ad.sub(ad.sum(ad.square(sim), axis=(1, 2, 3)), ad.sum(ad.square(diag), axis=(1, 2)))
        w_d = ad.getitem(w, slice(delta - 1, delta))
        num_pos = ad.mul(w_d, pos) if num_pos is None else ad.add(num_pos, ad.mul(w_d, pos))
        num_neg = ad.mul(w_d, neg) if num_neg is None else ad.add(num_neg, ad.mul(w_d, neg))
        den_terms.append(ad.mul(w_d, float((T - delta) * N)))
    den = den_terms[0]
    for term in den_terms[1:]:
        den = ad.add(den, term)
    l_pos = ad.mean(ad.div(num_pos, den))
    if N > 1:
        l_neg = ad.mean(ad.div(num_neg, ad.mul(den, float(N - 1))))
    else:
        l_neg = Tensor(0.0)
    total = ad.add(l_pos, ad.mul(cfg.lambda_neg, l_neg))
    return total, l_pos, l_neg
