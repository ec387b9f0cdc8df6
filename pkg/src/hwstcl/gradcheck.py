"""Central finite-difference checks for reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, grad, no_grad


def numerical_grad(f: Callable[[], Tensor], t: Tensor, h: float = 1e-5,
                   index: Sequence[tuple] | None = None) -> np.ndarray:
    """d f() / d t by central differences, perturbing ``t.data`` in place.

    ``index`` restricts the probe to a subset of entries (others stay 0).
    """
    out = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    positions = range(flat.size) if index is None else [np.ravel_multi_index(i, t.shape) for i in index]
    with no_grad():
        for k in positions:
            orig = flat[k]
            flat[k] = orig + h
            fp = f().item()
            flat[k] = orig - h
            fm = f().item()
            flat[k] = orig
            out.reshape(-1)[k] = (fp - fm) / (2.0 * h)
    return out


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / den)) if a.size else 0.0


def check_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
                    max_entries: int | None = None, rng: np.random.Generator | None = None,
                    floor: float = 1e-6) -> float:
    """Worst relative error between backprop and central differences over ``params``.

    With ``max_entries`` only a random subset of each tensor's entries is probed.
    """
    analytic = grad(f(), params)
    worst = 0.0
    for p, g in zip(params, analytic):
        idx = None
        if max_entries is not None and p.size > max_entries:
            rng = rng or np.random.default_rng(0)
            flat = rng.choice(p.size, size=max_entries, replace=False)
            idx = [np.unravel_index(k, p.shape) for k in flat]
            num = numerical_grad(f, p, h, idx)
            sel = tuple(np.array(i) for i in zip(*idx))
            worst = max(worst, rel_error(g[sel], num[sel], floor))
        else:
            worst = max(worst, rel_error(g, numerical_grad(f, p, h), floor))
    return worst
