from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class AdamW:
    """Adam with decoupled weight decay and bias-corrected moments."""

    def __init__(self, params: dict[str, Tensor], lr: float, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = grads[k] if grads is not None else p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if self.lr == 0.0:
                continue
            if self.weight_decay:
                p.data = p.data * (1.0 - self.lr * self.weight_decay)
            m = self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            v = self.v[k] = b2 * self.v[k] + (1.0 - b2) * (g * g)
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adamw_step(opt: AdamW, grads: dict[str, np.ndarray] | None = None) -> AdamW:
    opt.step(grads)
    return opt


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Rescale all gradients in place so their joint l2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    grads = [p.grad for p in params.values() if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if total > max_norm > 0:
        scale = max_norm / total
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return total
