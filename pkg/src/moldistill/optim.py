"""Bias-corrected Adam over the autodiff tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import NonFiniteError


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One functional Adam step; returns (param, m, v) for step count t >= 1."""
    if param.shape != grad.shape:
        raise ValueError(f"gradient shape {grad.shape} != param shape {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient in Adam step")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class Adam:
    """Standard Adam (lr 1e-3, betas 0.9/0.999, eps 1e-8), deterministic."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            p.data, self.m[i], self.v[i] = adam_update(
                p.data, g, self.m[i], self.v[i], self.t,
                self.lr, self.beta1, self.beta2, self.eps,
            )
