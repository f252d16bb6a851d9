"""First-order optimizers over :class:`~e3marl.autodiff.Parameter` lists."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Parameter
from .errors import InvalidArgumentError


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Rescale gradients in place so their global norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad *= scale
    return total


class SGD:
    def __init__(self, params: Sequence[Parameter], lr: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self._buf = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        if self.lr == 0.0:
            return
        for p, b in zip(self.params, self._buf):
            b *= self.momentum
            b += p.grad
            p.data -= self.lr * b

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0


class Adam:
    def __init__(self, params: Sequence[Parameter], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        if self.lr == 0.0:
            return
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad * p.grad
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.9):
    if kind == "sgd":
        return SGD(params, lr, momentum)
    if kind == "adam":
        return Adam(params, lr)
    raise InvalidArgumentError(f"unknown optimizer {kind!r}")
