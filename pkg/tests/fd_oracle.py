"""Central finite differences against the tape, one case per differentiable op."""
from __future__ import annotations

import numpy as np

from e3marl import autodiff as ad

STEP = 1e-6
REL_TOL = 1e-5


def _away_from_zero(rng, shape):
    # keep relu inputs clear of the kink so finite differences are meaningful
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < 0.05, 0.05 * np.sign(x) + 0.05 * (x == 0), x)


def _cases():
    # name -> rng -> (list of input arrays, function of Tensors returning a Tensor)
    def binary(op):
        def make(rng):
            return [rng.standard_normal((3, 4)), rng.standard_normal((1, 4))], op
        return make

    def make_div(rng):
        return [rng.standard_normal((3, 4)), rng.uniform(0.5, 2.0, (3, 1))], ad.div

    def make_matmul(rng):
        return [rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5))], ad.matmul

    def unary(op, shape=(3, 4), sample=None):
        def make(rng):
            x = sample(rng, shape) if sample else rng.standard_normal(shape)
            return [x], op
        return make

    def make_gather(rng):
        idx = rng.integers(0, 5, 9)
        return [rng.standard_normal((5, 2, 3))], lambda a: ad.gather_rows(a, idx)

    def make_scatter(rng):
        idx = rng.integers(0, 4, 7)
        return [rng.standard_normal((7, 3))], lambda a: ad.scatter_add_rows(a, idx, 4)

    def make_concat(rng):
        return ([rng.standard_normal((3, 2)), rng.standard_normal((3, 4))],
                lambda a, b: ad.concat([a, b], axis=1))

    return {
        "add": binary(ad.add),
        "sub": binary(ad.sub),
        "neg": unary(ad.neg),
        "multiply": binary(ad.multiply),
        "div": make_div,
        "relu": unary(ad.relu, sample=_away_from_zero),
        "tanh": unary(ad.tanh),
        "sigmoid": unary(ad.sigmoid),
        "matmul": make_matmul,
        "sum": unary(lambda a: ad.sum_(a, axis=1)),
        "mean": unary(lambda a: ad.mean(a, axis=0, keepdims=True)),
        "l2_norm": unary(lambda a: ad.l2_norm(a, axis=1, keepdims=True), shape=(4, 3, 2)),
        "l2_norm_rows": unary(ad.l2_norm_rows),
        "reshape": unary(lambda a: ad.reshape(a, (2, 6))),
        "concat": make_concat,
        "slice": unary(lambda a: a[1:, ::2]),
        "gather_rows": make_gather,
        "scatter_add_rows": make_scatter,
    }


CASES = _cases()


def check_op(name: str, rng: np.random.Generator) -> float:
    """Max relative error between tape and finite-difference gradients for one instance."""
    inputs, fn = CASES[name](rng)
    # random projection turns any output shape into a scalar loss
    with ad.no_grad():
        out_shape = fn(*[ad.Tensor(x) for x in inputs]).shape
    w = rng.standard_normal(out_shape)

    def loss(arrays):
        with ad.no_grad():
            return float(np.sum(fn(*[ad.Tensor(x) for x in arrays]).data * w))

    params = [ad.Parameter(x) for x in inputs]
    ad.backward(ad.sum_(fn(*params) * w))
    worst = 0.0
    for k, p in enumerate(params):
        num = np.zeros_like(inputs[k])
        for i in np.ndindex(inputs[k].shape):
            hi = [x.copy() for x in inputs]
            lo = [x.copy() for x in inputs]
            hi[k][i] += STEP
            lo[k][i] -= STEP
            num[i] = (loss(hi) - loss(lo)) / (2 * STEP)
        scale = max(np.max(np.abs(num)), np.max(np.abs(p.grad)), 1.0)
        worst = max(worst, float(np.max(np.abs(num - p.grad)) / scale))
    return worst


def run_oracle(instances: int = 20, seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    return {name: max(check_op(name, rng) for _ in range(instances)) for name in ad.OPS}
