"""Central-difference verification of backward rules."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ckd.engine import ops
from ckd.engine.tensor import Tensor


def _dyadic_step(eps: float) -> float:
    # a power-of-two step keeps x +/- h exact for moderately sized x
    return 2.0 ** math.floor(math.log2(eps))


def numerical_grad(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    h = _dyadic_step(eps)
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = f(Tensor(x)).item()
        flat[i] = orig - h
        minus = f(Tensor(x)).item()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2.0 * h)
    return grad


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-6) -> float:
    """Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).

    ``f`` must return a single-element tensor. The finite-difference step is
    ``eps`` rounded down to a power of two.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(x0.copy(), requires_grad=True)
    out = f(xt)
    if out.size != 1:
        raise ValueError(f"grad_check needs a scalar-valued function, got output shape {out.shape}")
    out.backward()
    analytic = xt.grad if xt.grad is not None else np.zeros_like(x0)
    numeric = numerical_grad(f, x0, eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


# -- registry used by the `grad-check` CLI and the test-suite ------------------

def _rand(rng, *shape, low=-1.0, high=1.0):
    return rng.uniform(low, high, shape)


def _weighted(rng, shape):
    """A fixed random projection so every output coordinate matters."""
    w = Tensor(rng.normal(size=shape))
    return lambda y: ops.sum(ops.mul(y, w))


def _case_matmul(rng):
    b = Tensor(_rand(rng, 4, 3))
    proj = _weighted(rng, (3, 3))
    return (lambda x: proj(ops.matmul(x, b))), _rand(rng, 3, 4)


def _case_bmm(rng):
    b = Tensor(_rand(rng, 2, 4, 3))
    proj = _weighted(rng, (2, 3, 3))
    return (lambda x: proj(ops.matmul(x, b))), _rand(rng, 2, 3, 4)


def _case_conv2d(rng):
    w = Tensor(_rand(rng, 3, 2, 3, 3))
    bias = Tensor(_rand(rng, 3))
    proj = _weighted(rng, (2, 3, 5, 5))
    return (lambda x: proj(ops.conv2d(x, w, bias, padding=1))), _rand(rng, 2, 2, 5, 5)


def _case_conv2d_weight(rng):
    x = Tensor(_rand(rng, 2, 2, 5, 4))
    proj = _weighted(rng, (2, 3, 5, 4))
    return (lambda w: proj(ops.conv2d(x, w, padding=1))), _rand(rng, 3, 2, 3, 3)


def _case_conv2d_nopad(rng):
    w = Tensor(_rand(rng, 2, 1, 3, 3))
    proj = _weighted(rng, (1, 2, 3, 4))
    return (lambda x: proj(ops.conv2d(x, w, padding=0))), _rand(rng, 1, 1, 5, 6)


def _case_maxpool(rng):
    proj = _weighted(rng, (2, 2, 2, 2))
    return (lambda x: proj(ops.max_pool2d(x, 2))), _rand(rng, 2, 2, 4, 5)


def _case_avgpool(rng):
    proj = _weighted(rng, (2, 2, 2, 2))
    return (lambda x: proj(ops.avg_pool2d(x, 2))), _rand(rng, 2, 2, 4, 5)


def _elementwise(name):
    def case(rng):
        other = Tensor(_rand(rng, 3, 4, low=0.5, high=1.5))
        proj = _weighted(rng, (3, 4))
        fn = {"add": ops.add, "mul": ops.mul, "sub": ops.sub, "div": ops.div}[name]
        return (lambda x: proj(fn(x, other))), _rand(rng, 3, 4)
    case.__name__ = f"_case_{name}"
    return case


def _case_broadcast_add(rng):
    other = Tensor(_rand(rng, 3, 4))
    proj = _weighted(rng, (3, 4))
    return (lambda x: proj(ops.add(other, x))), _rand(rng, 1, 4)


def _case_divisor(rng):
    num = Tensor(_rand(rng, 3, 4))
    proj = _weighted(rng, (3, 4))
    return (lambda x: proj(ops.div(num, x))), _rand(rng, 3, 4, low=0.5, high=1.5)


def _case_scale(rng):
    proj = _weighted(rng, (5,))
    return (lambda x: proj(ops.scale(x, -2.5))), _rand(rng, 5)


def _unary(name, low=-2.0, high=2.0):
    def case(rng):
        proj = _weighted(rng, (3, 4))
        fn = getattr(ops, name)
        x = _rand(rng, 3, 4, low=low, high=high)
        if name == "relu":
            # keep clear of the kink
            x = np.where(np.abs(x) < 1e-3, 0.5, x)
        return (lambda t: proj(fn(t))), x
    case.__name__ = f"_case_{name}"
    return case


def _case_sum_axis(rng):
    proj = _weighted(rng, (2, 4))
    return (lambda x: proj(ops.sum(x, axis=1))), _rand(rng, 2, 3, 4)


def _case_mean_axis(rng):
    proj = _weighted(rng, (2, 3))
    return (lambda x: proj(ops.mean(x, axis=-1))), _rand(rng, 2, 3, 4)


def _case_mean_full(rng):
    return (lambda x: ops.mean(ops.mul(x, x))), _rand(rng, 3, 4)


def _case_reshape(rng):
    proj = _weighted(rng, (4, 6))
    return (lambda x: proj(ops.flatten(ops.reshape(x, (4, 3, 2))))), _rand(rng, 2, 12)


def _case_concat(rng):
    other = Tensor(_rand(rng, 2, 3))
    proj = _weighted(rng, (2, 7))
    return (lambda x: proj(ops.concatenate([other, x], axis=1))), _rand(rng, 2, 4)


def _case_transpose(rng):
    proj = _weighted(rng, (4, 2, 3))
    return (lambda x: proj(ops.transpose(x, (2, 0, 1)))), _rand(rng, 2, 3, 4)


def _case_index(rng):
    proj = _weighted(rng, (3, 4))
    return (lambda x: proj(x[1])), _rand(rng, 2, 3, 4)


def _case_frobenius(rng):
    return (lambda x: ops.frobenius_norm(x)), _rand(rng, 3, 4)


def _case_lif_network(rng):
    """1-layer conv-LIF net unrolled over time; smooth spikes make FD meaningful."""
    from ckd.spiking import LifConfig, lif_scan

    cfg = LifConfig(tau_leak=0.5, v_threshold=1.0, surrogate_width=1.0)
    frames = Tensor(_rand(rng, 3 * 2, 2, 4, 4, low=0.0, high=1.0))
    proj = _weighted(rng, (3 * 2, 3, 2, 2))

    def f(w):
        cur = ops.conv2d(frames, w, padding=1)
        s = lif_scan(ops.reshape(cur, (3, 2, 3, 4, 4)), cfg, smooth=True)
        return proj(ops.avg_pool2d(ops.reshape(s, (6, 3, 4, 4)), 2))

    return f, _rand(rng, 3, 2, 3, 3, low=-0.5, high=1.0)


def _case_lif_step_chain(rng):
    from ckd.spiking import LifConfig, lif_step

    cfg = LifConfig(tau_leak=0.7, v_threshold=1.0, surrogate_width=1.0)
    proj = _weighted(rng, (6,))

    def f(currents):
        u = Tensor(np.zeros(6))
        total = None
        for t in range(currents.shape[0]):
            u, s = lif_step(u, currents[t], cfg, smooth=True)
            total = s if total is None else ops.add(total, s)
        return proj(total)

    return f, _rand(rng, 4, 6, low=0.0, high=1.2)


REGISTRY: dict[str, Callable] = {
    "matmul": _case_matmul,
    "matmul_batched": _case_bmm,
    "conv2d": _case_conv2d,
    "conv2d_weight": _case_conv2d_weight,
    "conv2d_nopad": _case_conv2d_nopad,
    "max_pool2d": _case_maxpool,
    "avg_pool2d": _case_avgpool,
    "add": _elementwise("add"),
    "add_broadcast": _case_broadcast_add,
    "sub": _elementwise("sub"),
    "mul": _elementwise("mul"),
    "div": _elementwise("div"),
    "div_divisor": _case_divisor,
    "scale": _case_scale,
    "relu": _unary("relu"),
    "sigmoid": _unary("sigmoid"),
    "exp": _unary("exp"),
    "log": _unary("log", low=0.2, high=3.0),
    "sqrt": _unary("sqrt", low=0.2, high=3.0),
    "softmax": _unary("softmax"),
    "log_softmax": _unary("log_softmax"),
    "sum_axis": _case_sum_axis,
    "mean_axis": _case_mean_axis,
    "mean_full": _case_mean_full,
    "reshape_flatten": _case_reshape,
    "concatenate": _case_concat,
    "transpose": _case_transpose,
    "index": _case_index,
    "frobenius_norm": _case_frobenius,
    "lif_step_chain": _case_lif_step_chain,
    "lif_network": _case_lif_network,
}


def run_registry(seeds=range(10), eps: float = 1e-6) -> dict[str, float]:
    """Worst relative error per registered case over the given seeds."""
    worst: dict[str, float] = {}
    for name, case in REGISTRY.items():
        err = 0.0
        for seed in seeds:
            f, x = case(np.random.default_rng(seed))
            err = max(err, grad_check(f, x, eps))
        worst[name] = err
    return worst
