"""Finite-difference audit of the differentiable ops used in training."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .gan import d_loss, diversity_regularizer, g_loss
from .layers import BasisGenerator, StochasticConvLayer, generate_basis, reconstruct_filters

TOLERANCE = 1e-4
STEP = 1e-5


def rel_error(analytic, numeric):
    """Norm-wise relative error, guarded for gradients that are both near zero."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-10)
    return float(diff / scale)


def check(build, inputs, h=STEP):
    """Max relative error over every input of ``build`` (dict of arrays -> scalar Tensor)."""
    params = {k: T.parameter(np.array(v, dtype=np.float64)) for k, v in inputs.items()}
    T.backward(build(params))
    worst = 0.0
    for name, p in params.items():
        def f(arr, name=name):
            trial = {k: T.Tensor(arr if k == name else v.data) for k, v in params.items()}
            return build(trial)
        numeric = T.finite_diff_grad(f, p.data, h)
        worst = max(worst, rel_error(p.grad, numeric))
    return worst


def _projector(rng, shape):
    """Random linear functional, so every output entry feeds the scalar."""
    r = rng.standard_normal(shape)
    return lambda t: T.tsum(t * r)


def _conv2d(rng):
    n, cin, cout, s = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4), rng.integers(3, 6)
    L = int(rng.choice([1, 3]))
    pad = int(rng.integers(0, L // 2 + 2))
    x = rng.standard_normal((n, cin, s, s))
    w = rng.standard_normal((cout, cin, L, L))
    out = s + 2 * pad - L + 1
    proj = _projector(rng, (n, cout, out, out))
    return lambda p: proj(T.conv2d(p["x"], p["w"], pad)), {"x": x, "w": w}


def _generate_basis(rng):
    d_z, d_h, L, K = rng.integers(2, 6), rng.integers(2, 6), int(rng.choice([1, 3])), rng.integers(1, 5)
    g = BasisGenerator.init(rng, d_z, d_h, L, K)
    z = rng.standard_normal(d_z)
    proj = _projector(rng, (L, L, K))

    def build(p):
        gen = BasisGenerator(p["W1"], p["b1"], p["W2"], p["b2"], d_z, d_h, L, K)
        return proj(generate_basis(gen, p["z"]))
    inputs = {k: getattr(g, k).data for k in ("W1", "b1", "W2", "b2")}
    # nonzero biases keep the leaky kink away from the probe points
    inputs["b1"] = rng.standard_normal(d_h)
    inputs["b2"] = rng.standard_normal(inputs["b2"].shape)
    return build, dict(inputs, z=z)


def _reconstruct(rng):
    L, K, cin, cout = int(rng.choice([1, 3])), rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 4)
    psi = rng.standard_normal((L, L, K))
    a = rng.standard_normal((K, cin, cout))
    proj = _projector(rng, (cout, cin, L, L))
    return lambda p: proj(reconstruct_filters(p["psi"], p["a"])), {"psi": psi, "a": a}


def _stochastic_conv(rng):
    cin, cout, K, d_z, d_h = (int(v) for v in rng.integers(1, 4, size=5))
    s = int(rng.integers(3, 6))
    layer = StochasticConvLayer.init(rng, cin, cout, K, d_z, d_h, 3)
    z = rng.standard_normal(d_z)  # fixed latent
    x = rng.standard_normal((2, cin, s, s))
    proj = _projector(rng, (2, cout, s, s))
    g = layer.generator

    def build(p):
        gen = BasisGenerator(p["W1"], p["b1"], p["W2"], p["b2"], g.d_z, g.d_h, g.L, g.K)
        return proj(StochasticConvLayer(p["a"], gen).forward(p["x"], z))
    inputs = {"x": x, "a": layer.coefficients.data, "W1": g.W1.data, "b1": rng.standard_normal(g.d_h),
              "W2": g.W2.data, "b2": rng.standard_normal(g.b2.shape)}
    return build, inputs


def _probs(rng, n):
    return rng.uniform(0.05, 0.95, n)


def _d_loss(rng):
    n = int(rng.integers(1, 8))
    return lambda p: d_loss(p["r"], p["f"]), {"r": _probs(rng, n), "f": _probs(rng, n)}


def _g_loss(objective):
    def make(rng):
        return lambda p: g_loss(p["f"], objective), {"f": _probs(rng, int(rng.integers(1, 8)))}
    return make


def _diversity(rng):
    n = int(rng.integers(1, 6))
    z1, z2 = rng.standard_normal(4), rng.standard_normal(4)
    return (lambda p: diversity_regularizer(z1, z2, p["b1"], p["b2"]),
            {"b1": rng.standard_normal(n), "b2": rng.standard_normal(n)})


SUITES = {
    "conv2d": _conv2d,
    "generate_basis": _generate_basis,
    "reconstruct_filters": _reconstruct,
    "stochastic_conv": _stochastic_conv,
    "d_loss": _d_loss,
    "g_loss_saturating": _g_loss("saturating"),
    "g_loss_non_saturating": _g_loss("non_saturating"),
    "diversity_regularizer": _diversity,
}


@dataclass
class SuiteResult:
    op: str
    instances: int
    max_rel_error: float
    seconds: float

    @property
    def passed(self):
        return self.max_rel_error < TOLERANCE


def run_suite(instances=20, seed=0, ops=None):
    rows = []
    for i, (op, make) in enumerate(SUITES.items()):
        if ops is not None and op not in ops:
            continue
        rng = np.random.default_rng((seed, i))
        t0 = time.perf_counter()
        worst = max(check(*make(rng)) for _ in range(instances))
        rows.append(SuiteResult(op, instances, worst, time.perf_counter() - t0))
    return rows
