"""Stochastic convolution layers.

A basis generator maps a Gaussian latent to K spatial basis kernels
psi (L x L x K); deterministic coefficients a (K x Cin x Cout) mix them into
a full filter bank, w[c, c', u] = sum_k psi[u, k] a[k, c', c]. The direct
filter generator emits the whole bank from the latent instead, which is the
expensive baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


def as_rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample_latent(rng, d_z, n=None):
    """i.i.d. N(0, 1) latent of length d_z, or an (n, d_z) block of them."""
    if d_z < 1:
        raise ValueError(f"latent dimension must be >= 1, got {d_z}")
    rng = as_rng(rng)
    return rng.standard_normal(d_z if n is None else (n, d_z))


def _gaussian(rng, shape, fan_in):
    return T.parameter(rng.standard_normal(shape) / np.sqrt(fan_in))


def _mlp(z, W1, b1, W2, b2, d_z):
    z = T.as_tensor(z)
    if z.shape[-1] != d_z or z.ndim not in (1, 2):
        raise ShapeError(f"latent of shape {z.shape} does not match d_z={d_z}")
    hidden = T.leaky_relu(T.matmul(z.reshape(-1, d_z), W1.T) + b1)
    return T.matmul(hidden, W2.T) + b2  # linear output layer


@dataclass
class BasisGenerator:
    """Single-hidden-layer net from latent z (d_z) to basis tensor psi (L, L, K)."""

    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    d_z: int
    d_h: int
    L: int
    K: int

    @classmethod
    def init(cls, rng, d_z=64, d_h=64, L=3, K=7):
        rng = as_rng(rng)
        out = L * L * K
        return cls(_gaussian(rng, (d_h, d_z), d_z), T.parameter(np.zeros(d_h)),
                   _gaussian(rng, (out, d_h), d_h), T.parameter(np.zeros(out)), d_z, d_h, L, K)

    def parameters(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def __call__(self, z):
        return generate_basis(self, z)


def generate_basis(gen, z):
    """psi = reshape(W2 leaky(W1 z + b1) + b2). A (n, d_z) latent gives (n, L, L, K)."""
    flat = _mlp(z, gen.W1, gen.b1, gen.W2, gen.b2, gen.d_z)
    shape = (gen.L, gen.L, gen.K) if np.ndim(getattr(z, "data", z)) == 1 else (-1, gen.L, gen.L, gen.K)
    return flat.reshape(shape)


def reconstruct_filters(psi, a):
    """Filter bank w (Cout, Cin, L, L) from basis psi (L, L, K) and coefficients a (K, Cin, Cout).

    A batched psi (n, L, L, K) yields (n, Cout, Cin, L, L).
    """
    psi, a = T.as_tensor(psi), T.as_tensor(a)
    if a.ndim != 3:
        raise ShapeError(f"coefficients must be (K, Cin, Cout), got {a.shape}")
    K, cin, cout = a.shape
    if psi.shape[-1] != K:
        raise ShapeError(f"basis has K={psi.shape[-1]} elements, coefficients expect K={K}")
    L = psi.shape[-2]
    batched = psi.ndim == 4
    lead = psi.shape[:1] if batched else ()
    mixed = T.matmul(psi.reshape(lead + (L * L, K)), a.reshape(K, cin * cout))
    mixed = mixed.reshape(lead + (L, L, cin, cout))
    return mixed.transpose((0, 4, 3, 1, 2) if batched else (3, 2, 0, 1))


@dataclass
class FilterGenerator:
    """Single-hidden-layer net from latent z to a whole (Cout, Cin, L, L) bank."""

    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    d_z: int
    d_h: int
    L: int
    cin: int
    cout: int

    @classmethod
    def init(cls, rng, cin, cout, d_z=64, d_h=64, L=3):
        rng = as_rng(rng)
        out = L * L * cin * cout
        W2 = rng.standard_normal((out, d_h)) / np.sqrt(d_h)
        # scale so sampled banks match the basis path's filter variance
        W2 /= np.sqrt(cin)
        return cls(_gaussian(rng, (d_h, d_z), d_z), T.parameter(np.zeros(d_h)),
                   T.parameter(W2), T.parameter(np.zeros(out)), d_z, d_h, L, cin, cout)

    def parameters(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def __call__(self, z):
        return generate_filters_direct(self, z)


def generate_filters_direct(gen, z):
    flat = _mlp(z, gen.W1, gen.b1, gen.W2, gen.b2, gen.d_z)
    shape = (gen.cout, gen.cin, gen.L, gen.L)
    return flat.reshape(shape if np.ndim(getattr(z, "data", z)) == 1 else (-1,) + shape)


class StochasticConvLayer:
    """Conv layer whose filters are rebuilt from freshly sampled bases each pass."""

    kind = "basis"

    def __init__(self, coefficients, generator, padding=None, latent_mode="per_layer"):
        self.coefficients = coefficients
        self.generator = generator
        self.padding = generator.L // 2 if padding is None else padding
        self.latent_mode = latent_mode

    @classmethod
    def init(cls, rng, cin, cout, K=7, d_z=64, d_h=64, L=3, **kw):
        rng = as_rng(rng)
        gen = BasisGenerator.init(rng, d_z, d_h, L, K)
        a = T.parameter(rng.standard_normal((K, cin, cout)) / np.sqrt(K * cin))
        return cls(a, gen, **kw)

    @property
    def d_z(self):
        return self.generator.d_z

    @property
    def cin(self):
        return self.coefficients.shape[1]

    @property
    def cout(self):
        return self.coefficients.shape[2]

    def parameters(self):
        return self.generator.parameters() + [self.coefficients]

    def named_parameters(self, prefix):
        g = self.generator
        return {f"{prefix}.W1": g.W1, f"{prefix}.b1": g.b1, f"{prefix}.W2": g.W2,
                f"{prefix}.b2": g.b2, f"{prefix}.a": self.coefficients}

    def filters(self, z):
        return reconstruct_filters(generate_basis(self.generator, z), self.coefficients)

    def forward(self, x, z):
        return T.conv2d(x, self.filters(z), self.padding)


class FilterGenConvLayer(StochasticConvLayer):
    """Same contract as StochasticConvLayer, filters emitted directly by a generator."""

    kind = "filtergen"

    def __init__(self, generator, padding=None, latent_mode="per_layer"):
        self.generator = generator
        self.padding = generator.L // 2 if padding is None else padding
        self.latent_mode = latent_mode

    @classmethod
    def init(cls, rng, cin, cout, d_z=64, d_h=64, L=3, **kw):
        return cls(FilterGenerator.init(rng, cin, cout, d_z, d_h, L), **kw)

    @property
    def cin(self):
        return self.generator.cin

    @property
    def cout(self):
        return self.generator.cout

    def parameters(self):
        return self.generator.parameters()

    def named_parameters(self, prefix):
        g = self.generator
        return {f"{prefix}.W1": g.W1, f"{prefix}.b1": g.b1, f"{prefix}.W2": g.W2, f"{prefix}.b2": g.b2}

    def filters(self, z):
        return generate_filters_direct(self.generator, z)


def stochastic_conv(x, layer, rng, per_sample=False):
    """Draw a latent, build the layer's filters, convolve. Returns (output, z)."""
    x = T.as_tensor(x)
    if x.shape[-3] != layer.cin:
        raise ShapeError(f"input has {x.shape[-3]} channels, layer expects Cin={layer.cin}")
    n = x.shape[0] if per_sample and x.ndim == 4 else None
    z = sample_latent(rng, layer.d_z, n)
    return layer.forward(x, z), z


def count_params(L, cin, cout, K, d_z, d_h):
    """Trainable parameter counts (biases included) for one conv layer in three styles."""
    for name, v in dict(L=L, cin=cin, cout=cout, K=K, d_z=d_z, d_h=d_h).items():
        if v < 1:
            raise ValueError(f"{name} must be positive, got {v}")
    hidden = d_h * d_z + d_h
    bank = L * L * cin * cout
    return {
        "baseline": bank,
        "basis": K * cin * cout + hidden + L * L * K * d_h + L * L * K,
        "filtergen": hidden + bank * d_h + bank,
    }
