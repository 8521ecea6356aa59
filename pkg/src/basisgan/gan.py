"""Conditional GAN pieces: networks, losses, and the one-step update."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import FilterGenConvLayer, StochasticConvLayer, as_rng, sample_latent
from .optim import DivergenceError, make_optimizer
from .tensor import ShapeError, Tensor

EPS = 1e-12


class PlainConv:
    """Deterministic conv with bias; part of the phi parameters."""

    kind = "plain"

    def __init__(self, w, b, padding=None):
        self.w, self.b = w, b
        self.padding = w.shape[-1] // 2 if padding is None else padding

    @classmethod
    def init(cls, rng, cin, cout, L=3):
        rng = as_rng(rng)
        w = T.parameter(rng.standard_normal((cout, cin, L, L)) / np.sqrt(cin * L * L))
        return cls(w, T.parameter(np.zeros(cout)))

    def parameters(self):
        return [self.w, self.b]

    def named_parameters(self, prefix):
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}

    def forward(self, x):
        return T.conv2d(x, self.w, self.padding) + self.b.reshape(1, -1, 1, 1)


@dataclass
class Block:
    layer: object
    act: bool = True
    residual: bool = False

    @property
    def stochastic(self):
        return isinstance(self.layer, StochasticConvLayer)


class GeneratorNet:
    """A chain of conv blocks; blocks holding stochastic layers resample their filters per pass.

    ``latent_mode`` is "per_layer" (independent z per stochastic layer) or
    "shared" (one z fed to every basis generator). With ``per_sample`` each
    batch element gets its own latent instead of one per pass.
    """

    def __init__(self, blocks, out_act="none", pool=False, latent_mode="per_layer"):
        self.blocks = list(blocks)
        self.out_act = out_act
        self.pool = pool
        self.latent_mode = latent_mode
        self.latent_hook = None

    @property
    def stochastic_layers(self):
        return [b.layer for b in self.blocks if b.stochastic]

    @property
    def deterministic_layers(self):
        return [b.layer for b in self.blocks if not b.stochastic]

    def deterministic_parameters(self):
        return [p for layer in self.deterministic_layers for p in layer.parameters()]

    def stochastic_parameters(self):
        return [p for layer in self.stochastic_layers for p in layer.parameters()]

    def parameters(self):
        return [p for b in self.blocks for p in b.layer.parameters()]

    def named_parameters(self):
        out = {}
        for i, b in enumerate(self.blocks):
            out.update(b.layer.named_parameters(f"layer{i}"))
        return out

    def draw_latents(self, rng, n=None):
        layers = self.stochastic_layers
        if not layers:
            return []
        if self.latent_mode == "shared":
            dims = {layer.d_z for layer in layers}
            if len(dims) != 1:
                raise ShapeError(f"shared latent needs equal d_z across layers, got {sorted(dims)}")
            z = sample_latent(rng, dims.pop(), n)
            return [z] * len(layers)
        if self.latent_mode != "per_layer":
            raise ValueError(f"unknown latent_mode {self.latent_mode!r}")
        return [sample_latent(rng, layer.d_z, n) for layer in layers]

    def __call__(self, x, rng=None, per_sample=False, latents=None):
        return self.forward(x, rng, per_sample, latents)[0]

    def forward(self, x, rng=None, per_sample=False, latents=None):
        """Returns (output, latents used)."""
        x = T.as_tensor(x)
        if latents is None:
            latents = self.draw_latents(rng, x.shape[0] if per_sample else None)
        if self.latent_hook is not None:
            self.latent_hook(latents)
        zs = iter(latents)
        h = x
        for b in self.blocks:
            y = b.layer.forward(h, next(zs)) if b.stochastic else b.layer.forward(h)
            if b.act:
                y = T.leaky_relu(y)
            h = h + y if b.residual else y
        if self.pool:
            h = T.mean(h, axis=(2, 3))
        if self.out_act == "tanh":
            h = T.tanh(h)
        return h, latents


class DiscriminatorNet:
    """Scores (condition, output) pairs with a probability clamped into [1e-12, 1 - 1e-12].

    Vector outputs go through an MLP on [condition, output]; images through
    conv + pool stages on channel-stacked (condition, output), then an affine head.
    """

    def __init__(self, convs, dense, image):
        self.convs = convs
        self.dense = dense
        self.image = image

    @classmethod
    def init(cls, rng, cond_dim, out_dim, image=False, hidden=(64, 64), width=16, stages=2):
        rng = as_rng(rng)
        convs = []
        if image:
            cin = cond_dim + out_dim
            for s in range(stages):
                cout = width * 2**s
                convs.append(PlainConv.init(rng, cin, cout))
                cin = cout
            fan = cin
        else:
            fan = cond_dim + out_dim
        dense = []
        for h in list(hidden) + [1]:
            dense.append((T.parameter(rng.standard_normal((h, fan)) / np.sqrt(fan)), T.parameter(np.zeros(h))))
            fan = h
        return cls(convs, dense, image)

    def parameters(self):
        ps = [p for c in self.convs for p in c.parameters()]
        return ps + [p for pair in self.dense for p in pair]

    def named_parameters(self):
        out = {}
        for i, c in enumerate(self.convs):
            out.update(c.named_parameters(f"disc.conv{i}"))
        for i, (w, b) in enumerate(self.dense):
            out[f"disc.dense{i}.w"], out[f"disc.dense{i}.b"] = w, b
        return out

    def logits(self, cond, out):
        h = T.concat([T.as_tensor(cond), T.as_tensor(out)], axis=1)
        if self.image:
            for c in self.convs:
                h = T.avg_pool2d(T.leaky_relu(c.forward(h)))
            h = T.mean(h, axis=(2, 3))
        for i, (w, b) in enumerate(self.dense):
            h = T.matmul(h, w.T) + b
            if i < len(self.dense) - 1:
                h = T.leaky_relu(h)
        return h.reshape(-1)

    def __call__(self, cond, out):
        return T.clamp(T.sigmoid(self.logits(cond, out)), EPS, 1.0 - EPS)


# ---------------------------------------------------------------- losses

def _probabilities(d, name):
    d = T.as_tensor(d)
    if not np.all(np.isfinite(d.data)):
        raise DivergenceError(f"{name} is not finite")
    if not np.all((d.data > 0) & (d.data < 1)):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return T.clamp(d, EPS, 1.0 - EPS)


def d_loss(d_real, d_fake):
    """-log D(real) - log(1 - D(fake)), batch-averaged."""
    r, f = _probabilities(d_real, "d_real"), _probabilities(d_fake, "d_fake")
    return -T.mean(T.log(r)) - T.mean(T.log(1.0 - f))


def g_loss(d_fake, objective="non_saturating"):
    """log(1 - D(fake)) (saturating, as in the minimax game) or -log D(fake)."""
    f = _probabilities(d_fake, "d_fake")
    if objective == "saturating":
        return T.mean(T.log(1.0 - f))
    if objective == "non_saturating":
        return -T.mean(T.log(f))
    raise ValueError(f"unknown objective {objective!r}")


def l1_loss(generated, target):
    generated, target = T.as_tensor(generated), T.as_tensor(target)
    if generated.shape != target.shape:
        raise ShapeError(f"l1_loss shape mismatch: {generated.shape} vs {target.shape}")
    return T.mean(T.absolute(generated - target))


def diversity_regularizer(z1, z2, b1, b2):
    """-|b1 - b2|_1 / (|z1 - z2|_1 + 1e-8); minimizing it spreads outputs per unit latent spread."""
    z1, z2 = np.asarray(z1, dtype=np.float64), np.asarray(z2, dtype=np.float64)
    b1, b2 = T.as_tensor(b1), T.as_tensor(b2)
    if z1.shape != z2.shape or b1.shape != b2.shape:
        raise ShapeError("diversity_regularizer operands must pair up in shape")
    dz = float(np.sum(np.abs(z1 - z2)))
    if dz == 0.0:
        raise ValueError("diversity_regularizer needs distinct latents")
    return -T.tsum(T.absolute(b1 - b2)) / (dz + 1e-8)


def batch_diversity_regularizer(lat1, lat2, b1, b2, per_sample, clip=0.0):
    """Regularizer over a batch: one ratio per sample (per-sample latents) or for the whole pass.

    ``clip > 0`` caps each ratio at that value, as DSGAN does; once a ratio passes
    the cap it stops pulling, so the generator cannot buy loss by blowing up its outputs.
    """
    z1 = np.concatenate([np.atleast_2d(z) for z in lat1], axis=-1)
    z2 = np.concatenate([np.atleast_2d(z) for z in lat2], axis=-1)
    if not per_sample:
        reg = diversity_regularizer(z1, z2, b1, b2)
        return -T.clamp(-reg, 0.0, clip) if clip > 0 else reg
    n = b1.shape[0]
    dz = np.sum(np.abs(z1 - z2), axis=1)
    if np.any(dz == 0.0):
        raise ValueError("diversity_regularizer needs distinct latents")
    ratio = T.tsum(T.absolute(b1 - b2).reshape(n, -1), axis=1) / (dz + 1e-8)
    if clip > 0:
        ratio = T.clamp(ratio, 0.0, clip)
    return -T.mean(ratio)


# ---------------------------------------------------------------- training step

@dataclass
class MetricsRow:
    step: int
    loss_d: float
    loss_g: float
    loss_l1: float
    diversity: float = math.nan
    jsd_est: float = math.nan
    mode_coverage: float = math.nan

    FIELDS = ("step", "loss_d", "loss_g", "loss_l1", "diversity", "jsd_est", "mode_coverage")

    def csv(self):
        return ",".join(str(self.step) if f == "step" else repr(float(getattr(self, f))) for f in self.FIELDS)


@dataclass
class Batch:
    cond: np.ndarray  # generator input
    cond_d: np.ndarray  # condition as the discriminator sees it
    target: np.ndarray


class Trainer:
    """Holds both nets and their optimizers across steps."""

    def __init__(self, gen, disc, config):
        self.gen, self.disc, self.config = gen, disc, config
        self.opt_g = make_optimizer(config.optimizer, gen.parameters(), config.alpha)
        self.opt_d = make_optimizer(config.optimizer, disc.parameters(), config.alpha)
        self.step = 0


def _finite(value, what):
    if not math.isfinite(value):
        raise DivergenceError(f"{what} became {value}")
    return value


def train_step(trainer, batch, rng):
    """One discriminator update then one generator update; latents drawn fresh for each."""
    trainer.step += 1
    step = trainer.step
    if len(batch.target) == 0:
        raise ValueError("empty batch")

    try:
        return _update(trainer, batch, rng, step)
    except DivergenceError as exc:
        raise DivergenceError(f"{exc} (step {step})") from None


def _update(trainer, batch, rng, step):
    cfg, gen, disc = trainer.config, trainer.gen, trainer.disc
    fake = gen(batch.cond, rng, cfg.per_sample).detach()
    loss_d = d_loss(disc(batch.cond_d, batch.target), disc(batch.cond_d, fake))
    _finite(loss_d.item(), "discriminator loss")
    trainer.opt_d.zero_grad()
    T.backward(loss_d)
    trainer.opt_d.step()

    fake, lat = gen.forward(batch.cond, rng, cfg.per_sample)
    adv = g_loss(disc(batch.cond_d, fake), cfg.objective)
    l1 = l1_loss(fake, batch.target)
    total = adv + cfg.lambda_l1 * l1 if cfg.lambda_l1 else adv
    if cfg.lambda_div and gen.stochastic_layers:
        fake2, lat2 = gen.forward(batch.cond, rng, cfg.per_sample)
        total = total + cfg.lambda_div * batch_diversity_regularizer(lat, lat2, fake, fake2, cfg.per_sample, cfg.div_clip)
    _finite(total.item(), "generator loss")
    trainer.opt_g.zero_grad()
    trainer.opt_d.zero_grad()
    T.backward(total)
    trainer.opt_g.step()
    return MetricsRow(step, loss_d.item(), adv.item(), l1.item())


def build_generator(rng, cin, cout, width=16, n_encoder=2, n_stochastic=2, n_decoder=2,
                    stochastic="basis", K=7, d_z=64, d_h=64, L=3, residual=True,
                    out_act="none", pool=False, latent_mode="per_layer"):
    """encoder convs -> stochastic convs -> decoder convs, the last one linear.

    ``stochastic`` picks the middle layers: "basis", "filtergen", or "none"
    (plain convs, giving a fully deterministic generator).
    """
    rng = as_rng(rng)
    blocks, c = [], cin
    for _ in range(n_encoder):
        blocks.append(Block(PlainConv.init(rng, c, width, L)))
        c = width
    for _ in range(n_stochastic):
        if stochastic == "basis":
            layer = StochasticConvLayer.init(rng, c, width, K=K, d_z=d_z, d_h=d_h, L=L, latent_mode=latent_mode)
        elif stochastic == "filtergen":
            layer = FilterGenConvLayer.init(rng, c, width, d_z=d_z, d_h=d_h, L=L, latent_mode=latent_mode)
        elif stochastic == "none":
            layer = PlainConv.init(rng, c, width, L)
        else:
            raise ValueError(f"unknown stochastic layer kind {stochastic!r}")
        blocks.append(Block(layer, residual=residual and c == width))
        c = width
    for i in range(n_decoder):
        last = i == n_decoder - 1
        blocks.append(Block(PlainConv.init(rng, c, cout if last else width, L), act=not last))
        c = width
    return GeneratorNet(blocks, out_act=out_act, pool=pool, latent_mode=latent_mode)
