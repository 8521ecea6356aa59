"""Synthetic conditional tasks with known p(B | A).

gmm      condition id -> point in R^2 from a two-component mixture
shapes   edge map of a rectangle/ellipse -> the same shape filled with a palette color
autoenc  colored shape image -> itself
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TASKS = ("gmm", "shapes", "autoenc")

DEFAULT_PALETTE = (
    (1.0, -1.0, -1.0),
    (-1.0, 1.0, -1.0),
    (-1.0, -1.0, 1.0),
    (1.0, 1.0, -1.0),
)


def _default_centers():
    return (((-2.0, 0.0), (2.0, 0.0)), ((0.0, -2.0), (0.0, 2.0)))


@dataclass
class TaskSpec:
    id: str = "gmm"
    sigma: float = 0.1
    centers: tuple = field(default_factory=_default_centers)
    grid: int = 4
    image_size: int = 16
    palette_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.id not in TASKS:
            raise ValueError(f"unknown task {self.id!r}; expected one of {TASKS}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 1 <= self.palette_size <= len(DEFAULT_PALETTE):
            raise ValueError(f"palette_size must be in 1..{len(DEFAULT_PALETTE)}")
        if self.image_size < 8:
            raise ValueError("image_size must be >= 8")

    @property
    def n_conditions(self):
        return len(self.centers)

    @property
    def palette(self):
        return np.array(DEFAULT_PALETTE[: self.palette_size])

    def modes(self, condition):
        return np.asarray(self.centers[condition], dtype=np.float64)


@dataclass
class ConditionalSample:
    condition: object
    target: np.ndarray
    meta: dict = field(default_factory=dict)


def _check_condition(A, spec):
    if not (isinstance(A, (int, np.integer)) and 0 <= A < spec.n_conditions):
        raise ValueError(f"unknown condition {A!r} for a task with {spec.n_conditions} conditions")


# ---------------------------------------------------------------- gmm

def gmm_sample(A, spec, rng):
    _check_condition(A, spec)
    modes = spec.modes(A)
    k = int(rng.integers(len(modes)))
    return ConditionalSample(A, modes[k] + spec.sigma * rng.standard_normal(2), {"component": k})


def gmm_batch(spec, rng, n, conditions=None):
    """n draws; returns (condition ids, targets (n, 2), component ids)."""
    if conditions is None:
        conditions = rng.integers(spec.n_conditions, size=n)
    conditions = np.asarray(conditions)
    comps = rng.integers(2, size=n)
    centers = np.asarray(spec.centers, dtype=np.float64)
    targets = centers[conditions, comps] + spec.sigma * rng.standard_normal((n, 2))
    return conditions, targets, comps


def gmm_density(A, B, spec):
    _check_condition(A, spec)
    B = np.asarray(B, dtype=np.float64)
    modes = spec.modes(A)
    s2 = spec.sigma**2
    d2 = np.sum((B[..., None, :] - modes) ** 2, axis=-1)
    return np.mean(np.exp(-0.5 * d2 / s2), axis=-1) / (2.0 * np.pi * s2)


# ---------------------------------------------------------------- shapes

def random_shape(rng, size):
    """Parameters of a random axis-aligned rectangle or ellipse inside the canvas."""
    if rng.random() < 0.5:
        h, w = rng.integers(4, size - 3, size=2)
        top, left = rng.integers(1, size - h), rng.integers(1, size - w)
        return ("rect", int(top), int(left), int(h), int(w))
    ry, rx = rng.integers(2, size // 2 - 1, size=2)
    cy = rng.integers(ry + 1, size - ry - 1)
    cx = rng.integers(rx + 1, size - rx - 1)
    return ("ellipse", int(cy), int(cx), int(ry), int(rx))


def rasterize(shape, size):
    """Boolean fill mask; a pixel is inside when its integer center is."""
    ii, jj = np.mgrid[0:size, 0:size]
    kind, a, b, c, d = shape
    if kind == "rect":
        return (ii >= a) & (ii < a + c) & (jj >= b) & (jj < b + d)
    return ((ii - a) / c) ** 2 + ((jj - b) / d) ** 2 <= 1.0


def erode(mask):
    padded = np.pad(mask, 1)
    return (mask & padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])


def dilate(mask):
    padded = np.pad(mask, 1)
    return (mask | padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:])


def edge_map(fill):
    """Inner boundary: fill pixels with a 4-neighbour outside the fill."""
    return fill & ~erode(fill)


def paint(fill, color):
    img = -np.ones((3,) + fill.shape)
    img[:, fill] = np.asarray(color, dtype=np.float64)[:, None]
    return img


def shapes_sample(spec, rng, shape=None):
    """A = (1, S, S) binary edge map, B = (3, S, S) image with the shape in a random palette color."""
    if shape is None:
        shape = random_shape(rng, spec.image_size)
    fill = rasterize(shape, spec.image_size)
    color = int(rng.integers(spec.palette_size))
    A = edge_map(fill).astype(np.float64)[None]
    return ConditionalSample(A, paint(fill, spec.palette[color]), {"color": color, "shape": shape})


def autoenc_sample(spec, rng):
    s = shapes_sample(spec, rng)
    return ConditionalSample(s.target.copy(), s.target, s.meta)


def sample(spec, rng):
    if spec.id == "gmm":
        return gmm_sample(int(rng.integers(spec.n_conditions)), spec, rng)
    if spec.id == "shapes":
        return shapes_sample(spec, rng)
    return autoenc_sample(spec, rng)


def sample_at(spec, index):
    """Draw number ``index`` of the task's stream; a pure function of (spec, seed, index)."""
    return sample(spec, np.random.default_rng((spec.seed, index)))


def image_batch(spec, rng, n):
    """(A, B, colors) stacked for the image tasks."""
    draws = [shapes_sample(spec, rng) if spec.id == "shapes" else autoenc_sample(spec, rng) for _ in range(n)]
    A = np.stack([d.condition for d in draws])
    B = np.stack([d.target for d in draws])
    return A, B, np.array([d.meta["color"] for d in draws])


def condition_maps(spec, conditions):
    """One-hot condition ids broadcast over a grid x grid map: (n, M, grid, grid)."""
    conditions = np.asarray(conditions)
    onehot = np.eye(spec.n_conditions)[conditions]
    return np.broadcast_to(onehot[:, :, None, None], onehot.shape + (spec.grid, spec.grid)).copy()


def condition_channels(spec):
    if spec.id == "gmm":
        return spec.n_conditions
    return 1 if spec.id == "shapes" else 3


def target_channels(spec):
    return 2 if spec.id == "gmm" else 3
