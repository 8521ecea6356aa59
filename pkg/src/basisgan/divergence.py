"""Discrete divergences, the optimal discriminator, and sample-based diagnostics.

Natural logarithms throughout, so the value of the game at the optimal
discriminator is -log 4 + 2 JSD.
"""

from __future__ import annotations

import math

import numpy as np

LOG4 = math.log(4.0)


def check_distribution(p, name="p", tol=1e-12):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise ValueError(f"{name} is not a probability vector (sum={p.sum()!r})")
    return p


def random_pair(rng, support):
    """A pair of strictly positive probability vectors from a flat Dirichlet."""
    p = rng.dirichlet(np.ones(support))
    q = rng.dirichlet(np.ones(support))
    return p, q


def kl(p, q):
    """sum p log(p / q) with 0 log 0 = 0; +inf if p puts mass where q has none."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def jsd(p, q):
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def optimal_discriminator(p, q):
    """p / (p + q) per support point; 0.5 where neither distribution has mass."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    total = p + q
    d = np.full_like(p, 0.5)
    np.divide(p, total, out=d, where=total > 0)
    return d


def gan_value(p, q, d):
    """sum p log d + sum q log(1 - d); a log of zero under positive mass gives -inf."""
    p, q, d = (np.asarray(v, dtype=np.float64) for v in (p, q, d))
    total = 0.0
    for mass, prob in ((p, d), (q, 1.0 - d)):
        live = mass > 0
        if np.any(prob[live] <= 0):
            return -math.inf
        total += float(np.sum(mass[live] * np.log(prob[live])))
    return total


def verify_eq3(pairs, grid_step=1e-3):
    """Check the value at the optimal discriminator against -log 4 + 2 JSD.

    Returns a dict with the worst identity deviation over ``pairs`` and, for a
    2-state true distribution taken from the first pair, the grid argmin of
    C(q) = max_D V(D, q) together with its distance from p.
    """
    if not pairs:
        raise ValueError("verify_eq3 needs at least one pair")
    worst = 0.0
    for p, q in pairs:
        value = gan_value(p, q, optimal_discriminator(p, q))
        worst = max(worst, abs(value - (-LOG4 + 2.0 * jsd(p, q))))

    p0 = np.asarray(pairs[0][0], dtype=np.float64)
    p2 = np.array([p0[0], 1.0 - p0[0]]) if p0.size != 2 else p0
    grid = np.arange(0.0, 1.0 + grid_step / 2, grid_step)
    costs = [gan_value(p2, np.array([g, 1.0 - g]), optimal_discriminator(p2, np.array([g, 1.0 - g])))
             for g in grid]
    q_star = float(grid[int(np.argmin(costs))])
    return {
        "max_deviation": worst,
        "grid_p": float(p2[0]),
        "grid_argmin_q": q_star,
        "argmin_error": abs(q_star - float(p2[0])),
        "min_cost": float(np.min(costs)),
    }


def _histogram(samples, bins, range_):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
        if range_ is not None and np.ndim(range_) == 1:
            range_ = [range_]
    counts, _ = np.histogramdd(samples, bins=bins, range=range_)
    return counts


def jsd_from_samples(xs, ys, bins=50, range=None, smoothing=0.5, min_samples=100):
    """JSD between histograms of two sample sets, each bin padded by ``smoothing`` counts.

    ``bins``/``range`` follow numpy.histogramdd; 1-d samples may give a plain
    (lo, hi) range. Both sets are binned on the same grid.
    """
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if len(xs) < min_samples or len(ys) < min_samples:
        raise ValueError(f"need >= {min_samples} samples each, got {len(xs)} and {len(ys)}")
    if range is None:
        both = np.concatenate([xs.reshape(len(xs), -1), ys.reshape(len(ys), -1)])
        range = [(float(lo), float(hi)) for lo, hi in zip(both.min(0), both.max(0))]
    hx, hy = _histogram(xs, bins, range), _histogram(ys, bins, range)
    if hx.sum() == 0 or hy.sum() == 0:
        raise ValueError("no samples fall inside the histogram range")
    hx, hy = hx.ravel() + smoothing, hy.ravel() + smoothing
    return jsd(hx / hx.sum(), hy / hy.sum())


def diversity_score(samples):
    """Mean over unordered pairs of the mean absolute difference between samples."""
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    if n < 2:
        raise ValueError("diversity needs at least 2 samples")
    flat = samples.reshape(n, -1)
    total = 0.0
    for i in range(n - 1):
        total += float(np.abs(flat[i + 1:] - flat[i]).mean(axis=1).sum())
    return total / (n * (n - 1) / 2)


def mode_coverage(samples, centers, radius):
    """Fraction of mode centers with at least one sample inside ``radius`` (Euclidean)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if len(centers) == 0:
        raise ValueError("need at least one mode center")
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, centers.shape[1])
    if len(samples) == 0:
        return 0.0
    hit = 0
    for c in centers:
        if np.any(np.sum((samples - c) ** 2, axis=1) <= radius * radius):
            hit += 1
    return hit / len(centers)

