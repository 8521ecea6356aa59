"""Rank structure of sampled filter banks: stacking, Jacobi SVD, plant/recover, KS checks, cost sweep."""

from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .layers import count_params

SWEEP_HEADER = ("variant", "L", "Cin", "Cout", "K", "d_z", "d_h", "params", "quality")
TAU_REPORT = 1e-3
TAU_HARD = 1e-6
MIN_DRAWS = 500


# --- stacking and rank ---

def stack_filters(samples):
    """Stack N banks (Cout, Cin, L, L) into an (N*L*L, Cin*Cout) matrix.

    Row i*L*L + u holds spatial position u of sample i; column c'*Cout + c holds w[c, c', u].
    """
    banks = [np.asarray(w, dtype=np.float64) for w in samples]
    if not banks:
        raise ValueError("need at least one filter bank")
    shape = banks[0].shape
    if len(shape) != 4 or shape[2] != shape[3]:
        raise ValueError(f"filter bank must be (Cout, Cin, L, L), got {shape}")
    for i, w in enumerate(banks):
        if w.shape != shape:
            raise ValueError(f"bank {i} has shape {w.shape}, expected {shape}")
    cout, cin, L, _ = shape
    return np.concatenate([w.transpose(2, 3, 1, 0).reshape(L * L, cin * cout) for w in banks])


def unstack_filters(m, n, cout, cin, L):
    m = np.asarray(m, dtype=np.float64)
    return m.reshape(n, L, L, cin, cout).transpose(0, 4, 3, 1, 2)


def _round_robin(n):
    """n-1 rounds of n/2 disjoint pairs covering every pair once (n even)."""
    idx = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        rounds.append((np.array(idx[:half]), np.array(idx[half:][::-1])))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def jacobi_svd(a, tol=1e-15, max_sweeps=60):
    """Thin SVD by one-sided Jacobi rotations; returns (u, s, vt), s descending.

    Works on the side with fewer columns. A QR factorization first shrinks the tall
    factor to a square triangle, so each sweep costs O(n^3) rather than O(m n^2).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if a.shape[0] < a.shape[1]:
        u, s, vt = jacobi_svd(a.T, tol, max_sweeps)
        return vt.T, s, u.T
    m, n = a.shape
    if n == 0:
        return np.zeros((m, 0)), np.zeros(0), np.zeros((0, 0))
    q, r = np.linalg.qr(a)
    # pad to an even column count so every round pairs all columns
    ne = n + (n % 2)
    x = np.zeros((ne, ne))
    x[:n, :n] = r
    v = np.eye(ne)
    rounds = _round_robin(ne)
    for _ in range(max_sweeps):
        rotated = False
        for p, qi in rounds:
            xp, xq = x[:, p], x[:, qi]
            alpha = np.einsum("ij,ij->j", xp, xp)
            beta = np.einsum("ij,ij->j", xq, xq)
            gamma = np.einsum("ij,ij->j", xp, xq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            active &= (alpha > 0) & (beta > 0)
            if not active.any():
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t = np.where(zeta == 0, 1.0, t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            vp, vq = v[:, p], v[:, qi]
            x[:, p], x[:, qi] = c * xp - s * xq, s * xp + c * xq
            v[:, p], v[:, qi] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    x, v = x[:n], v[:n]
    sv = np.sqrt(np.einsum("ij,ij->j", x, x))
    order = np.argsort(-sv, kind="stable")[:n]
    sv, x, v = sv[order], x[:, order], v[:, order]
    safe = np.where(sv > 0, sv, 1.0)
    u = q @ (x / safe)
    return u, sv, v.T


def singular_values(a):
    return jacobi_svd(a)[1]


def effective_rank(m, tau=TAU_REPORT):
    """Number of singular values above tau times the largest (0 for the zero matrix)."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    s = singular_values(m)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tau * s[0]))


def pinv(a, rcond=1e-12):
    u, s, vt = jacobi_svd(a)
    keep = s > rcond * (s[0] if s.size else 0.0)
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


# --- plant / recover ---

@dataclass
class TheoremInstance:
    a: np.ndarray  # (K, Cin, Cout)
    b: np.ndarray  # (samples, L*L, K)
    independent: bool
    L: int

    @property
    def K(self):
        return self.a.shape[0]

    def transform(self):
        """The (Cin*Cout, K) matrix whose columns are the flattened a_k."""
        return self.a.reshape(self.K, -1).T


def compose(a, b):
    """F[n, u, c', c] = sum_k b[n, u, k] a[k, c', c]."""
    return np.einsum("nuk,kij->nuij", b, a)


def plant_instance(K, cin, cout, L, samples, independent, rng, a=None):
    """Random a_k and Gaussian b, with F built as their combination.

    The dependent case sets a_K = a_1 + a_2, so the span has dimension K - 1.
    Pass ``a`` to draw fresh coefficients for an existing transform.
    """
    if K < 1 or samples < 1:
        raise ValueError("K and samples must be >= 1")
    if independent and K > cin * cout:
        raise ValueError(f"K={K} independent transforms do not fit in Cin*Cout={cin * cout} dimensions")
    if not independent and K < 3:
        raise ValueError("the dependent case needs K >= 3")
    if a is None:
        a = rng.standard_normal((K, cin, cout))
        if not independent:
            a[K - 1] = a[0] + a[1]
    else:
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (K, cin, cout):
            raise ValueError(f"a has shape {a.shape}, expected {(K, cin, cout)}")
    b = rng.standard_normal((samples, L * L, K))
    return TheoremInstance(a, b, independent, L), compose(a, b)


def recover_basis_coefficients(inst, F, cond_limit=1e10):
    """Least-squares coefficients of every F(u) against the a_k; returns (b_hat, residual).

    Normal equations serve the well-conditioned case; anything near singular goes
    through the pseudo-inverse, which gives the minimum-norm solution.
    """
    F = np.asarray(F, dtype=np.float64)
    K, cin, cout = inst.a.shape
    if F.ndim != 4 or F.shape[2:] != (cin, cout) or F.shape[1] != inst.L ** 2:
        raise ValueError(f"F shape {F.shape} does not match instance (.., {inst.L ** 2}, {cin}, {cout})")
    T = inst.transform()
    f = F.reshape(-1, cin * cout).T
    s = singular_values(T)
    # fewer rows than a_k (Cin*Cout < K) can never be full column rank
    if T.shape[0] < K or s[0] == 0.0 or s[-1] / s[0] < 1.0 / cond_limit:
        coef = pinv(T) @ f
    else:
        coef = np.linalg.solve(T.T @ T, T.T @ f)
    residual = float(np.max(np.abs(T @ coef - f))) if f.size else 0.0
    return coef.T.reshape(F.shape[0], F.shape[1], K), residual


# --- distribution match ---

def ks_statistic(x, y):
    """Two-sample Kolmogorov-Smirnov statistic sup |F_x - F_y|."""
    x, y = np.sort(np.asarray(x, dtype=np.float64)), np.sort(np.asarray(y, dtype=np.float64))
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def ks_critical(n, m, alpha=0.01):
    """Asymptotic two-sample critical value c(alpha) * sqrt((n + m) / (n m))."""
    c = np.sqrt(-0.5 * np.log(alpha / 2.0))
    return float(c * np.sqrt((n + m) / (n * m)))


@dataclass
class MatchResult:
    statistics: np.ndarray
    critical: float
    alpha: float

    @property
    def passed(self):
        return bool(np.all(self.statistics < self.critical))


def distribution_match(planted, recovered, alpha=0.01):
    """Per-coordinate KS test between two draw sets of shape (draws, ...)."""
    x = np.asarray(planted, dtype=np.float64)
    y = np.asarray(recovered, dtype=np.float64)
    if x.shape[0] < MIN_DRAWS or y.shape[0] < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} draws each, got {x.shape[0]} and {y.shape[0]}")
    x, y = x.reshape(x.shape[0], -1), y.reshape(y.shape[0], -1)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"coordinate counts differ: {x.shape[1]} vs {y.shape[1]}")
    stats = np.array([ks_statistic(x[:, j], y[:, j]) for j in range(x.shape[1])])
    return MatchResult(stats, ks_critical(x.shape[0], y.shape[0], alpha), alpha)


def fresh_draw_match(inst, draws, rng, alpha=0.01):
    """KS match of the planted b against b recovered from a fresh F batch on the same a_k."""
    K, cin, cout = inst.a.shape
    fresh, F = plant_instance(K, cin, cout, inst.L, draws, True, rng, a=inst.a)
    recovered, _ = recover_basis_coefficients(fresh, F)
    return distribution_match(inst.b, recovered, alpha)


# --- cost / quality sweep ---

@dataclass
class SweepRecord:
    variant: str
    L: int
    cin: int
    cout: int
    K: int
    d_z: int
    d_h: int
    params: int
    quality: float
    mode_coverage: float
    jsd_est: float
    wall_notes: str = ""

    @property
    def output_dim(self):
        return self.cin * self.cout * self.L * self.L

    def row(self):
        return [self.variant, self.L, self.cin, self.cout, self.K, self.d_z, self.d_h, self.params, repr(self.quality)]


def parse_variant(text):
    """'basis:16' -> ('basis', 16); 'filtergen' -> ('filtergen', None)."""
    kind, _, k = text.strip().partition(":")
    if kind not in ("basis", "filtergen"):
        raise ValueError(f"unknown variant {text!r}; expected basis:K or filtergen")
    if kind == "basis":
        if not k:
            raise ValueError(f"basis variant needs a K, e.g. basis:7 (got {text!r})")
        try:
            K = int(k)
        except ValueError:
            raise ValueError(f"bad K in variant {text!r}") from None
        if K < 1:
            raise ValueError(f"K must be >= 1 in {text!r}")
        return kind, K
    if k:
        raise ValueError(f"filtergen takes no K (got {text!r})")
    return kind, None


def cost_quality_sweep(cfg, variants, csv_path=None, on_record=None):
    """Train each variant under the same budget and seed; quality = mode_coverage - jsd_est."""
    from .train import train

    parsed = [parse_variant(v) for v in variants]
    m = cfg.model
    records = []
    for kind, K in parsed:
        K = K if K is not None else cfg.train.k_basis
        run = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, k_basis=K))
        t0 = time.perf_counter()
        _, _, rows = train(run, variant=kind)
        secs = time.perf_counter() - t0
        last = rows[-1]
        params = count_params(m.kernel, m.width, m.width, K, m.d_z, m.d_h)[kind]
        rec = SweepRecord(kind, m.kernel, m.width, m.width, K, m.d_z, m.d_h, params,
                          float(last.mode_coverage - last.jsd_est), float(last.mode_coverage),
                          float(last.jsd_est), f"{secs:.1f}s, {run.train.steps} steps")
        records.append(rec)
        if on_record is not None:
            on_record(rec)
    if csv_path is not None:
        write_sweep_csv(csv_path, records)
    return records


def write_sweep_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in records:
            w.writerow(r.row())
