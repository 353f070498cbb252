"""Replica-symmetric prediction for the BEC.

On the two-point family the replica functional collapses to a function of
the erasure mass x (mass at 0):

    h_RS(x) = ln2 [exp(-A y^{K-1}) + A y^{K-1} - alpha (K-1)(1-q) y^K - alpha (1-q)],

with y = 1 - x and A = alpha K (1-q).  Its stationary points are the fixed
points of the scalar density-evolution map z -> exp(-A (1-z)^{K-1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .seeding import as_rng

LN2 = math.log(2.0)
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _check_Kaq(K, alpha, q):
    if K < 2:
        raise ValueError("K must be >= 2")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")


def h_rs_scalar(x, K: int, alpha: float, q: float):
    """Scalar replica-symmetric free entropy at erasure mass ``x`` (nats)."""
    _check_Kaq(K, alpha, q)
    y = 1.0 - np.asarray(x, dtype=float)
    A = alpha * K * (1.0 - q)
    yk1 = y ** (K - 1)
    h = LN2 * (np.exp(-A * yk1) + A * yk1 - alpha * (K - 1) * (1.0 - q) * y**K - alpha * (1.0 - q))
    return float(h) if np.ndim(h) == 0 else h


def h_rs_derivative(x, K: int, alpha: float, q: float):
    """d h_RS / dx = ln2 A (K-1) (1-x)^{K-2} (exp(-A (1-x)^{K-1}) - x)."""
    y = 1.0 - np.asarray(x, dtype=float)
    A = alpha * K * (1.0 - q)
    d = LN2 * A * (K - 1) * y ** (K - 2) * (np.exp(-A * y ** (K - 1)) - (1.0 - y))
    return float(d) if np.ndim(d) == 0 else d


def de_map(z, K: int, alpha: float, q: float):
    """One density-evolution step on the erasure mass."""
    _check_Kaq(K, alpha, q)
    A = alpha * K * (1.0 - q)
    out = np.exp(-A * (1.0 - np.asarray(z, dtype=float)) ** (K - 1))
    return float(out) if np.ndim(out) == 0 else out


def mc_replica_functional(K: int, alpha: float, q: float, x: float, samples: int, rng) -> tuple[float, float]:
    """Direct Monte Carlo of the three expectations in the replica functional.

    Messages V are drawn from x*Delta_0 + (1-x)*Delta_inf, couplings from the
    gauge-fixed channel (1-q)*Delta_inf + q*Delta_0.  Returns (mean, SE).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = as_rng(rng)
    l = rng.poisson(alpha * K, size=samples)
    total = int(l.sum())
    # U_B revealed iff its coupling and all K-1 incoming messages are revealed
    u_rev = (rng.random(total) < 1.0 - q) & np.all(rng.random((total, K - 1)) < 1.0 - x, axis=1)
    owner = np.repeat(np.arange(samples), l)
    k = np.bincount(owner, weights=u_rev, minlength=samples)
    # ln(prod(1 + tanh U) + prod(1 - tanh U)) = ln(2^k + [k == 0])
    node = np.where(k > 0, k * LN2, LN2)
    j_rev = rng.random(samples) < 1.0 - q
    v_all = np.all(rng.random((samples, K)) < 1.0 - x, axis=1)
    edge = np.where(j_rev & v_all, LN2, 0.0)
    j_rev2 = rng.random(samples) < 1.0 - q
    field_term = np.where(j_rev2, LN2, 0.0)
    vals = node - alpha * (K - 1) * edge - alpha * field_term
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0


def _golden_max(f, a: float, b: float, tol: float) -> float:
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _pick(cands, h_fn):
    """Largest h, ties resolved toward larger x."""
    vals = [(h_fn(x), x) for x in cands]
    hmax = max(v for v, _ in vals)
    tie = 4 * np.finfo(float).eps * max(1.0, abs(hmax))
    return max(x for v, x in vals if v >= hmax - tie)


def sup_h_rs(K: int, alpha: float, q: float, grid_points: int = 2001, refine_tol: float = 1e-10) -> tuple[float, float]:
    """Global maximizer of h_RS over [0, 1].

    Dense grid scan, golden-section refinement around the best cell, then a
    root polish of dh/dx inside that cell when it brackets a sign change.
    """
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    _check_Kaq(K, alpha, q)

    def h(x):
        return h_rs_scalar(x, K, alpha, q)

    xs = np.linspace(0.0, 1.0, grid_points)
    hs = h_rs_scalar(xs, K, alpha, q)
    hmax = hs.max()
    tie = 4 * np.finfo(float).eps * max(1.0, abs(hmax))
    k = int(np.flatnonzero(hs >= hmax - tie)[-1])
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, grid_points - 1)]
    refined = _golden_max(h, lo, hi, refine_tol)
    g = lambda x: h_rs_derivative(x, K, alpha, q)  # noqa: E731
    for a, b in ((lo, xs[k]), (xs[k], hi)):
        if a < b and g(a) > 0 > g(b):
            refined = brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    cands = [float(xs[k]), refined]
    x_star = _pick(cands, h)
    return float(x_star), float(h(x_star))


@dataclass
class ReplicaCurve:
    K: int
    alpha: float
    q: float
    grid: list[tuple[float, float]]
    argmax_x: float
    argmax_h: float


def rs_curve(K: int, alpha: float, q: float, grid_points: int = 201, refine_tol: float = 1e-10) -> ReplicaCurve:
    xs = np.linspace(0.0, 1.0, grid_points)
    hs = h_rs_scalar(xs, K, alpha, q)
    x_star, h_star = sup_h_rs(K, alpha, q, max(grid_points, 2001), refine_tol)
    return ReplicaCurve(K, alpha, q, [(float(a), float(b)) for a, b in zip(xs, hs)], x_star, h_star)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FixedPoint:
    z: float
    residual: float
    slope: float  # derivative of the DE map at z
    label: str  # "from_0", "from_1", "scan" (possibly several joined by "+")

    @property
    def stable(self) -> bool:
        return abs(self.slope) <= 1.0


def _de_slope(z, K, alpha, q):
    A = alpha * K * (1.0 - q)
    y = 1.0 - z
    if K == 2:
        return A * math.exp(-A * y)
    return A * (K - 1) * y ** (K - 2) * math.exp(-A * y ** (K - 1))


def de_fixed_points(K: int, alpha: float, q: float, tol: float = 1e-12, max_iters: int = 1_000_000, scan_points: int = 10_001) -> list[FixedPoint]:
    """Fixed points of the DE map: iteration from z = 0 and z = 1, plus
    bisection on every sign change of z - de_map(z) over a uniform scan."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_Kaq(K, alpha, q)
    found: list[tuple[float, str]] = []
    for start, label in ((0.0, "from_0"), (1.0, "from_1")):
        z = start
        for _ in range(max_iters):
            nz = de_map(z, K, alpha, q)
            if abs(nz - z) <= tol:
                z = nz
                break
            z = nz
        else:
            raise ConvergenceError(f"DE iteration from z={start} did not converge in {max_iters} steps")
        found.append((z, label))

    F = lambda z: z - de_map(z, K, alpha, q)  # noqa: E731
    zs = np.linspace(0.0, 1.0, scan_points)
    Fz = zs - de_map(zs, K, alpha, q)
    for i in range(scan_points - 1):
        a, b = Fz[i], Fz[i + 1]
        if a == 0.0:
            found.append((float(zs[i]), "scan"))
        elif a * b < 0:
            found.append((brentq(F, zs[i], zs[i + 1], xtol=1e-15), "scan"))
    found.append((1.0, "scan"))

    merged: list[list] = []
    for z, label in sorted(found):
        if merged and abs(z - merged[-1][0]) <= max(1e-9, 10 * tol):
            if label not in merged[-1][1]:
                merged[-1][1].append(label)
            continue
        merged.append([z, [label]])
    out = []
    for z, labels in merged:
        res = abs(F(z))
        if res > tol:
            # polish with a bracketed root solve around the iterate
            a, b = max(0.0, z - 1e-6), min(1.0, z + 1e-6)
            if F(a) * F(b) < 0:
                z = brentq(F, a, b, xtol=1e-15)
                res = abs(F(z))
        if res > tol:
            raise ConvergenceError(f"fixed point near z={z} has residual {res} > tol={tol}")
        out.append(FixedPoint(float(z), float(res), _de_slope(z, K, alpha, q), "+".join(labels)))
    return out


@dataclass(frozen=True)
class GeneralizedParams:
    path: tuple[float, ...]  # revealed weights r^(1..T)
    eps: float = 0.0
    delta: float = 0.0
    theta: float = 0.2
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(float(r) for r in self.path))
        if not self.path:
            raise ValueError("path must have at least one step")
        if any(not 0.0 <= r <= 1.0 for r in self.path):
            raise ValueError("every revealed weight must lie in [0, 1]")
        if not 0.0 <= self.eps <= 1.0 or not 0.0 <= self.delta <= 1.0:
            raise ValueError("eps and delta must lie in [0, 1]")
        if not 0.0 < self.theta <= 0.2:
            raise ValueError("theta must lie in (0, 1/5]")
        if not 0.0 <= self.delta_scaled <= 1.0:
            raise ValueError("delta * n^-theta must lie in [0, 1]")

    @property
    def T(self) -> int:
        return len(self.path)

    @property
    def delta_scaled(self) -> float:
        return self.delta * self.n ** (-self.theta)


def generalized_free_entropy(gp: GeneralizedParams, K: int, alpha: float, q: float) -> float:
    """Closed form of the generalized functional on paths of two-point distributions.

    The total number of revealed incoming messages is Poisson with mean
    lam = (alpha K (1-q) / T) sum_t r_t^{K-1}; the node term contributes
    ln2 * (lam + (1-eps)(1-delta n^-theta) e^{-lam}).
    """
    _check_Kaq(K, alpha, q)
    r = np.asarray(gp.path)
    T = gp.T
    lam = alpha * K * (1.0 - q) / T * float(np.sum(r ** (K - 1)))
    edge = alpha * (K - 1) * (1.0 - q) / T * float(np.sum(r**K))
    keep = (1.0 - gp.eps) * (1.0 - gp.delta_scaled)
    return LN2 * (lam + keep * math.exp(-lam) - edge - alpha * (1.0 - q))


def mc_generalized_functional(gp: GeneralizedParams, K: int, alpha: float, q: float, samples: int, rng) -> tuple[float, float]:
    """Monte Carlo of the generalized functional straight from its definition:
    per step t, l_t ~ Poi(alpha K / T) messages U_t, each revealed iff its
    coupling and K-1 messages V ~ x_t are; plus side fields H, H~."""
    rng = as_rng(rng)
    T = gp.T
    node_k = np.zeros(samples)
    edge = np.zeros(samples)
    for t, r in enumerate(gp.path):
        l = rng.poisson(alpha * K / T, size=samples)
        total = int(l.sum())
        rev = (rng.random(total) < 1.0 - q) & np.all(rng.random((total, K - 1)) < r, axis=1)
        node_k += np.bincount(np.repeat(np.arange(samples), l), weights=rev, minlength=samples)
        j = rng.random(samples) < 1.0 - q
        v = np.all(rng.random((samples, K)) < r, axis=1)
        edge += np.where(j & v, LN2, 0.0)
    H_inf = rng.random(samples) < gp.eps
    Ht_inf = rng.random(samples) < gp.delta_scaled
    # ln(prod(1 + tanh U) + e^{-2(H + H~)} prod(1 - tanh U))
    second = (node_k == 0) & ~H_inf & ~Ht_inf
    node = np.where(node_k > 0, node_k * LN2, np.where(second, LN2, 0.0))
    j0 = rng.random(samples) < 1.0 - q
    vals = node - alpha * (K - 1) / T * edge - alpha * np.where(j0, LN2, 0.0)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def perturbation_bound_check(gp: GeneralizedParams, K: int, alpha: float, q: float, slack: float = 0.0) -> bool:
    """|h~_{eps,delta} - h~_{0,0}| <= (eps + delta n^-theta) ln 2."""
    diff = abs(
        generalized_free_entropy(gp, K, alpha, q)
        - generalized_free_entropy(replace(gp, eps=0.0, delta=0.0), K, alpha, q)
    )
    bound = (gp.eps + gp.delta_scaled) * LN2
    return diff <= bound + 1e-14 + slack


@dataclass
class PhaseScan:
    K: int
    alpha: float
    rows: list[tuple[float, float, float]]  # (q, x*, h*)
    jump: float = 0.0
    jump_index: int | None = None
    jump_interval: tuple[float, float] | None = None
    extras: dict = field(default_factory=dict)


def phase_scan(K: int, alpha: float, q_grid, grid_points: int = 2001, refine_tol: float = 1e-10) -> PhaseScan:
    """sup h_RS along a monotone q grid; reports the largest jump of x*(q)."""
    q_grid = [float(q) for q in q_grid]
    d = np.diff(q_grid)
    if len(q_grid) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("q_grid must be strictly monotone")
    rows = []
    for q in q_grid:
        x, h = sup_h_rs(K, alpha, q, grid_points, refine_tol)
        rows.append((q, x, h))
    scan = PhaseScan(K, alpha, rows)
    if len(rows) > 1:
        jumps = [abs(rows[i + 1][1] - rows[i][1]) for i in range(len(rows) - 1)]
        i = int(np.argmax(jumps))
        scan.jump, scan.jump_index = jumps[i], i
        scan.jump_interval = (rows[i][0], rows[i + 1][0])
    return scan


def locate_jump(K: int, alpha: float, q_lo: float, q_hi: float, width: float = 1e-4, grid_points: int = 2001) -> tuple[float, float, float]:
    """Bisect a jump of x*(q) inside [q_lo, q_hi]; returns (q_lo, q_hi, |jump|)."""
    x_lo = sup_h_rs(K, alpha, q_lo, grid_points)[0]
    x_hi = sup_h_rs(K, alpha, q_hi, grid_points)[0]
    while q_hi - q_lo > width:
        mid = 0.5 * (q_lo + q_hi)
        x_mid = sup_h_rs(K, alpha, mid, grid_points)[0]
        if abs(x_mid - x_lo) <= abs(x_mid - x_hi):
            q_lo, x_lo = mid, x_mid
        else:
            q_hi, x_hi = mid, x_mid
    return q_lo, q_hi, abs(x_hi - x_lo)
