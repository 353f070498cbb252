"""Adaptive path interpolation on the BEC, evaluated exactly per instance.

The (t, s) ensemble mixes a shrinking block of K-factors with half-edges
carrying messages drawn from the path.  On the BEC every half-edge or side
field is either erased (no effect) or revealed, in which case it pins its
variable to +1; a pinned variable is a singleton parity row.  Each sampled
instance is therefore a GF(2) system and its free entropy, brackets and
overlaps are exact; only the disorder average is Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import BecChannel, bp_update_prob
from .gf2 import Gf2System
from .model import LN2, ModelParams, free_entropy, mean_overlap, random_k_subsets, thermal_overlap_variance, tuple_moment
from .replica import GeneralizedParams, generalized_free_entropy
from .seeding import (
    TAG_CONCENTRATION,
    TAG_DERIVATIVE,
    TAG_LHS,
    TAG_PATH,
    TAG_REMAINDER,
    TAG_TS,
    as_rng,
    trial_rng,
)

# half-edge blocks are drawn per (variable, step) only below this many cells
LITERAL_CELL_LIMIT = 200_000


@dataclass(frozen=True)
class InterpParams:
    model: ModelParams
    T: int
    eps: float = 0.0
    delta: float = 0.0
    theta: float = 0.2

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0.0 <= self.eps <= 1.0 or not 0.0 <= self.delta <= 1.0:
            raise ValueError("eps and delta must lie in [0, 1]")
        if not 0.0 < self.theta <= 0.2:
            raise ValueError("theta must lie in (0, 1/5]")

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def delta_scaled(self) -> float:
        return self.delta * self.model.n ** (-self.theta)

    def with_(self, **kw) -> "InterpParams":
        from dataclasses import replace

        model_kw = {k: kw.pop(k) for k in ("n", "K", "alpha", "q") if k in kw}
        model = replace(self.model, **model_kw) if model_kw else self.model
        return replace(self, model=model, **kw)


@dataclass(frozen=True)
class InterpPath:
    r: tuple[float, ...]  # revealed weight of x^(t)
    tilde_r: tuple[float, ...]  # revealed weight of the induced factor message
    se: tuple[float, ...] | None = None

    @classmethod
    def build(cls, r, K: int, q: float, se=None) -> "InterpPath":
        ch = BecChannel(q)
        r = tuple(float(v) for v in r)
        return cls(r, tuple(bp_update_prob(ch, v, K) for v in r), None if se is None else tuple(float(v) for v in se))

    @classmethod
    def constant(cls, value: float, T: int, K: int, q: float) -> "InterpPath":
        return cls.build([value] * T, K, q)

    @property
    def T(self) -> int:
        return len(self.r)


@dataclass
class TsInstance:
    t: int
    s: float
    n: int
    he_var: np.ndarray  # variable receiving each half-edge
    he_step: np.ndarray  # path step (1-based) the message was drawn from
    he_inf: np.ndarray  # revealed flag of each half-edge
    factors: np.ndarray  # (m, K) variable indices
    factor_inf: np.ndarray
    field_H: np.ndarray
    field_Ht: np.ndarray
    effective: np.ndarray | None = None  # collapsed route: one forcing flag per variable
    _gf2: Gf2System | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.factors)

    def half_edge_counts(self) -> np.ndarray:
        """(n, t) array: column t'-1 holds e_i^(t') for t' < t, the last column e_{i,s}^(t)."""
        out = np.zeros((self.n, self.t), dtype=np.int64)
        np.add.at(out, (self.he_var, self.he_step - 1), 1)
        return out

    def forced(self, include_Ht: bool = True) -> np.ndarray:
        f = self.field_H.copy()
        if include_Ht:
            f |= self.field_Ht
        if self.effective is not None:
            f |= self.effective
        f[self.he_var[self.he_inf]] = True
        return f

    def system(self, include_Ht: bool = True) -> Gf2System:
        """Singleton rows for every revealed field or half-edge, K-rows for revealed factors."""
        if include_Ht and self._gf2 is not None:
            return self._gf2
        g = Gf2System(self.n)
        sources = [self.he_var[self.he_inf], np.flatnonzero(self.field_H)]
        if include_Ht:
            sources.append(np.flatnonzero(self.field_Ht))
        if self.effective is not None:
            sources.append(np.flatnonzero(self.effective))
        for arr in sources:
            for i in arr.tolist():
                g.add_bits(1 << i)
        for row in self.factors[self.factor_inf].tolist():
            v = 0
            for i in row:
                v ^= 1 << i
            g.add_bits(v)
        if include_Ht:
            self._gf2 = g
        return g


def _check_coords(params: InterpParams, path: InterpPath, t: int, s: float):
    if not 1 <= t <= params.T:
        raise ValueError(f"t must lie in 1..{params.T}, got {t}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    if path.T != params.T:
        raise ValueError(f"path has {path.T} steps, expected T={params.T}")


def _factor_block(params: InterpParams, t: int, s: float, rng):
    mp = params.model
    m = int(rng.poisson(mp.alpha * mp.n * (params.T - t + 1 - s) / params.T))
    subsets = random_k_subsets(mp.n, mp.K, m, rng)
    inf = rng.random(m) < 1.0 - mp.q
    return subsets, inf


def build_ts_instance(params: InterpParams, path: InterpPath, t: int, s: float, rng, literal: bool | None = None) -> TsInstance:
    """Sample the interpolating graph at (t, s).

    Per variable: e_i^(t') ~ Poi(alpha K / T) half-edges for each t' < t and
    e_{i,s}^(t) ~ Poi(alpha K s / T) for the current step; every half-edge
    carries a message revealed with probability tilde_r^(t').  Then
    m ~ Poi(alpha n (T - t + 1 - s) / T) factors, side fields H (prob eps)
    and H~ (prob delta n^-theta).

    ``literal=True`` draws the n x (t-1) table of counts; ``literal=False``
    draws each variable's total past count and labels every half-edge with a
    uniform step, which is the same distribution (Poisson superposition).
    The default switches to the superposed draw for large tables.
    """
    _check_coords(params, path, t, s)
    rng = as_rng(rng)
    mp = params.model
    n, K, T = mp.n, mp.K, params.T
    rate = mp.alpha * K / T
    if literal is None:
        literal = n * (t - 1) <= LITERAL_CELL_LIMIT
    if t > 1:
        if literal:
            counts = rng.poisson(rate, size=(n, t - 1))
            var_idx, step_idx = np.nonzero(counts)
            reps = counts[var_idx, step_idx]
            past_var = np.repeat(var_idx, reps)
            past_step = np.repeat(step_idx + 1, reps)
        else:
            tot = rng.poisson(rate * (t - 1), size=n)
            past_var = np.repeat(np.arange(n), tot)
            past_step = rng.integers(1, t, size=int(tot.sum()))
    else:
        past_var = np.zeros(0, dtype=np.int64)
        past_step = np.zeros(0, dtype=np.int64)
    cur = rng.poisson(rate * s, size=n)
    he_var = np.concatenate([past_var, np.repeat(np.arange(n), cur)]).astype(np.int64)
    he_step = np.concatenate([past_step, np.full(int(cur.sum()), t)]).astype(np.int64)
    tilde = np.asarray(path.tilde_r)
    he_inf = rng.random(he_var.size) < tilde[he_step - 1] if he_var.size else np.zeros(0, dtype=bool)
    subsets, f_inf = _factor_block(params, t, s, rng)
    H = rng.random(n) < params.eps
    Ht = rng.random(n) < params.delta_scaled
    return TsInstance(t, s, n, he_var, he_step, he_inf, subsets, f_inf, H, Ht)


def forcing_probability(params: InterpParams, path: InterpPath, t: int, s: float) -> float:
    """Mean probability that the effective half-edge into a variable is revealed."""
    mp = params.model
    acc = s * path.tilde_r[t - 1] + sum(path.tilde_r[: t - 1])
    return 1.0 - (1.0 - params.eps) * (1.0 - params.delta_scaled) * math.exp(-mp.alpha * mp.K / params.T * acc)


def build_ts_collapsed(params: InterpParams, path: InterpPath, t: int, s: float, rng) -> TsInstance:
    """Same law as :func:`build_ts_instance`, with every variable's half-edges
    and side fields merged into one Bernoulli forcing flag."""
    _check_coords(params, path, t, s)
    rng = as_rng(rng)
    n = params.n
    eff = rng.random(n) < forcing_probability(params, path, t, s)
    subsets, f_inf = _factor_block(params, t, s, rng)
    empty_i = np.zeros(0, dtype=np.int64)
    zeros = np.zeros(n, dtype=bool)
    return TsInstance(t, s, n, empty_i, empty_i, np.zeros(0, dtype=bool), subsets, f_inf, zeros, zeros.copy(), eff)


def ts_free_entropy_sample(ts: TsInstance) -> float:
    return free_entropy(ts.system())


@dataclass
class Estimate:
    mean: float
    se: float
    values: np.ndarray = field(repr=False)
    keys: list = field(default_factory=list, repr=False)

    def __iter__(self):
        yield self.mean
        yield self.se

    @classmethod
    def of(cls, values, keys=()) -> "Estimate":
        v = np.asarray(values, dtype=float)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        return cls(float(v.mean()), se, v, list(keys))


def _s_key(s: float) -> int:
    return int(round(s * 1_000_000_000))


def _builder(collapsed: bool):
    return build_ts_collapsed if collapsed else build_ts_instance


def ts_free_entropy(params: InterpParams, path: InterpPath, t: int, s: float, trials: int, seed: int, collapsed: bool = False, tag: int = TAG_TS) -> Estimate:
    """Monte Carlo estimate of h_{t,s;eps,delta}; trial i uses seed key (tag, t, s, i).

    The key does not depend on eps, delta or the path, so runs that differ
    only in those share their random numbers.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    build = _builder(collapsed)
    vals, keys = [], []
    for i in range(trials):
        key = (tag, t, _s_key(s), i)
        ts = build(params, path, t, s, trial_rng(seed, *key))
        vals.append(ts_free_entropy_sample(ts))
        keys.append(key)
    return Estimate.of(vals, keys)


def endpoint_free_entropy(params: InterpParams, path: InterpPath) -> float:
    """Closed form of h_{T,1}: each variable is free (ln 2) unless pinned."""
    return LN2 * (1.0 - forcing_probability(params, path, params.T, 1.0))


def _ht_patterns(ts: TsInstance, p: float, exact_limit: int = 1 << 20, samples: int = 10_000, rng=None):
    """Yield (weight, rank increase, determined flags) over H~ patterns.

    Patterns only matter on variables not already pinned by the rest of the
    system; these are enumerated exactly when n * 2^c <= exact_limit and
    sampled otherwise.
    """
    base = ts.system(include_Ht=False)
    n = ts.n
    classes = base.variable_classes()
    cand = [i for i in range(n) if classes[i] != 0]
    c = len(cand)
    base_det = np.array([cls == 0 for cls in classes])

    def evaluate(chosen):
        sub = Gf2System(n)
        for i in chosen:
            sub.add_bits(classes[i])
        det = base_det.copy()
        if chosen:
            for i in cand:
                det[i] = sub.bits_in_row_space(classes[i])
        return sub.rank, det

    if n * (1 << c) <= exact_limit:
        for mask in range(1 << c):
            chosen = [cand[j] for j in range(c) if mask >> j & 1]
            k = len(chosen)
            w = p**k * (1.0 - p) ** (c - k)
            if w == 0.0:
                continue
            dr, det = evaluate(chosen)
            yield w, dr, det
    else:
        rng = as_rng(rng)
        for _ in range(samples):
            pick = rng.random(c) < p
            dr, det = evaluate([cand[j] for j in np.flatnonzero(pick)])
            yield 1.0 / samples, dr, det


def partially_averaged_free_entropy(ts: TsInstance, params: InterpParams, samples: int = 10_000, rng=None, exact_limit: int = 1 << 20) -> float:
    """(1/n) E_{H~} ln Z for fixed remaining disorder (H~ flags of ``ts`` ignored)."""
    base = ts.system(include_Ht=False)
    n = ts.n
    p = params.delta_scaled
    terms = [w * (n - base.rank - dr) for w, dr, _ in _ht_patterns(ts, p, exact_limit, samples, rng)]
    return math.fsum(terms) * LN2 / n


def adaptive_path(params: InterpParams, trials_per_step: int, seed: int, collapsed: bool = False) -> InterpPath:
    """Moment-matched path: r^(t) = E<Q_1> at (t, 0) with delta = 0.

    Step t only sees r^(1..t-1) since at s = 0 no step-t half-edges exist.
    """
    if trials_per_step < 1:
        raise ValueError("trials_per_step must be >= 1")
    T = params.T
    mp = params.model
    p0 = params.with_(delta=0.0)
    r = [0.0] * T
    se = [0.0] * T
    build = _builder(collapsed)
    for t in range(1, T + 1):
        path = InterpPath.build(r, mp.K, mp.q)
        vals = [
            mean_overlap(build(p0, path, t, 0.0, trial_rng(seed, TAG_PATH, t, i)).system())
            for i in range(trials_per_step)
        ]
        est = Estimate.of(vals)
        r[t - 1], se[t - 1] = est.mean, est.se
    return InterpPath.build(r, mp.K, mp.q, se)


def remainder_sample(ts: TsInstance, params: InterpParams, path: InterpPath, distinct: bool = True) -> float:
    """(1-q) ln2 [<sigma_B> - K r^{K-1} (<Q_1> - r) - r^K] for one instance.

    ``distinct=True`` averages <sigma_B> over K-subsets of distinct variables
    (the law of an added factor); ``False`` uses <Q_1^K> over all n^K tuples.
    """
    mp = params.model
    K = mp.K
    g = ts.system()
    r = path.r[ts.t - 1]
    qk = tuple_moment(g, K, distinct=distinct)
    q1 = mean_overlap(g)
    return (1.0 - mp.q) * LN2 * (qk - K * r ** (K - 1) * (q1 - r) - r**K)


def remainder_estimate(params: InterpParams, path: InterpPath, t: int, s: float, trials: int, seed: int, distinct: bool = True, collapsed: bool = False) -> Estimate:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    build = _builder(collapsed)
    vals = []
    for i in range(trials):
        ts = build(params, path, t, s, trial_rng(seed, TAG_REMAINDER, t, _s_key(s), i))
        vals.append(remainder_sample(ts, params, path, distinct))
    return Estimate.of(vals)


def trapezoid_weights(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    w = np.zeros_like(g)
    d = np.diff(g)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass
class SumRuleReport:
    lhs: float
    lhs_se: float
    generalized: float
    remainder_integral: float
    remainder_se: float
    residual: float
    residual_se: float
    per_step: np.ndarray = field(repr=False, default=None)

    @property
    def z_score(self) -> float:
        return self.residual / self.residual_se if self.residual_se > 0 else (0.0 if self.residual == 0 else math.inf)

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "lhs_se": self.lhs_se,
            "generalized": self.generalized,
            "remainder_integral": self.remainder_integral,
            "remainder_se": self.remainder_se,
            "residual": self.residual,
            "residual_se": self.residual_se,
        }


def sum_rule_check(
    params: InterpParams,
    path: InterpPath,
    grid_s,
    trials: int,
    seed: int,
    remainder_trials: int = 1,
    distinct: bool = True,
    collapsed: bool = False,
) -> SumRuleReport:
    """Both sides of h_{1,0} = h~(path) + (alpha/T) sum_t int_0^1 R_{t,s} ds.

    The s-integral is a trapezoid over ``grid_s``.  With a single remainder
    trial per (t, s) the SE is taken from the spread of the per-step
    integrals across t, which over-covers the true sampling error.
    """
    grid_s = sorted(float(s) for s in grid_s)
    if len(grid_s) < 2 or grid_s[0] < 0 or grid_s[-1] > 1:
        raise ValueError("grid_s needs at least two points in [0, 1]")
    mp = params.model
    T = params.T
    lhs = ts_free_entropy(params, path, 1, 0.0, trials, seed, collapsed, tag=TAG_LHS)
    gp = GeneralizedParams(path.r, params.eps, params.delta, params.theta, mp.n)
    gen = generalized_free_entropy(gp, mp.K, mp.alpha, mp.q)
    w = trapezoid_weights(grid_s)
    per_step = np.zeros(T)
    per_step_var = np.zeros(T)
    for t in range(1, T + 1):
        means = np.zeros(len(grid_s))
        vars_ = np.zeros(len(grid_s))
        for j, s in enumerate(grid_s):
            est = remainder_estimate(params, path, t, s, remainder_trials, seed, distinct, collapsed)
            means[j] = est.mean
            vars_[j] = est.se**2
        per_step[t - 1] = float(w @ means)
        per_step_var[t - 1] = float((w**2) @ vars_)
    integral = mp.alpha / T * float(per_step.sum())
    if remainder_trials > 1:
        rem_se = mp.alpha / T * math.sqrt(float(per_step_var.sum()))
    else:
        rem_se = mp.alpha * float(per_step.std(ddof=1)) / math.sqrt(T) if T > 1 else 0.0
    residual = lhs.mean - gen - integral
    return SumRuleReport(
        lhs.mean, lhs.se, gen, integral, rem_se, residual, math.hypot(lhs.se, rem_se), per_step
    )


@dataclass
class DerivativeReport:
    finite_difference: float
    formula: float
    abs_error: float
    rel_error: float
    combined_se: float = 0.0
    noisy: bool = False


def _exact_delta_pieces(ts: TsInstance, params: InterpParams, delta: float):
    n = ts.n
    p = delta * n ** (-params.theta)
    base = ts.system(include_Ht=False)
    h_terms, det_terms = [], []
    for w, dr, det in _ht_patterns(ts, p, exact_limit=1 << 30):
        h_terms.append(w * (n - base.rank - dr))
        det_terms.append(w * det.sum())
    return math.fsum(h_terms) * LN2 / n, math.fsum(det_terms)


def delta_derivative_check(
    params: InterpParams,
    path: InterpPath,
    t: int,
    s: float,
    trials: int,
    seed: int,
    step: float = 1e-5,
    mode: str = "exact",
) -> DerivativeReport:
    """Central difference of h_{t,s} in delta against
    -ln2 / (n^{1+theta} (1 - delta n^-theta)) * sum_i (1 - E<sigma_i>).

    ``mode="exact"`` samples ``trials`` realizations of everything except H~
    and sums over all H~ patterns (n <= 20), so both sides are exact for that
    sample.  ``mode="mc"`` differentiates Monte Carlo estimates that share
    random numbers across delta.
    """
    n, th = params.n, params.theta
    d = params.delta
    if not 0.0 < d - step and d + step < 1.0:
        raise ValueError("delta +- step must stay inside (0, 1)")
    if d + step > n**th:
        raise ValueError("delta n^-theta must stay below 1")
    scale = LN2 / (n ** (1 + th) * (1.0 - d * n ** (-th)))
    if mode == "exact":
        if n > 20:
            raise ValueError("exact mode enumerates H~ patterns and needs n <= 20")
        hp, hm, fo = [], [], []
        for i in range(trials):
            ts = build_ts_instance(params, path, t, s, trial_rng(seed, TAG_DERIVATIVE, t, _s_key(s), i))
            hp.append(_exact_delta_pieces(ts, params, d + step)[0])
            hm.append(_exact_delta_pieces(ts, params, d - step)[0])
            _, det = _exact_delta_pieces(ts, params, d)
            fo.append(-scale * (n - det))
        fd = (math.fsum(hp) - math.fsum(hm)) / (2 * step * trials)
        formula = math.fsum(fo) / trials
        err = abs(fd - formula)
        return DerivativeReport(fd, formula, err, err / max(abs(formula), 1e-300))
    if mode == "mc":
        plus = ts_free_entropy(params.with_(delta=d + step), path, t, s, trials, seed, tag=TAG_DERIVATIVE)
        minus = ts_free_entropy(params.with_(delta=d - step), path, t, s, trials, seed, tag=TAG_DERIVATIVE)
        fd_vals = (plus.values - minus.values) / (2 * step)
        rhs_vals = []
        for i in range(trials):
            ts = build_ts_instance(params, path, t, s, trial_rng(seed, TAG_DERIVATIVE, t, _s_key(s), i))
            rhs_vals.append(-scale * n * (1.0 - mean_overlap(ts.system())))
        a, b = Estimate.of(fd_vals), Estimate.of(rhs_vals)
        err = abs(a.mean - b.mean)
        se = math.hypot(a.se, b.se)
        noisy = a.se > abs(b.mean) or np.count_nonzero(fd_vals) < 10
        return DerivativeReport(a.mean, b.mean, err, err / max(abs(b.mean), 1e-300), se, bool(noisy))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class ConcentrationRow:
    n: int
    eps_lo: float
    eps_hi: float
    thermal_integral: float
    thermal_se: float
    thermal_bound: float
    q1_disorder_var: float
    q1_disorder_var_se: float
    fe_var: float
    fe_var_se: float

    @property
    def fe_var_times_n(self) -> float:
        return self.fe_var * self.n

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["fe_var_times_n"] = self.fe_var_times_n
        return d


def _variance_with_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    N = x.size
    v = float(x.var(ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    return v, math.sqrt(max(m4 - v * v, 0.0) / N)


def concentration_report(
    params: InterpParams,
    path: InterpPath,
    n_list,
    trials: int,
    seed: int,
    eps_window=None,
    eps_points: int = 5,
    t: int = 1,
    s: float = 0.0,
) -> list[ConcentrationRow]:
    """Per n: eps-integrated thermal variance of Q_1 (against 3/n), disorder
    variance of <Q_1>, and variance of the per-instance free entropy.

    The default eps window is [n^-1/2, 2 n^-1/2].  Disorder statistics are
    taken at the window midpoint.
    """
    if not n_list:
        raise ValueError("n_list must be nonempty")
    rows = []
    for n in n_list:
        p_n = params.with_(n=int(n))
        lo, hi = eps_window if eps_window is not None else (n**-0.5, 2 * n**-0.5)
        eps_grid = np.linspace(lo, hi, eps_points)
        w = trapezoid_weights(eps_grid)
        means, vars_ = [], []
        for j, e in enumerate(eps_grid):
            pe = p_n.with_(eps=float(e))
            vals = [
                thermal_overlap_variance(build_ts_instance(pe, path, t, s, trial_rng(seed, TAG_CONCENTRATION, n, j, i)).system())
                for i in range(trials)
            ]
            est = Estimate.of(vals)
            means.append(est.mean)
            vars_.append(est.se**2)
        integral = float(w @ np.asarray(means))
        integral_se = math.sqrt(float((w**2) @ np.asarray(vars_)))
        pm = p_n.with_(eps=float(0.5 * (lo + hi)))
        q1, fe = [], []
        for i in range(trials):
            g = build_ts_instance(pm, path, t, s, trial_rng(seed, TAG_CONCENTRATION, n, eps_points, i)).system()
            q1.append(mean_overlap(g))
            fe.append(free_entropy(g))
        qv, qv_se = _variance_with_se(q1)
        fv, fv_se = _variance_with_se(fe)
        rows.append(ConcentrationRow(int(n), float(lo), float(hi), integral, integral_se, 3.0 / n, qv, qv_se, fv, fv_se))
    return rows


__all__ = [
    "InterpParams",
    "InterpPath",
    "TsInstance",
    "Estimate",
    "SumRuleReport",
    "DerivativeReport",
    "ConcentrationRow",
    "build_ts_instance",
    "build_ts_collapsed",
    "forcing_probability",
    "ts_free_entropy",
    "endpoint_free_entropy",
    "partially_averaged_free_entropy",
    "adaptive_path",
    "remainder_sample",
    "remainder_estimate",
    "sum_rule_check",
    "delta_derivative_check",
    "concentration_report",
    "trapezoid_weights",
]
