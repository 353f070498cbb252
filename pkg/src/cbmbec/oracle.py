"""Brute-force ground truth for small systems.

Everything here sums over all 2^n spin configurations (and, for disorder
averages, over all 2^m erasure patterns) without touching the GF(2) code, so
it can serve as an independent check of the fast path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .channel import Coupling
from .model import Instance, ModelParams

MAX_ENUM_N = 20
MAX_ENUM_M = 20


class EnumerationLimitError(ValueError):
    """Raised when an exhaustive sum would exceed the hard caps."""


@dataclass
class GibbsReport:
    logZ: float
    Z: int
    brackets: dict[frozenset, Fraction] = field(default_factory=dict)
    replica_overlaps: dict[int, Fraction] = field(default_factory=dict)


def _mask(S: Iterable[int]) -> int:
    m = 0
    for i in S:
        m ^= 1 << int(i)
    return m


def _spin_parity(configs: np.ndarray, mask: int) -> np.ndarray:
    """0 where sigma_S = +1, 1 where sigma_S = -1 (bit i set <=> sigma_i = -1)."""
    return np.bitwise_count(configs & np.int64(mask)) & 1


def _solutions(instance: Instance) -> np.ndarray:
    n = instance.n
    if n > MAX_ENUM_N:
        raise EnumerationLimitError(f"n={n} exceeds enumeration cap {MAX_ENUM_N}")
    configs = np.arange(1 << n, dtype=np.int64)
    keep = np.ones(configs.size, dtype=bool)
    planted = instance.planted
    for A, J in zip(instance.factors, instance.couplings):
        if J is Coupling.ZERO:
            continue
        # a revealed observation fixes sigma_A to the planted product sigma^0_A
        target = 0
        if planted is not None:
            target = sum(1 for i in A if planted[i] == -1) & 1
        keep &= _spin_parity(configs, _mask(A)) == target
    return configs[keep]


def enumerate_gibbs(instance: Instance, subsets: Sequence[Iterable[int]] = (), replicas: Sequence[int] = ()) -> GibbsReport:
    """Exact partition function and brackets <sigma_S> by summing over 2^n configurations."""
    sols = _solutions(instance)
    Z = int(sols.size)
    report = GibbsReport(logZ=math.log(Z), Z=Z)
    for S in subsets:
        key = frozenset(int(i) for i in S)
        signed = Z - 2 * int(_spin_parity(sols, _mask(key)).sum())
        report.brackets[key] = Fraction(signed, Z)
    if replicas:
        singles = []
        for i in range(instance.n):
            signed = Z - 2 * int(((sols >> i) & 1).sum())
            singles.append(Fraction(signed, Z))
        for p in replicas:
            report.replica_overlaps[p] = sum(m**p for m in singles) / instance.n
    return report


def bracket(instance: Instance, S: Iterable[int]) -> Fraction:
    key = frozenset(int(i) for i in S)
    return enumerate_gibbs(instance, [key]).brackets[key]


def erasure_patterns(params: ModelParams, factors: Sequence[Sequence[int]]):
    """Yield (weight, gauge-fixed instance) for every revealed/erased pattern."""
    m = len(factors)
    if m > MAX_ENUM_M:
        raise EnumerationLimitError(f"m={m} exceeds enumeration cap {MAX_ENUM_M}")
    facs = tuple(tuple(int(i) for i in A) for A in factors)
    q = params.q
    for bits in itertools.product((Coupling.INF, Coupling.ZERO), repeat=m):
        k = sum(1 for b in bits if b is Coupling.INF)
        w = (1.0 - q) ** k * q ** (m - k)
        if w == 0.0:
            continue
        yield w, Instance(params, facs, tuple(bits))


def exact_disorder_average(params: ModelParams, factors: Sequence[Sequence[int]], observable: Callable[[Instance], float]) -> float:
    """E over the 2^m erasure patterns of ``observable(instance)`` for a fixed graph."""
    terms = [w * float(observable(inst)) for w, inst in erasure_patterns(params, factors)]
    return math.fsum(terms)


def _xor_all(collection: Sequence[Iterable[int]]) -> frozenset:
    acc: set[int] = set()
    for S in collection:
        acc ^= {int(i) for i in S}
    return frozenset(acc)


def nishimori_check(params: ModelParams, factors, collections: Sequence[Sequence[Iterable[int]]]) -> float:
    """Largest |E prod <sigma_S> - E <prod sigma_S> prod <sigma_S>| over the collections."""
    worst = 0.0
    for coll in collections:
        coll = [frozenset(int(i) for i in S) for S in coll]
        joint = _xor_all(coll)
        keys = list(set(coll) | {joint})

        def both(inst, coll=coll, joint=joint, keys=keys):
            rep = enumerate_gibbs(inst, keys)
            prod = Fraction(1)
            for S in coll:
                prod *= rep.brackets[S]
            return prod, rep.brackets[joint] * prod

        lhs_terms, rhs_terms = [], []
        for w, inst in erasure_patterns(params, factors):
            a, b = both(inst)
            lhs_terms.append(w * float(a))
            rhs_terms.append(w * float(b))
        worst = max(worst, abs(math.fsum(lhs_terms) - math.fsum(rhs_terms)))
    return worst


def gks_check(instance: Instance, pairs: Sequence[tuple[Iterable[int], Iterable[int]]]) -> bool:
    """Both GKS inequalities for every (S, T), compared in exact rationals."""
    keys = []
    for S, T in pairs:
        S, T = frozenset(S), frozenset(T)
        keys += [S, T, S ^ T]
    rep = enumerate_gibbs(instance, keys)
    b = rep.brackets
    for S, T in pairs:
        S, T = frozenset(S), frozenset(T)
        if b[S] < 0 or b[T] < 0:
            return False
        if b[S ^ T] - b[S] * b[T] < 0:
            return False
    return True


def gauge_invariance_check(params: ModelParams, factors, planted: Sequence[int]) -> bool:
    """ln Z with planted sigma^0 equals ln Z of the gauge-fixed image for every erasure pattern."""
    planted = tuple(int(s) for s in planted)
    for _, inst in erasure_patterns(params, factors):
        with_plant = Instance(params, inst.factors, inst.couplings, planted)
        if enumerate_gibbs(with_plant).Z != enumerate_gibbs(inst).Z:
            return False
    return True


__all__ = [
    "GibbsReport",
    "EnumerationLimitError",
    "enumerate_gibbs",
    "bracket",
    "erasure_patterns",
    "exact_disorder_average",
    "nishimori_check",
    "gks_check",
    "gauge_invariance_check",
]
