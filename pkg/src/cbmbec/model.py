"""The censored block model observed through a binary erasure channel.

After gauge fixing (planted configuration all ones) a revealed observation on
a K-subset A forces sigma_A = +1, i.e. an even number of -1 spins in A.  With
sigma_i = (-1)^{b_i} this is the parity row ``sum_{i in A} b_i = 0``, so the
posterior is uniform on the kernel of a GF(2) system:

    Z = 2^{n - rank},   <sigma_S> = 1 if 1_S is in the row space else 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product
from math import perm

import numpy as np

from .channel import BecChannel, Coupling, sample_revealed
from .gf2 import Gf2System, distinct_zero_sum_count, support_to_bits, zero_sum_tuple_counts
from .seeding import as_rng

LN2 = math.log(2.0)


@dataclass(frozen=True)
class ModelParams:
    n: int
    K: int
    alpha: float
    q: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.K > self.n:
            raise ValueError(f"K={self.K} exceeds n={self.n}: no K-subset exists")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        BecChannel(self.q)

    @property
    def channel(self) -> BecChannel:
        return BecChannel(self.q)


@dataclass(frozen=True)
class Instance:
    params: ModelParams
    factors: tuple[tuple[int, ...], ...]
    couplings: tuple[Coupling, ...]
    planted: tuple[int, ...] | None = None  # None means gauge-fixed (all ones)
    seed: int | None = None

    def __post_init__(self):
        if len(self.factors) != len(self.couplings):
            raise ValueError("one coupling per factor required")
        for A in self.factors:
            if len(A) != self.params.K or len(set(A)) != self.params.K:
                raise ValueError(f"factor {A} is not a set of K={self.params.K} distinct indices")
            if min(A) < 0 or max(A) >= self.params.n:
                raise IndexError(f"factor {A} out of range")
        if self.planted is not None:
            if len(self.planted) != self.params.n or any(s not in (-1, 1) for s in self.planted):
                raise ValueError("planted configuration must be a +-1 vector of length n")

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def m(self) -> int:
        return len(self.factors)

    @property
    def gauge_fixed(self) -> bool:
        return self.planted is None or all(s == 1 for s in self.planted)

    def revealed_factors(self) -> list[tuple[int, ...]]:
        return [A for A, J in zip(self.factors, self.couplings) if J is Coupling.INF]

    def gauge_transform(self) -> "Instance":
        """Image under sigma_i -> sigma_i^0 sigma_i: same graph, planted all ones."""
        return Instance(self.params, self.factors, self.couplings, None, self.seed)

    def to_json(self) -> str:
        doc = {
            "n": self.params.n,
            "K": self.params.K,
            "alpha": self.params.alpha,
            "q": self.params.q,
            "seed": self.seed,
            "factors": [list(A) for A in self.factors],
            "couplings": [J.value for J in self.couplings],
        }
        if self.planted is not None:
            doc["planted"] = list(self.planted)
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        doc = json.loads(text)
        params = ModelParams(doc["n"], doc["K"], doc["alpha"], doc["q"])
        planted = doc.get("planted")
        return cls(
            params,
            tuple(tuple(int(i) for i in A) for A in doc["factors"]),
            tuple(Coupling(c) for c in doc["couplings"]),
            None if planted is None else tuple(planted),
            doc.get("seed"),
        )


def random_k_subsets(n: int, K: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` independent uniform K-subsets of range(n), one per row."""
    out = np.empty((m, K), dtype=np.int64)
    todo = np.arange(m)
    while todo.size:
        draw = rng.integers(0, n, size=(todo.size, K))
        s = np.sort(draw, axis=1)
        ok = np.all(np.diff(s, axis=1) != 0, axis=1) if K > 1 else np.ones(todo.size, bool)
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    return out


def generate_instance(params: ModelParams, rng, planted: bool = False, seed: int | None = None) -> Instance:
    """Draw m ~ Poi(alpha n) factors on uniform K-subsets with BEC couplings.

    ``planted=True`` additionally draws a uniform hidden configuration; the
    default is the gauge-fixed ensemble.
    """
    rng = as_rng(rng if rng is not None else seed)
    m = int(rng.poisson(params.alpha * params.n))
    subsets = random_k_subsets(params.n, params.K, m, rng)
    revealed = sample_revealed(params.channel, m, rng)
    sigma0 = None
    if planted:
        sigma0 = tuple(int(s) for s in rng.choice(np.array([-1, 1]), size=params.n))
    return Instance(
        params,
        tuple(tuple(int(i) for i in row) for row in subsets),
        tuple(Coupling.INF if r else Coupling.ZERO for r in revealed),
        sigma0,
        seed,
    )


def to_gf2(instance: Instance) -> Gf2System:
    if not instance.gauge_fixed:
        raise ValueError("to_gf2 requires a gauge-fixed instance; call gauge_transform() first")
    system = Gf2System(instance.n)
    for A in instance.revealed_factors():
        system.add_row(A)
    return system


def _system(obj) -> Gf2System:
    return obj if isinstance(obj, Gf2System) else to_gf2(obj)


def free_entropy(instance) -> float:
    """(1/n) ln Z = (1 - rank/n) ln 2 (nats per variable)."""
    system = _system(instance)
    return (1.0 - system.rank / system.n) * LN2


def marginal(instance, S) -> int:
    """Gibbs bracket <sigma_S>, which is exactly 0 or 1 on the BEC."""
    system = _system(instance)
    return int(system.in_row_space(S))


def mean_overlap(instance) -> float:
    """<Q_1>: fraction of variables fixed by the constraints."""
    system = _system(instance)
    return len(system.determined()) / system.n


def tuple_moment(instance, k: int, distinct: bool = False) -> float:
    """Exact average of <sigma_{i_1}...sigma_{i_k}> over index k-tuples.

    ``distinct=False`` averages over all n^k tuples (= <Q_1^k>); ``distinct=True``
    averages over tuples of distinct indices, i.e. over uniformly random
    k-subsets as drawn for factors.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    system = _system(instance)
    n = system.n
    classes = system.variable_classes()
    if distinct:
        if k > n:
            raise ValueError("k exceeds n")
        return distinct_zero_sum_count(classes, k) / perm(n, k)
    return zero_sum_tuple_counts(classes, k)[k] / n**k


def thermal_overlap_variance(instance) -> float:
    """<Q_1^2> - <Q_1>^2 = (1/n^2) sum_{ij} (<s_i s_j> - <s_i><s_j>)."""
    system = _system(instance)
    n = system.n
    N = zero_sum_tuple_counts(system.variable_classes(), 2)
    z = len(system.determined())
    return (N[2] - z * z) / n**2


def overlap_power_moment(instance, k: int, samples: int = 10_000, rng=None, method: str = "auto") -> float:
    """Estimate <Q_1^k> = n^-k sum over index k-tuples of <sigma_{i_1}...sigma_{i_k}>.

    method: ``"exhaustive"`` loops over all n^k tuples, ``"mc"`` averages
    ``samples`` uniformly drawn tuples (with replacement), ``"count"`` uses
    the exact coset-class count, and ``"auto"`` picks exhaustive when
    n^k <= 10^6 and Monte Carlo otherwise.
    """
    if k < 1 or samples < 1:
        raise ValueError("k and samples must be >= 1")
    system = _system(instance)
    n = system.n
    if method == "auto":
        method = "exhaustive" if n**k <= 10**6 else "mc"
    if method == "count":
        return tuple_moment(system, k)
    classes = system.variable_classes()
    if method == "exhaustive":
        if n**k > 10**6:
            raise ValueError("exhaustive mode limited to n^k <= 10^6")
        hits = 0
        for tup in product(classes, repeat=k):
            v = 0
            for c in tup:
                v ^= c
            hits += v == 0
        return hits / n**k
    if method == "mc":
        rng = as_rng(rng)
        idx = rng.integers(0, n, size=(samples, k))
        hits = 0
        for row in idx:
            v = 0
            for i in row:
                v ^= classes[i]
            hits += v == 0
        return hits / samples
    raise ValueError(f"unknown method {method!r}")


def bracket(system: Gf2System, S) -> int:
    return int(system.bits_in_row_space(support_to_bits(S, system.n)))


__all__ = [
    "LN2",
    "ModelParams",
    "Instance",
    "generate_instance",
    "random_k_subsets",
    "to_gf2",
    "free_entropy",
    "marginal",
    "mean_overlap",
    "tuple_moment",
    "thermal_overlap_variance",
    "overlap_power_moment",
]
