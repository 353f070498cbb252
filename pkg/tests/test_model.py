from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbmbec.channel import Coupling
from cbmbec.model import (
    LN2,
    Instance,
    ModelParams,
    free_entropy,
    generate_instance,
    marginal,
    mean_overlap,
    overlap_power_moment,
    thermal_overlap_variance,
    to_gf2,
    tuple_moment,
)
from cbmbec.oracle import enumerate_gibbs

from conftest import SMALL4

INF, ZERO = Coupling.INF, Coupling.ZERO


def small4():
    return Instance(ModelParams(4, 3, 1.0, 0.0), tuple(SMALL4), (INF,) * 3)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(2, 3, 0.2, 0.5)
    with pytest.raises(ValueError):
        ModelParams(5, 1, 0.2, 0.5)
    with pytest.raises(ValueError):
        ModelParams(5, 3, -1, 0.5)
    with pytest.raises(ValueError):
        ModelParams(5, 3, 0.2, 1.5)


def test_instance_validation():
    p = ModelParams(4, 3, 1.0, 0.0)
    with pytest.raises(ValueError):
        Instance(p, ((0, 0, 1),), (INF,))
    with pytest.raises(IndexError):
        Instance(p, ((0, 1, 4),), (INF,))
    with pytest.raises(ValueError):
        Instance(p, ((0, 1, 2),), ())


def test_generate_degenerate(rng):
    inst = generate_instance(ModelParams(50, 3, 0.0, 0.5), rng)
    assert inst.m == 0
    inst = generate_instance(ModelParams(50, 3, 2.0, 1.0), rng)
    assert all(c is ZERO for c in inst.couplings)
    assert free_entropy(inst) == LN2
    assert mean_overlap(inst) == 0


def test_factor_count_poisson_mean(rng):
    p = ModelParams(1000, 3, 0.2, 0.5)
    m = np.array([generate_instance(p, rng).m for _ in range(10_000)])
    assert abs(m.mean() - 200) <= 3 * m.std(ddof=1) / math.sqrt(m.size)


def test_to_gf2_examples():
    p = ModelParams(3, 3, 1.0, 0.0)
    assert to_gf2(Instance(p, ((0, 1, 2),), (ZERO,))).rank == 0
    assert to_gf2(Instance(p, ((0, 1, 2),), (INF,))).rank == 1
    assert to_gf2(Instance(p, ((0, 1, 2), (2, 1, 0)), (INF, INF))).rank == 1
    with pytest.raises(ValueError):
        to_gf2(Instance(p, ((0, 1, 2),), (INF,), planted=(1, -1, 1)))


def test_free_entropy_examples():
    p = ModelParams(3, 3, 1.0, 0.0)
    assert free_entropy(Instance(p, ((0, 1, 2),), (INF,))) == pytest.approx(2 / 3 * LN2)
    assert free_entropy(small4()) == pytest.approx(LN2 / 4)


def test_marginal_and_overlap_examples():
    inst = small4()
    assert marginal(inst, []) == 1
    assert marginal(inst, [0]) == 1
    assert marginal(inst, [1]) == 0
    assert mean_overlap(inst) == 0.25
    full = Instance(ModelParams(3, 2, 1.0, 0.0), ((0, 1), (1, 2), (0, 2)), (INF,) * 3)
    assert to_gf2(full).rank == 2  # pairs only reach even-weight vectors
    g = to_gf2(inst)
    g.add_row([1])
    g.add_row([2])
    assert mean_overlap(g) == 1
    assert overlap_power_moment(g, 3, method="exhaustive") == 1


def test_overlap_power_moment_small4():
    inst = small4()
    g = to_gf2(inst)
    assert overlap_power_moment(inst, 1, method="exhaustive") == mean_overlap(inst)
    hits = sum(1 for i, j in itertools.product(range(4), repeat=2) if g.in_row_space({i} ^ {j}))
    assert overlap_power_moment(inst, 2, method="exhaustive") == hits / 16
    assert tuple_moment(inst, 2) == hits / 16


def test_overlap_power_mc_close(rng):
    inst = generate_instance(ModelParams(60, 3, 0.8, 0.2), rng)
    exact = tuple_moment(inst, 3)
    est = overlap_power_moment(inst, 3, samples=40_000, rng=rng, method="mc")
    assert abs(est - exact) < 4 * math.sqrt(exact * (1 - exact) / 40_000) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 9), st.floats(0.2, 1.5), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_brackets_and_moments_against_enumeration(n, alpha, q, seed):
    inst = generate_instance(ModelParams(n, 3, alpha, q), np.random.default_rng(seed))
    rep = enumerate_gibbs(inst, subsets=[(i,) for i in range(n)], replicas=(1, 2))
    assert free_entropy(inst) == pytest.approx(rep.logZ / n, abs=1e-15)
    for i in range(n):
        assert marginal(inst, [i]) == rep.brackets[frozenset([i])]
    assert mean_overlap(inst) == pytest.approx(float(rep.replica_overlaps[1]))
    # thermal variance by enumeration of replica pairs: <Q^2> - <Q>^2
    sols = []
    for v in range(1 << n):
        spins = [1 - 2 * (v >> i & 1) for i in range(n)]
        if all(math.prod(spins[i] for i in A) == 1 for A in inst.revealed_factors()):
            sols.append(spins)
    Z = len(sols)
    q2 = sum(sum(a[i] * b[i] for i in range(n)) ** 2 for a in sols for b in sols) / (Z * Z * n * n)
    q1 = sum(sum(a[i] * b[i] for i in range(n)) for a in sols for b in sols) / (Z * Z * n)
    assert thermal_overlap_variance(inst) == pytest.approx(q2 - q1 * q1, abs=1e-12)


def test_json_roundtrip(rng):
    inst = generate_instance(ModelParams(12, 3, 0.7, 0.4), rng, planted=True, seed=9)
    back = Instance.from_json(inst.to_json())
    assert back == inst
    assert back.gauge_transform().gauge_fixed


def test_tuple_moment_distinct_bounds(rng):
    inst = generate_instance(ModelParams(30, 3, 1.2, 0.1), rng)
    for k in (1, 2, 3, 4):
        v = tuple_moment(inst, k, distinct=True)
        assert 0.0 <= v <= 1.0
    assert tuple_moment(inst, 1, distinct=True) == mean_overlap(inst)
