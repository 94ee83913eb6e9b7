import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marksat.formula import Clause, CnfFormula, generate_random, parse_dimacs
from marksat.oracle import (ExactDistribution, OracleCapExceeded, PreconditionError,
                            ZeroMassCondition, empirical_tv, exact_conditional, exact_count,
                            exact_distribution, exact_partition, gray_code_count,
                            local_uniformity_check, tv_distance, unsat_histogram)
from marksat.rng import RandomSource

OR = parse_dimacs("p cnf 2 1\n1 2 0")


def _naive_count(f):
    return sum(f.satisfied_by(list(bits)) for bits in itertools.product((0, 1), repeat=f.num_vars))


def test_count_examples():
    assert exact_count(CnfFormula(3, [])) == 8
    assert exact_count(OR) == 3
    assert gray_code_count(OR) == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_counters_agree(seed):
    r = RandomSource(seed)
    n = 3 + r.below(8)
    k = 2 + r.below(min(3, n - 1))
    f = generate_random(n, r.below(2 * n // k + 1), k, 3, r.child(0))
    assert exact_count(f) == gray_code_count(f) == _naive_count(f)


def test_partition_examples():
    f = generate_random(10, 6, 3, 2, RandomSource(1))
    assert exact_partition(f, 0) == 2 ** 10
    assert exact_partition(CnfFormula(5, []), 3.0) == 32
    z = exact_count(f)
    assert abs(exact_partition(f, 50) - z) <= 2 ** 10 * math.exp(-50)


def test_partition_monotone_and_limit():
    f = generate_random(12, 8, 3, 2, RandomSource(2))
    z = exact_count(f)
    thetas = [0, 0.1, 0.5, 1, 2, 5, 10, 20]
    values = [exact_partition(f, t) for t in thetas]
    assert all(a >= b for a, b in zip(values, values[1:]))
    for t, v in zip(thetas, values):
        assert abs(v - z) <= 2 ** 12 * math.exp(-t) + 1e-9


def test_histogram_sums_to_all_assignments():
    f = generate_random(11, 7, 3, 2, RandomSource(3))
    hist = unsat_histogram(f)
    assert hist.sum() == 2 ** 11 and hist[0] == exact_count(f)


def test_conditional_examples():
    d = exact_conditional(CnfFormula(3, []), None, [1])
    assert d.probs.tolist() == [0.5, 0.5]
    d = exact_conditional(OR, {0: 0}, [1])
    assert d.as_dict() == {(0,): 0.0, (1,): 1.0}
    with pytest.raises(ZeroMassCondition):
        exact_conditional(parse_dimacs("p cnf 2 1\n1 0"), {0: 0}, [1])


def test_conditional_marginalisation():
    f = generate_random(10, 6, 3, 2, RandomSource(4))
    given_ = {0: 1, 5: 0}
    joint = exact_conditional(f, given_, [2, 3, 7])
    for v in (2, 3, 7):
        single = exact_conditional(f, given_, [v])
        assert abs(joint.marginal(v) - single.probs[1]) < 1e-12


def test_gibbs_weights_match_definition():
    f = generate_random(6, 4, 3, 2, RandomSource(5))
    theta = 0.8
    dist = exact_distribution(f, theta)
    w = [math.exp(-theta * len(f.unsat_clauses(list(bits))))
         for bits in ([(c >> i) & 1 for i in range(6)] for c in range(64))]
    assert np.allclose(dist.probs, np.array(w) / sum(w), atol=1e-15)


def test_tv_examples():
    half = ExactDistribution((0,), np.array([0.5, 0.5]))
    quarter = ExactDistribution((0,), np.array([0.25, 0.75]))
    assert tv_distance(half, half) == 0
    assert tv_distance(ExactDistribution((0,), np.array([1.0, 0.0])),
                       ExactDistribution((0,), np.array([0.0, 1.0]))) == 1
    assert tv_distance(half, quarter) == 0.25
    with pytest.raises(ValueError):
        tv_distance(half, ExactDistribution((1,), np.array([0.5, 0.5])))


def test_empirical_tv_examples():
    half = ExactDistribution((0,), np.array([0.5, 0.5]))
    assert empirical_tv(np.zeros((100, 1), dtype=int), half) == 0.5
    p = exact_distribution(generate_random(8, 4, 3, 2, RandomSource(6)))
    draws = RandomSource(7).random_array(100_000)
    codes = np.minimum(np.searchsorted(np.cumsum(p.probs), draws, side="right"), 255)
    assert empirical_tv(codes, p) <= 0.02
    uniform = exact_distribution(CnfFormula(4, []))
    bits = (RandomSource(8).random_array(400_000).reshape(-1, 4) < 0.5).astype(int)
    assert empirical_tv(bits, uniform) < 0.01


def test_empirical_tv_rejects_huge_support():
    big = ExactDistribution(tuple(range(21)), np.full(1 << 21, 1.0 / (1 << 21)))
    with pytest.raises(ValueError):
        empirical_tv(np.zeros(3, dtype=np.int64), big)


def test_caps(monkeypatch):
    monkeypatch.setenv("MARKSAT_COUNT_CAP", "8")
    with pytest.raises(OracleCapExceeded):
        exact_count(CnfFormula(9, []))
    monkeypatch.setenv("MARKSAT_WEIGHTED_CAP", "5")
    with pytest.raises(OracleCapExceeded):
        exact_partition(CnfFormula(6, []), 1.0)


def test_local_uniformity_examples():
    assert local_uniformity_check(CnfFormula(5, []), 8.0)
    f = generate_random(14, 3, 8, 2, RandomSource(9))
    assert local_uniformity_check(f, 8.0)
    tiny = CnfFormula(3, [Clause((0, 1), (1, 1))])
    with pytest.raises(PreconditionError):
        local_uniformity_check(tiny, 8.0)
