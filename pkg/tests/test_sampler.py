import dataclasses

import numpy as np
import pytest

from marksat.formula import Clause, CnfFormula, PartialAssignment, Component, generate_random, \
    parse_dimacs, simplify
from marksat.marking import Marking
from marksat.oracle import empirical_tv, exact_conditional, exact_distribution
from marksat.regime import RegimeViolation, manual_params
from marksat.rng import RandomSource
from marksat.sampler import (ORACLE, REJECTED, TOO_LARGE, UNIFORM, Bias, SamplerInputError,
                             SamplerReport, full_sample, glauber_run, model_line,
                             rejection_sampling, sample_subroutine)

OR = parse_dimacs("p cnf 2 1\n1 2 0")
PARAMS = manual_params(12, 4, 2, 0.1, 1, 1)


def test_bias_validation_and_draws():
    with pytest.raises(ValueError):
        Bias(1.5)
    b = Bias(0.5, {2: 0.0, 3: 1.0})
    assert not b.is_uniform and UNIFORM.is_uniform
    draw = b.draw(range(5), RandomSource(1))
    assert draw[2] == 0 and draw[3] == 1
    assert b.vector(5).tolist() == [0.5, 0.5, 0.0, 1.0, 0.5]


def test_rejection_on_empty_component_returns_first_draw():
    f = CnfFormula(3, [])
    sf = simplify(f, PartialAssignment.empty(3))
    y = rejection_sampling(sf, Component(frozenset({1}), frozenset()), 1, UNIFORM, RandomSource(4))
    assert y == {1: RandomSource(4).bit()}


def test_rejection_on_unit_clause_forces_value():
    sf = simplify(OR, PartialAssignment.from_mapping(2, {0: 0}))
    comp = Component(frozenset({1}), frozenset({0}))
    r = RandomSource(5)
    outs = [rejection_sampling(sf, comp, 50, UNIFORM, r) for _ in range(200)]
    assert all(o == {1: 1} for o in outs)


def test_rejection_law_on_or_clause():
    sf = simplify(OR, PartialAssignment.empty(2))
    comp = Component(frozenset({0, 1}), frozenset({0}))
    r = RandomSource(6)
    rows = []
    while len(rows) < 100_000:
        y = rejection_sampling(sf, comp, 1, UNIFORM, r)
        if y is not None:
            rows.append((y[0], y[1]))
    tv = empirical_tv(np.array(rows), exact_distribution(OR))
    assert tv <= 0.02


def test_rejection_returns_none_when_impossible():
    f = parse_dimacs("p cnf 2 2\n1 0\n-1 0")
    sf = simplify(f, PartialAssignment.empty(2))
    comp = Component(frozenset({0}), frozenset({0, 1}))
    assert rejection_sampling(sf, comp, 5, UNIFORM, RandomSource(1)) is None


def test_subroutine_on_isolated_variable():
    f = parse_dimacs("p cnf 3 1\n1 2 0")
    y, reason = sample_subroutine(f, 0.01, PartialAssignment.empty(3), [2], UNIFORM, PARAMS,
                                  RandomSource(2))
    assert reason is None and y == {2: RandomSource(2).bit()}


def test_subroutine_too_large_falls_back_to_bias_draw():
    f = generate_random(12, 6, 4, 2, RandomSource(1))
    bias = Bias(0.5, {0: 0.9})
    x = PartialAssignment.empty(12)
    y, reason = sample_subroutine(f, 0.01, x, [0, 1], bias, PARAMS, RandomSource(3), edge_cap=0)
    assert reason == TOO_LARGE
    assert y == bias.draw([0, 1], RandomSource(3))
    y2, _ = sample_subroutine(f, 0.01, x, [0, 1], bias, PARAMS, RandomSource(3), edge_cap=0,
                              literal_uniform_fallback=True)
    assert y2 == UNIFORM.draw([0, 1], RandomSource(3))


def test_subroutine_contrived_delta_forces_zero_cap():
    f = generate_random(12, 6, 4, 2, RandomSource(1))
    v = f.clauses[0].variables[0]
    _, reason = sample_subroutine(f, 12.0, PartialAssignment.empty(12), [v], UNIFORM, PARAMS,
                                  RandomSource(1))
    assert reason == TOO_LARGE


def test_subroutine_rejection_fallback_flag():
    f = parse_dimacs("p cnf 2 2\n1 0\n-1 0")
    p = dataclasses.replace(PARAMS, R=3)
    _, reason = sample_subroutine(f, 0.01, PartialAssignment.empty(2), [0], UNIFORM, p,
                                  RandomSource(1))
    assert reason == REJECTED


def test_subroutine_conditional_law_small_run():
    f = generate_random(10, 5, 4, 2, RandomSource(8))
    given = {0: 1, 3: 0, 6: 1}
    x = PartialAssignment.from_mapping(10, given)
    s = [1, 2, 5]
    r = RandomSource(9)
    rows = []
    for _ in range(20_000):
        y, reason = sample_subroutine(f, 0.01, x, s, UNIFORM, PARAMS, r)
        if reason is None:
            rows.append([y[v] for v in s])
    assert empirical_tv(np.array(rows), exact_conditional(f, given, s)) <= 0.03


def test_glauber_edge_cases():
    f = generate_random(8, 3, 4, 2, RandomSource(1))
    params = manual_params(8, 4, 2, 0.1, 1, 1)
    values, report = glauber_run(f, Marking.from_set(f, []), params, UNIFORM, RandomSource(1))
    assert values == [-1] * 8
    m = Marking.from_set(f, [0, 3])
    values, _ = glauber_run(f, m, dataclasses.replace(params, T=0), UNIFORM, RandomSource(2))
    r = RandomSource(2)
    assert values[0] == r.bit() and values[3] == r.bit()
    assert all(values[v] == -1 for v in range(8) if v not in (0, 3))


def test_oracle_glauber_converges_scalar():
    f = generate_random(8, 4, 3, 2, RandomSource(11))
    m = Marking.from_set(f, [0, 2, 5])
    params = manual_params(8, 3, 2, 0.1, 1, 1, T=200)
    root = RandomSource(3)
    rows = []
    for t in range(4000):
        values, _ = glauber_run(f, m, params, UNIFORM, root.child(t), ORACLE)
        rows.append([values[v] for v in (0, 2, 5)])
    assert empirical_tv(np.array(rows), exact_conditional(f, None, [0, 2, 5])) <= 0.05


def test_full_sample_on_empty_formula_is_uniform():
    f = CnfFormula(4, [])
    params = manual_params(4, 2, 1, 0.1, 1, 1)
    rows = [full_sample(f, 0.1, seed, "manual", params)[0] for seed in range(4000)]
    assert empirical_tv(np.array(rows), exact_distribution(f)) <= 0.05


def test_full_sample_is_deterministic():
    f = generate_random(12, 6, 4, 2, RandomSource(1))
    params = manual_params(12, 4, 2, 0.1, 1, 2)
    a = full_sample(f, 0.1, 17, "manual", params)
    b = full_sample(f, 0.1, 17, "manual", params)
    assert a == b
    assert a[1].steps == params.T and a[1].subroutine_calls == params.T + 1


def test_full_sample_mode_checks():
    with pytest.raises(SamplerInputError):
        full_sample(OR, 0.1, 1, "manual")
    with pytest.raises(RegimeViolation):
        full_sample(generate_random(12, 4, 6, 2, RandomSource(1)), 0.1, 1)
    mixed = CnfFormula(3, [Clause((0, 1), (1, 1)), Clause((0, 1, 2), (1, 1, 1))])
    with pytest.raises(SamplerInputError):
        full_sample(mixed, 0.1, 1)


def test_mark_failure_returns_bias_draw():
    f = CnfFormula(4, [Clause((0, 1, 2, 3), (1,) * 4)])
    params = dataclasses.replace(manual_params(4, 4, 1, 0.1, 1, 3), k_beta=4)
    values, report = full_sample(f, 0.1, 3, "manual", params)
    assert report.mark_failed
    expected = UNIFORM.draw(range(4), RandomSource(3).child(1))
    assert values == [expected[v] for v in range(4)]


def test_report_merge_and_json():
    a = SamplerReport(fallback_toolarge_count=1)
    a.record(REJECTED)
    a.record(None)
    b = SamplerReport(fallback_rejection_count=2, mark_failed=True)
    a.merge(b)
    assert a.to_json()["fallback_rejection_count"] == 3 and a.mark_failed
    assert a.subroutine_calls == 2


def test_model_line():
    assert model_line([1, 0, 1]) == "v 1 -2 3 0"
