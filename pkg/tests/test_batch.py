import dataclasses

import numpy as np
import pytest

from marksat.batch import (MAX_VARS, full_sample_batch, oracle_chain_batch,
                           oracle_full_sample_batch, subroutine_batch)
from marksat.formula import Clause, CnfFormula, generate_random
from marksat.marking import Marking, mark_variables
from marksat.oracle import empirical_tv, exact_conditional, exact_distribution, pack_codes
from marksat.regime import manual_params
from marksat.rng import RandomSource
from marksat.sampler import Bias, full_sample


def _instance():
    f = generate_random(8, 4, 4, 2, RandomSource(21))
    return f, manual_params(8, 4, f.max_degree, 0.1, 1, 2)


def test_batch_matches_scalar_in_distribution():
    f, params = _instance()
    scalar = np.array([full_sample(f, 0.1, seed, "manual", params)[0] for seed in range(3000)])
    batch, _ = full_sample_batch(f, 0.1, 5, 3000, params)
    # per-variable marginals agree within 4 standard errors of the difference
    for v in range(f.num_vars):
        p, q = scalar[:, v].mean(), batch[:, v].mean()
        se = np.sqrt((p * (1 - p) + q * (1 - q)) / 3000)
        assert abs(p - q) <= 4 * se + 1e-12
    # two-sample TV of the law of the first four variables (16 atoms)
    proj = lambda rows: np.bincount(pack_codes(rows[:, :4]), minlength=16) / rows.shape[0]
    assert 0.5 * np.abs(proj(scalar) - proj(batch)).sum() <= 0.06
    truth = exact_distribution(f)
    assert empirical_tv(batch, truth) <= 0.15 and empirical_tv(scalar, truth) <= 0.15


def test_batch_large_run_close_to_truth():
    f, params = _instance()
    bits, report = full_sample_batch(f, 0.1, 1, 50_000, params)
    assert empirical_tv(bits, exact_distribution(f)) <= 0.04
    assert report.steps == params.T * 50_000


def test_batch_is_deterministic_and_honours_rng():
    f, params = _instance()
    a, ra = full_sample_batch(f, 0.1, 3, 500, params)
    b, rb = full_sample_batch(f, 0.1, 3, 500, params)
    assert np.array_equal(a, b) and ra == rb
    c, _ = full_sample_batch(f, 0.1, 3, 500, params, rng=RandomSource(99))
    assert not np.array_equal(a, c)


def test_batch_shared_marking_and_zero_clause():
    f, params = _instance()
    mk = mark_variables(f, params, 0.025, RandomSource(4))
    bits, _ = full_sample_batch(f, 0.1, 2, 20_000, params, marking=mk)
    assert empirical_tv(bits, exact_distribution(f)) <= 0.06
    empty = CnfFormula(5, [])
    bits, _ = full_sample_batch(empty, 0.1, 2, 40_000, manual_params(5, 2, 1, 0.1, 1, 1))
    assert empirical_tv(bits, exact_distribution(empty)) <= 0.03


def test_batch_mark_failure_rows_are_bias_draws():
    f = CnfFormula(4, [Clause((0, 1, 2, 3), (1,) * 4)])
    params = dataclasses.replace(manual_params(4, 4, 1, 0.1, 1, 3), k_beta=4)
    bits, report = full_sample_batch(f, 0.1, 1, 20_000, params)
    assert report.mark_failed
    assert empirical_tv(bits, exact_distribution(CnfFormula(4, []))) <= 0.03


def test_batch_rejects_wide_formulas():
    f = CnfFormula(MAX_VARS + 1, [])
    with pytest.raises(ValueError):
        full_sample_batch(f, 0.1, 1, 2, manual_params(MAX_VARS + 1, 2, 1, 0.1, 1, 1))


def test_subroutine_batch_law_and_bias():
    f = generate_random(12, 6, 4, 2, RandomSource(8))
    params = manual_params(12, 4, 2, 0.1, 1, 1)
    values = [-1] * 12
    given = {0: 1, 4: 0}
    for v, b in given.items():
        values[v] = b
    bits, fallback = subroutine_batch(f, params.delta, values, [2, 7, 9], params, 100_000,
                                      RandomSource(1))
    kept = bits[~fallback]
    assert empirical_tv(kept, exact_conditional(f, given, [2, 7, 9])) <= 0.02
    free = CnfFormula(3, [])
    bias = Bias(0.5, {1: 0.8})
    bits, _ = subroutine_batch(free, 0.01, [-1] * 3, [1], params, 50_000, RandomSource(2), bias)
    assert abs(bits.mean() - 0.8) < 0.01


def test_oracle_chain_batch_reaches_marked_law():
    f = generate_random(8, 4, 3, 2, RandomSource(11))
    mk = Marking.from_set(f, [0, 2, 5, 6])
    codes = oracle_chain_batch(f, mk, 300, 50_000, RandomSource(3))
    assert empirical_tv(codes, exact_conditional(f, None, [0, 2, 5, 6])) <= 0.03


def test_oracle_full_sample_batch_reaches_gibbs_law():
    f = generate_random(8, 4, 3, 2, RandomSource(12))
    mk = Marking.from_set(f, [1, 3])
    codes = oracle_full_sample_batch(f, mk, 100, 50_000, RandomSource(4), theta=0.6)
    assert empirical_tv(codes, exact_distribution(f, 0.6)) <= 0.04
