import json
import math

import pytest
from hypothesis import given, strategies as st

from marksat.regime import (ParamError, RegimeViolation, derive_params, edge_cap_of, eta_of,
                            glauber_steps, k_alpha_of, k_beta_of, manual_params, regime_holds,
                            rejection_trials, step_delta)


def test_regime_examples():
    assert regime_holds(256, 1, 0)
    assert not regime_holds(60, 1, 0)
    assert not regime_holds(1, 1, 0)
    assert regime_holds(240, 1, 0)
    assert regime_holds(240, 2, 0)
    assert not regime_holds(240, 4, 0)


def test_marking_fractions():
    assert (k_alpha_of(60), k_beta_of(60)) == (6, 30)
    assert (k_alpha_of(240), k_beta_of(240)) == (27, 122)


def test_derived_params_for_k240():
    p = derive_params(2400, 240, 1, 0.1)
    assert (p.k_alpha, p.k_beta) == (27, 122)
    assert p.T == math.ceil(2 * 2400 * math.log2(4 * 2400 / 0.1))
    assert p.R >= 1 and p.mode == "strict"


def test_steps_and_delta_example():
    assert glauber_steps(8, 0.5) == 96
    assert step_delta(0.5, 96) == 0.5 / 388
    p = manual_params(8, 4, 1, 0.5, 1, 2)
    assert p.T == 96 and p.delta == 0.5 / 388


def test_strict_out_of_regime_raises():
    with pytest.raises(RegimeViolation):
        derive_params(10, 60, 1, 0.1)
    p = derive_params(10, 60, 1, 0.1, strict=False)
    assert p.mode == "manual"


def test_manual_params_validation():
    assert manual_params(10, 4, 2, 0.1, 1, 2).k_beta == 2
    with pytest.raises(ParamError):
        manual_params(10, 4, 2, 0.1, 3, 2)
    assert manual_params(10, 4, 2, 0.1, 1, 2, T=10_000).T == 10_000
    with pytest.raises(ParamError):
        manual_params(10, 4, 2, 1.5, 1, 2)
    with pytest.raises(ParamError):
        manual_params(10, 4, 2, 0.1, 1, 2, R=0)


def test_explicit_T_moves_default_delta():
    p = manual_params(10, 4, 2, 0.1, 1, 2, T=9)
    assert p.delta == 0.1 / 40


def test_rejection_trials_and_cap_closed_forms():
    n, delta, eta = 100, 1e-4, 0.01
    q = n / delta
    assert rejection_trials(n, delta, eta) == math.ceil(q ** (eta / 10) * math.log2(q))
    assert edge_cap_of(n, 2, 5, delta) == math.ceil(10 * math.log2(q))
    assert edge_cap_of(1, 2, 5, 1.0) == 0


@given(st.integers(1, 10_000), st.integers(1, 1000), st.floats(0, 50))
def test_eta_range(d, k, xi):
    assert 0 < eta_of(d, k, xi) <= 2.0 ** -20


@given(st.integers(1, 100_000), st.floats(1e-6, 0.999))
def test_delta_identity(n, eps):
    T = glauber_steps(n, eps)
    assert math.isclose(step_delta(eps, T) * 4 * (T + 1), eps, rel_tol=1e-12)


def test_regime_monotone_in_k_on_grid():
    for d in (1, 2, 4, 16):
        for xi in (0.0, 5.0, 30.0):
            flips = [regime_holds(k, d, xi) for k in range(30, 2000)]
            first = flips.index(True)
            assert all(flips[first:])


def test_params_serialise():
    p = derive_params(2400, 240, 1, 0.1)
    data = json.loads(json.dumps(p.to_json()))
    assert data["k"] == 240 and data["edge_cap"] == p.edge_cap
    assert math.isclose(p.mark_prob, (1 + 27 / 240 - 122 / 240) / 2)
