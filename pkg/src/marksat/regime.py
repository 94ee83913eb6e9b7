"""Sampler parameters: the regime inequality, marking fractions, eta, T, delta, R.

A bare "log" in the parameter formulas is taken base 2.  The annealing
schedule length (see :mod:`marksat.counter`) is the one place a natural log
appears.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

STRICT = "strict"
MANUAL = "manual"


class RegimeViolation(ValueError):
    """Strict mode was requested but the (k, d, xi) triple is out of regime."""


class ParamError(ValueError):
    pass


def regime_holds(k: int, d: int, xi: float = 0.0) -> bool:
    """``k >= 20 log2 k + 20 log2 d + 60 + xi``."""
    if k < 1 or d < 1 or xi < 0:
        raise ParamError("need k >= 1, d >= 1, xi >= 0")
    return k >= 20 * math.log2(k) + 20 * math.log2(d) + 60 + xi


def k_alpha_of(k: int) -> int:
    return math.floor(0.1133 * k)


def k_beta_of(k: int) -> int:
    return math.floor(0.5097 * k)


def zeta_of(xi: float) -> float:
    return 0.5 ** (20 + xi / 3)


def eta_of(d: int, k: int, xi: float = 0.0) -> float:
    return zeta_of(xi) * (1.0 / (d * k)) ** 9


def glauber_steps(n: int, eps: float) -> int:
    """``T = ceil(2 n log2(4n/eps))``; zero for an empty variable set."""
    if n == 0:
        return 0
    return math.ceil(2 * n * math.log2(4 * n / eps))


def step_delta(eps: float, T: int) -> float:
    return eps / (4 * (T + 1))


def rejection_trials(n: int, delta: float, eta: float) -> int:
    """``R = ceil((n/delta)^(eta/10) * log2(n/delta))``, at least 1."""
    q = max(n, 1) / delta
    return max(1, math.ceil(q ** (eta / 10) * math.log2(q)))


def edge_cap_of(n: int, d: int, k: int, delta: float) -> int:
    """Component size threshold ``ceil(d k log2(n/delta))``."""
    q = max(n, 1) / delta
    return max(0, math.ceil(d * k * math.log2(q)))


@dataclass(frozen=True)
class RegimeParams:
    n: int
    k: int
    d: int
    eps: float
    xi: float
    k_alpha: int
    k_beta: int
    eta: float
    T: int
    delta: float
    R: int
    mode: str = STRICT

    @property
    def zeta(self) -> float:
        return zeta_of(self.xi)

    @property
    def alpha(self) -> float:
        return self.k_alpha / self.k

    @property
    def beta(self) -> float:
        return self.k_beta / self.k

    @property
    def mark_prob(self) -> float:
        """Per-variable marking probability ``(1 + alpha - beta) / 2``."""
        return (1 + self.alpha - self.beta) / 2

    @property
    def edge_cap(self) -> int:
        return edge_cap_of(self.n, self.d, self.k, self.delta)

    def to_json(self) -> dict:
        out = asdict(self)
        out["zeta"] = self.zeta
        out["edge_cap"] = self.edge_cap
        return out


def _check_marking_counts(k: int, k_alpha: int, k_beta: int):
    if k_alpha < 1 or k_beta < 1:
        raise ParamError(f"need k_alpha >= 1 and k_beta >= 1 (got {k_alpha}, {k_beta})")
    if k_alpha + k_beta > k:
        raise ParamError(f"k_alpha + k_beta = {k_alpha + k_beta} exceeds k = {k}")


def derive_params(n: int, k: int, d: int, eps: float, xi: float = 0.0,
                  strict: bool = True) -> RegimeParams:
    """All parameters from their closed forms.

    With ``strict`` the regime inequality must hold.  ``d`` is clamped to 1 so
    that formulas without clauses get finite parameters.
    """
    if not 0 < eps < 1:
        raise ParamError("eps must lie in (0, 1)")
    if xi < 0:
        raise ParamError("xi must be non-negative")
    d = max(d, 1)
    if strict and not regime_holds(k, d, xi):
        rhs = 20 * math.log2(k) + 20 * math.log2(d) + 60 + xi
        raise RegimeViolation(f"k={k} < 20log2(k)+20log2(d)+60+xi = {rhs:.2f} (d={d}, xi={xi})")
    ka, kb = k_alpha_of(k), k_beta_of(k)
    if strict:
        _check_marking_counts(k, ka, kb)
    eta = eta_of(d, k, xi)
    T = glauber_steps(n, eps)
    delta = step_delta(eps, T)
    return RegimeParams(n=n, k=k, d=d, eps=eps, xi=xi, k_alpha=ka, k_beta=kb, eta=eta,
                        T=T, delta=delta, R=rejection_trials(n, delta, eta),
                        mode=STRICT if strict else MANUAL)


def manual_params(n: int, k: int, d: int, eps: float, k_alpha: int, k_beta: int,
                  xi: float = 0.0, eta: float | None = None, T: int | None = None,
                  delta: float | None = None, R: int | None = None) -> RegimeParams:
    """Parameters with explicit marking counts and optional overrides.

    Unsupplied fields follow the closed forms, evaluated after the overrides
    they depend on (so an explicit ``T`` also moves the default ``delta``).
    """
    if not 0 < eps < 1:
        raise ParamError("eps must lie in (0, 1)")
    _check_marking_counts(k, k_alpha, k_beta)
    d = max(d, 1)
    if eta is None:
        eta = eta_of(d, k, xi)
    if not 0 < eta < 1:
        raise ParamError("eta must lie in (0, 1)")
    if T is None:
        T = glauber_steps(n, eps)
    if T < 0:
        raise ParamError("T must be non-negative")
    if delta is None:
        delta = step_delta(eps, T)
    if not 0 < delta < 1:
        raise ParamError("delta must lie in (0, 1)")
    if R is None:
        R = rejection_trials(n, delta, eta)
    if R < 1:
        raise ParamError("R must be at least 1")
    return RegimeParams(n=n, k=k, d=d, eps=eps, xi=xi, k_alpha=k_alpha, k_beta=k_beta,
                        eta=eta, T=T, delta=delta, R=R, mode=MANUAL)
