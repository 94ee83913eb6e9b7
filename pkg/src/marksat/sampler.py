"""Sampling satisfying assignments: Glauber dynamics on the marked variables,
the component-wise Sample subroutine, and bounded rejection sampling.

This module is the scalar reference path: every step re-simplifies the
formula under the current partial assignment.  :mod:`marksat.batch` runs many
independent chains at once with the same step semantics.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .formula import UNASSIGNED, CnfFormula, Component, ComponentTooLarge, PartialAssignment, \
    SimplifiedFormula, components_touching, simplify
from .marking import Marking, MarkFailure, mark_variables
from .oracle import Enumeration
from .regime import RegimeParams, derive_params, edge_cap_of
from .rng import RandomSource

log = logging.getLogger(__name__)

PAPER = "paper"
ORACLE = "oracle"

TOO_LARGE = "too_large"
REJECTED = "rejection"


class SamplerInputError(ValueError):
    pass


@dataclass
class Bias:
    """Independent per-variable probabilities of drawing 1."""

    default_one_prob: float = 0.5
    overrides: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for p in [self.default_one_prob, *self.overrides.values()]:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"bias probability {p} outside [0, 1]")

    @property
    def is_uniform(self) -> bool:
        return self.default_one_prob == 0.5 and all(p == 0.5 for p in self.overrides.values())

    def p_one(self, v: int) -> float:
        return self.overrides.get(v, self.default_one_prob)

    def draw_one(self, v: int, rng: RandomSource) -> int:
        p = self.overrides.get(v, self.default_one_prob)
        if p == 0.5:
            return rng.bit()
        return 1 if rng.random() < p else 0

    def draw(self, variables: Iterable[int], rng: RandomSource) -> dict[int, int]:
        return {v: self.draw_one(v, rng) for v in variables}

    def vector(self, n: int) -> np.ndarray:
        out = np.full(n, self.default_one_prob)
        for v, p in self.overrides.items():
            out[v] = p
        return out


UNIFORM = Bias()


@dataclass
class SamplerReport:
    steps: int = 0
    seed: int | None = None
    fallback_toolarge_count: int = 0
    fallback_rejection_count: int = 0
    subroutine_calls: int = 0
    mark_failed: bool = False
    num_marked: int = 0
    mark_attempts: int = 0

    def record(self, reason: str | None):
        self.subroutine_calls += 1
        if reason == TOO_LARGE:
            self.fallback_toolarge_count += 1
        elif reason == REJECTED:
            self.fallback_rejection_count += 1

    def merge(self, other: SamplerReport):
        self.fallback_toolarge_count += other.fallback_toolarge_count
        self.fallback_rejection_count += other.fallback_rejection_count
        self.subroutine_calls += other.subroutine_calls
        self.mark_failed = self.mark_failed or other.mark_failed

    def to_json(self) -> dict:
        return asdict(self)


# -- rejection sampling and the Sample subroutine ------------------------------


def rejection_sampling(sf: SimplifiedFormula, component: Component, R: int, bias: Bias,
                       rng: RandomSource) -> dict[int, int] | None:
    """Up to ``R`` independent bias draws of the component's variables; the
    first draw satisfying every residual clause of the component is returned,
    ``None`` if all fail."""
    if R < 1:
        raise ValueError("R must be at least 1")
    variables = sorted(component.vars)
    clauses = [sf.residual(cid) for cid in sorted(component.clause_ids)]
    for _ in range(R):
        y = {v: bias.draw_one(v, rng) for v in variables}
        if all(any(y[v] == p for v, p in lits) for lits in clauses):
            return y
    return None


def sample_subroutine(formula: CnfFormula, delta: float, x: PartialAssignment, s: Iterable[int],
                      bias: Bias, params: RegimeParams, rng: RandomSource,
                      literal_uniform_fallback: bool = False,
                      edge_cap: int | None = None) -> tuple[dict[int, int], str | None]:
    """Draw an assignment of ``s`` given the partial assignment ``x``.

    Returns ``(values, reason)`` where ``reason`` is ``None`` on the good path,
    ``"too_large"`` when some component touching ``s`` has more than
    ``ceil(d k log2(n/delta))`` clauses, and ``"rejection"`` when rejection
    sampling of some component came back empty.  Fallback draws follow
    ``bias`` unless ``literal_uniform_fallback`` is set.
    """
    s = sorted(s)
    if edge_cap is None:
        edge_cap = edge_cap_of(formula.num_vars, max(formula.max_degree, 1), formula.width_max, delta)
    sf = simplify(formula, x)
    fallback_bias = UNIFORM if literal_uniform_fallback else bias
    try:
        comps = components_touching(sf, s, edge_cap)
    except ComponentTooLarge:
        return fallback_bias.draw(s, rng), TOO_LARGE
    merged: dict[int, int] = {}
    for comp in comps:
        y = rejection_sampling(sf, comp, params.R, bias, rng)
        if y is None:
            return fallback_bias.draw(s, rng), REJECTED
        merged.update(y)
    return {v: merged[v] for v in s}, None


# -- Glauber dynamics ----------------------------------------------------------


class MarkedMarginals:
    """Exact single-site conditionals of the marked-variable marginal.

    ``p_one(v, state)`` is the probability that ``v`` is 1 under the target
    law restricted to ``M``, given the other marked values in ``state`` (an
    integer whose bit ``i`` is the value of the ``i``-th marked variable).
    """

    def __init__(self, formula: CnfFormula, marked: Sequence[int], bias: Bias | None = None,
                 theta: float | None = None, enum: Enumeration | None = None):
        self.marked = list(marked)
        if enum is None:
            enum = Enumeration(formula, theta, None if bias is None or bias.is_uniform else bias)
        self.mass = enum.project(self.marked, enum.weights)
        self.fallback_p = [(bias or UNIFORM).p_one(v) for v in self.marked]

    def p_one(self, i: int, state: int) -> float:
        lo = self.mass[state & ~(1 << i)]
        hi = self.mass[state | (1 << i)]
        tot = lo + hi
        if tot <= 0:
            return self.fallback_p[i]
        return hi / tot

    def table(self) -> np.ndarray:
        """``p1[i, state]`` for every marked index and state (bit ``i`` ignored)."""
        m = len(self.marked)
        states = np.arange(1 << m)
        out = np.empty((m, 1 << m))
        for i in range(m):
            lo = self.mass[states & ~(1 << i)]
            hi = self.mass[states | (1 << i)]
            tot = lo + hi
            with np.errstate(invalid="ignore", divide="ignore"):
                out[i] = np.where(tot > 0, hi / np.where(tot > 0, tot, 1), self.fallback_p[i])
        return out


def glauber_run(formula: CnfFormula, marking: Marking, params: RegimeParams, bias: Bias,
                rng: RandomSource, marginal_mode: str = PAPER,
                marginals: MarkedMarginals | None = None,
                report: SamplerReport | None = None) -> tuple[list[int], SamplerReport]:
    """Run ``params.T`` steps of Glauber dynamics on the marked variables.

    Returns the full-length value list (marked variables set, others ``-1``)
    and the report.  In ``"oracle"`` mode each update uses the exact
    conditional marginal instead of the Sample subroutine.
    """
    report = report or SamplerReport()
    report.steps += params.T
    marked = marking.sorted_marked
    values = [UNASSIGNED] * formula.num_vars
    for v in marked:
        values[v] = bias.draw_one(v, rng)
    if not marked or params.T == 0:
        return values, report
    if marginal_mode == ORACLE:
        marginals = marginals or MarkedMarginals(formula, marked, bias)
        state = sum(values[v] << i for i, v in enumerate(marked))
        m = len(marked)
        for _ in range(params.T):
            i = rng.below(m)
            b = 1 if rng.random() < marginals.p_one(i, state) else 0
            state = (state & ~(1 << i)) | (b << i)
        for i, v in enumerate(marked):
            values[v] = (state >> i) & 1
        return values, report
    if marginal_mode != PAPER:
        raise ValueError(f"unknown marginal mode {marginal_mode!r}")
    x = PartialAssignment(values)
    m = len(marked)
    cap = edge_cap_of(formula.num_vars, max(formula.max_degree, 1), formula.width_max, params.delta)
    for _ in range(params.T):
        v = marked[rng.below(m)]
        values[v] = UNASSIGNED
        y, reason = sample_subroutine(formula, params.delta, x, (v,), bias, params, rng,
                                      edge_cap=cap)
        report.record(reason)
        values[v] = y[v]
    return values, report


def params_for(formula: CnfFormula, eps: float, xi: float = 0.0) -> RegimeParams:
    """Strict-mode parameters for a k-uniform formula."""
    if not formula.is_uniform:
        raise SamplerInputError(
            f"strict mode needs a k-uniform formula (widths {formula.width_min}..{formula.width_max})")
    return derive_params(formula.num_vars, formula.width_max, formula.max_degree, eps, xi, strict=True)


def complete(formula: CnfFormula, values: list[int], params: RegimeParams, bias: Bias,
             rng: RandomSource, report: SamplerReport) -> list[int]:
    """Fill every unassigned variable by one Sample call given the rest."""
    rest = [v for v in range(formula.num_vars) if values[v] == UNASSIGNED]
    if rest:
        y, reason = sample_subroutine(formula, params.delta, PartialAssignment(values), rest,
                                      bias, params, rng)
        report.record(reason)
        for v in rest:
            values[v] = y[v]
    return values


def full_sample(formula: CnfFormula, eps: float, seed: int, mode: str = "strict",
                params: RegimeParams | None = None, bias: Bias = UNIFORM,
                marginal_mode: str = PAPER, marking: Marking | None = None,
                rng: RandomSource | None = None) -> tuple[list[int], SamplerReport]:
    """Mark, run the chain, complete the unmarked variables.

    ``mode="strict"`` derives parameters and rejects out-of-regime input
    (raising :class:`marksat.regime.RegimeViolation`); ``mode="manual"``
    takes ``params`` as given.  If marking fails an arbitrary (bias) draw is
    returned with ``report.mark_failed`` set.  A precomputed ``marking`` is
    used as is.
    """
    if mode == "strict":
        params = params_for(formula, eps)
    elif params is None:
        raise SamplerInputError("manual mode needs explicit params")
    rng = rng or RandomSource(seed)
    report = SamplerReport(seed=seed)
    if marking is None:
        try:
            marking = mark_variables(formula, params, eps / 4, rng.child(0))
        except MarkFailure as exc:
            log.warning("%s; returning an arbitrary assignment", exc)
            report.mark_failed = True
            report.mark_attempts = exc.attempts
            fallback = bias.draw(range(formula.num_vars), rng.child(1))
            return [fallback[v] for v in range(formula.num_vars)], report
    report.num_marked = len(marking.marked)
    report.mark_attempts = marking.attempts
    values, report = glauber_run(formula, marking, params, bias, rng.child(1), marginal_mode,
                                 report=report)
    values = complete(formula, values, params, bias, rng.child(2), report)
    return values, report


def model_line(values: Sequence[int]) -> str:
    """DIMACS-style model line ``v 1 -2 ... 0``."""
    lits = [str(v + 1) if b else str(-(v + 1)) for v, b in enumerate(values)]
    return "v " + " ".join(lits + ["0"])
