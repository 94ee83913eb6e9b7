"""Choosing the marked variables with Moser-Tardos resampling.

Every variable is marked independently with probability ``(1 + alpha - beta)/2``.
A clause is bad when it has fewer than ``k_alpha`` marked or fewer than
``k_beta`` unmarked variables; the lowest-id bad clause has its marks redrawn
until no clause is bad or the step budget runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from .formula import CnfFormula
from .regime import RegimeParams
from .rng import RandomSource


@dataclass
class Marking:
    num_vars: int
    marked: frozenset[int]
    per_clause_marked: list[int]
    attempts: int = 1
    resamples: int = 0

    @classmethod
    def from_set(cls, formula: CnfFormula, marked: Iterable[int]) -> Marking:
        marked = frozenset(marked)
        counts = [sum(1 for v in c.variables if v in marked) for c in formula.clauses]
        return cls(formula.num_vars, marked, counts)

    @property
    def sorted_marked(self) -> list[int]:
        return sorted(self.marked)

    def is_marked(self, v: int) -> bool:
        return v in self.marked

    def to_json(self) -> list[int]:
        return self.sorted_marked


@dataclass
class MarkFailure(Exception):
    attempts: int
    resamples_per_attempt: list[int] = field(default_factory=list)

    def __str__(self) -> str:
        return f"marking failed after {self.attempts} attempts"


def check_condition(formula: CnfFormula, marking: Marking | Iterable[int],
                    k_alpha: int, k_beta: int) -> bool:
    marked = marking.marked if isinstance(marking, Marking) else frozenset(marking)
    for c in formula.clauses:
        m = sum(1 for v in c.variables if v in marked)
        if m < k_alpha or len(c) - m < k_beta:
            return False
    return True


def attempts_for(delta: float) -> int:
    return max(1, math.ceil(math.log2(1 / delta)))


def resample_budget(n: int, k: int) -> int:
    return math.ceil(4 * n / k)


def _attempt(formula: CnfFormula, p: float, k_alpha: int, k_beta: int, budget: int,
             markable: list[bool], rng: RandomSource) -> tuple[list[int] | None, int]:
    n = formula.num_vars
    marks = [rng.bernoulli(p) if markable[v] else 0 for v in range(n)]
    clauses = formula.clauses
    counts = [sum(marks[v] for v in c.variables) for c in clauses]

    def bad(cid: int) -> bool:
        return counts[cid] < k_alpha or len(clauses[cid]) - counts[cid] < k_beta

    # Bad clauses are kept in a set; the minimum is taken on demand.  Only the
    # clauses sharing a resampled variable can change status.
    bad_set = {cid for cid in range(len(clauses)) if bad(cid)}
    steps = 0
    while bad_set:
        if steps >= budget:
            return None, steps
        cid = min(bad_set)
        steps += 1
        touched = set()
        for v in clauses[cid].variables:
            if not markable[v]:
                continue
            new = rng.bernoulli(p)
            if new != marks[v]:
                delta = new - marks[v]
                marks[v] = new
                for c2 in formula.occurrences[v]:
                    counts[c2] += delta
                    touched.add(c2)
        touched.add(cid)
        for c2 in touched:
            if bad(c2):
                bad_set.add(c2)
            else:
                bad_set.discard(c2)
    return marks, steps


def mark_variables(formula: CnfFormula, params: RegimeParams, delta: float,
                   rng: RandomSource, unmarkable: Iterable[int] = ()) -> Marking:
    """Run up to ``ceil(log2(1/delta))`` independent attempts, each with a budget
    of ``ceil(4n/k)`` resampling steps; return the first valid marking.

    Variables listed in ``unmarkable`` are never marked (used for auxiliary
    variables).  Attempt ``i`` draws from ``rng.child(i)``.  Raises
    :class:`MarkFailure` when every attempt runs out of budget.
    """
    n = formula.num_vars
    markable = [True] * n
    for v in unmarkable:
        markable[v] = False
    budget = resample_budget(n, params.k)
    p = params.mark_prob
    used = []
    for i in range(attempts_for(delta)):
        marks, steps = _attempt(formula, p, params.k_alpha, params.k_beta, budget,
                                markable, rng.child(i))
        used.append(steps)
        if marks is not None:
            m = Marking.from_set(formula, (v for v in range(n) if marks[v]))
            m.attempts = i + 1
            m.resamples = steps
            return m
    raise MarkFailure(len(used), used)
