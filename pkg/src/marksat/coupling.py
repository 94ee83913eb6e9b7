"""Coupling lab: the two breadth-first couplings from the mixing analysis,
driven by exact conditional marginals on small formulas.

``run_coupling_C`` couples the uniform law on solutions pinned at ``v0 = 0``
and at ``v0 = 1``; ``run_coupling_Cv`` does the same for that law further
conditioned on the marked variables other than ``v0`` and ``v`` (fixed from a
base assignment), and extends both sides to full assignments.  Every variable
``u`` gets one shared uniform ``r_u`` drawn from substream ``u`` of the run's
source, so a C run and a C_v run with the same source see identical ``r_u``.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .formula import CnfFormula
from .marking import Marking
from .oracle import Enumeration, ExactDistribution, ZeroMassCondition
from .rng import RandomSource


class CouplingError(ValueError):
    pass


@dataclass(frozen=True)
class CouplingParams:
    k_gamma: int
    s: float

    def __post_init__(self):
        if self.k_gamma < 1:
            raise CouplingError("k_gamma must be at least 1")
        if not self.s > 2:
            raise CouplingError("s must exceed 2 so that 0 < p_low < p_up < 1")

    @property
    def p_low(self) -> float:
        return 0.5 - 1.0 / self.s

    @property
    def p_up(self) -> float:
        return 0.5 + 1.0 / self.s

    @classmethod
    def from_regime(cls, d: int, k: int, k_beta: int, s: float | None = None,
                    k_gamma: int | None = None) -> CouplingParams:
        """Defaults ``s = 36 d^4 k^5`` and ``k_gamma = ceil(4 k_beta / 9)``."""
        if s is None:
            s = 36.0 * d ** 4 * k ** 5
        if k_gamma is None:
            k_gamma = math.ceil(4 * k_beta / 9)
        if k_gamma >= k_beta:
            raise CouplingError(f"k_gamma={k_gamma} must be below k_beta={k_beta}")
        return cls(k_gamma=k_gamma, s=s)

    def in_regime(self, d: int, k: int, k_beta: int) -> bool:
        """Whether the analysis premises hold: ``2^(k_beta - k_gamma) >= 2e d s``
        and ``2^k_gamma >= 36 d^4 k^4``."""
        return (2.0 ** (k_beta - self.k_gamma) >= 2 * math.e * d * self.s
                and 2.0 ** self.k_gamma >= 36 * d ** 4 * k ** 4)

    def to_json(self) -> dict:
        return {"k_gamma": self.k_gamma, "s": self.s, "p_low": self.p_low, "p_up": self.p_up}


class ExactMarginals:
    """Exact conditional queries on the uniform law over solutions, memoised."""

    def __init__(self, formula: CnfFormula, enum: Enumeration | None = None):
        self.formula = formula
        self.enum = enum or Enumeration(formula)
        self._bits = [self.enum.bit(v).astype(bool) for v in range(formula.num_vars)]
        self._masks: dict = {}
        self._p0: dict = {}

    def _mask(self, assigned: Mapping[int, int]) -> np.ndarray:
        key = frozenset(assigned.items())
        m = self._masks.get(key)
        if m is None:
            m = np.ones(self.enum.codes.shape, dtype=bool)
            for v, b in assigned.items():
                m &= self._bits[v] if b else ~self._bits[v]
            if len(self._masks) > 50000:
                self._masks.clear()
            self._masks[key] = m
        return m

    def prob_zero(self, assigned: Mapping[int, int], u: int) -> float:
        key = (frozenset(assigned.items()), u)
        p = self._p0.get(key)
        if p is None:
            w = self.enum.weights[self._mask(assigned)]
            bits = self._bits[u][self._mask(assigned)]
            tot = w.sum()
            if not tot > 0:
                raise ZeroMassCondition(f"zero mass given {dict(assigned)}")
            p = float(w[~bits].sum() / tot)
            self._p0[key] = p
        return p

    def joint(self, assigned: Mapping[int, int], variables) -> ExactDistribution:
        return self.enum.conditional(dict(assigned), variables)


@dataclass
class CouplingTrace:
    v0: int
    V1: set[int]
    Vset: list[int]
    S: set[int]
    x: dict[int, int]
    y: dict[int, int]
    r_values: dict[int, float]
    remaining_edges: list[int]
    premise_held: bool = True
    in_regime: bool = False
    terminated: bool = True
    v: int | None = None
    p_values: dict[int, tuple[float, float]] = field(default_factory=dict)

    def v2_of(self, n: int) -> set[int]:
        return set(range(n)) - self.V1

    def to_json(self) -> dict:
        out = asdict(self)
        out["V1"] = sorted(self.V1)
        out["S"] = sorted(self.S)
        out["x"] = {str(k): v for k, v in sorted(self.x.items())}
        out["y"] = {str(k): v for k, v in sorted(self.y.items())}
        out["r_values"] = {str(k): v for k, v in sorted(self.r_values.items())}
        out["p_values"] = {str(k): list(v) for k, v in sorted(self.p_values.items())}
        return out


def shared_uniform(rng: RandomSource, u: int) -> float:
    """``r_u`` in ``(0, 1]``: the shared uniform of variable ``u``."""
    return 1.0 - rng.child(u).random()


def _bfs(formula: CnfFormula, marked: frozenset[int], v0: int, params: CouplingParams,
         rng: RandomSource, p_zero) -> CouplingTrace:
    """Common while-loop of both couplings.

    ``p_zero(assigned, u)`` returns the conditional probability that ``u`` is
    0.  ``premise_held`` records whether every unmarked ``u`` saw both
    probabilities inside ``[p_low, p_up]``.
    """
    edges = [frozenset(c.variables) for c in formula.clauses]
    clauses = formula.clauses
    alive = [True] * len(edges)
    x = {v0: 0}
    y = {v0: 1}
    V1 = {v0}
    vset = [v0]
    in_set = {v0}
    S: set[int] = set()
    r_values: dict[int, float] = {}
    p_values: dict[int, tuple[float, float]] = {}
    premise = True
    while True:
        pick = None
        for eid, e in enumerate(edges):
            if alive[eid] and (e & V1):
                cand = [w for w in e if w not in V1 and w not in in_set]
                if cand:
                    pick = min(cand)
                    break
        if pick is None:
            break
        u = pick
        r = shared_uniform(rng, u)
        r_values[u] = r
        px = p_zero(x, u)
        py = p_zero(y, u)
        p_values[u] = (px, py)
        if u not in marked and not (params.p_low <= px <= params.p_up
                                    and params.p_low <= py <= params.p_up):
            premise = False
        x[u] = 0 if r <= px else 1
        y[u] = 0 if r <= py else 1
        vset.append(u)
        in_set.add(u)
        if params.p_low < r <= params.p_up:
            V1.add(u)
        if u not in marked and (r <= params.p_low or r > params.p_up):
            S.add(u)
        for eid, c in enumerate(clauses):
            if alive[eid] and _sat_on(c, x, S) and _sat_on(c, y, S):
                alive[eid] = False
        unmarked_set = in_set - marked
        for eid, e in enumerate(edges):
            if alive[eid] and len(e & unmarked_set) == params.k_gamma:
                V1 |= e - in_set
    return CouplingTrace(v0=v0, V1=V1, Vset=vset, S=S, x=x, y=y, r_values=r_values,
                         remaining_edges=[i for i, a in enumerate(alive) if a],
                         premise_held=premise, p_values=p_values)


def _sat_on(clause, values: dict[int, int], support: set[int]) -> bool:
    for v, p in zip(clause.variables, clause.polarities):
        if v in support and values[v] == p:
            return True
    return False


def _check_inputs(formula: CnfFormula, marking: Marking, v0: int):
    if formula.num_vars > 20:
        raise CouplingError("coupling lab is limited to n <= 20")
    if v0 not in marking.marked:
        raise CouplingError(f"v0={v0} is not marked")


def run_coupling_C(formula: CnfFormula, marking: Marking, v0: int, params: CouplingParams,
                   rng: RandomSource, backend: ExactMarginals | None = None,
                   k_beta: int | None = None) -> CouplingTrace:
    """Coupling of the solution law pinned at ``v0 = 0`` and ``v0 = 1`` with
    every other variable free.  Returns partial assignments on ``Vset``."""
    _check_inputs(formula, marking, v0)
    backend = backend or ExactMarginals(formula)
    trace = _bfs(formula, marking.marked, v0, params, rng, backend.prob_zero)
    trace.in_regime = _label(formula, params, k_beta)
    return trace


def _label(formula: CnfFormula, params: CouplingParams, k_beta: int | None) -> bool:
    if k_beta is None or formula.num_clauses == 0:
        return False
    return params.in_regime(max(formula.max_degree, 1), formula.width_max, k_beta)


def base_assignment(formula: CnfFormula, marking: Marking, v0: int, v: int,
                    rng: RandomSource, backend: ExactMarginals, tries: int = 1000) -> dict[int, int]:
    """Values on ``M - {v0, v}`` drawn from the solution law, redrawn until both
    ``v0 = 0`` and ``v0 = 1`` remain feasible."""
    lam = sorted(marking.marked - {v0, v})
    dist = backend.joint({}, lam) if lam else None
    for t in range(tries):
        if dist is None:
            base = {}
        else:
            cdf = np.cumsum(dist.probs)
            code = int(np.searchsorted(cdf, rng.child(t).random() * cdf[-1], side="right"))
            code = min(code, cdf.size - 1)
            base = {w: (code >> i) & 1 for i, w in enumerate(lam)}
        try:
            backend.prob_zero({**base, v0: 0}, v)
            backend.prob_zero({**base, v0: 1}, v)
            return base
        except ZeroMassCondition:
            continue
    raise CouplingError("no base assignment keeps both values of v0 feasible")


def _maximal_coupling(p: ExactDistribution, q: ExactDistribution, u: float) -> tuple[int, int]:
    """Maximal coupling of ``p`` and ``q`` driven by one uniform ``u``.

    With probability ``sum min(p, q)`` both take the same atom (chosen from
    the overlap in code order); otherwise each takes an atom from its own
    residual mass, inverted at the same rescaled uniform."""
    over = np.minimum(p.probs, q.probs)
    a = float(over.sum())
    if u < a:
        i = _invert(over, u)
        return i, i
    w = (u - a) / (1.0 - a) if a < 1.0 else 0.0
    return _invert(p.probs - over, w * (1 - a)), _invert(q.probs - over, w * (1 - a))


def _invert(weights: np.ndarray, target: float) -> int:
    cdf = np.cumsum(weights)
    i = int(np.searchsorted(cdf, target, side="right"))
    return min(i, int(np.flatnonzero(weights > 0).max()) if (weights > 0).any() else 0)


def run_coupling_Cv(formula: CnfFormula, marking: Marking, v0: int, v: int,
                    params: CouplingParams, rng: RandomSource,
                    backend: ExactMarginals | None = None, base: dict[int, int] | None = None,
                    k_beta: int | None = None) -> tuple[CouplingTrace, list[int], list[int]]:
    """Coupling of the law conditioned on ``M - {v0, v}`` (from ``base``),
    pinned at ``v0 = 0`` and at ``v0 = 1``, extended to full assignments.

    The final extensions use maximal couplings, first on ``V2 - Vset`` and
    then on ``V1 - Vset``.  ``base`` defaults to a draw from the solution law
    on substream ``n + 2`` of ``rng``.
    """
    _check_inputs(formula, marking, v0)
    if v not in marking.marked or v == v0:
        raise CouplingError("v must be a marked variable other than v0")
    n = formula.num_vars
    backend = backend or ExactMarginals(formula)
    if base is None:
        base = base_assignment(formula, marking, v0, v, rng.child(n + 2), backend)
    lam = set(base)

    def p_zero(assigned, u):
        if u in lam:
            return 1.0 if base[u] == 0 else 0.0
        return backend.prob_zero({**base, **{w: b for w, b in assigned.items() if w not in lam}}, u)

    trace = _bfs(formula, marking.marked, v0, params, rng, p_zero)
    trace.v = v
    trace.in_regime = _label(formula, params, k_beta)
    x, y = dict(trace.x), dict(trace.y)
    in_set = set(trace.Vset)
    V2 = set(range(n)) - trace.V1
    for step, block in enumerate((sorted(V2 - in_set), sorted(trace.V1 - in_set))):
        fixed = [w for w in block if w in lam]
        for w in fixed:
            x[w] = y[w] = base[w]
        free = [w for w in block if w not in lam]
        if not free:
            continue
        cond_x = {**base, **{w: b for w, b in x.items() if w not in free}}
        cond_y = {**base, **{w: b for w, b in y.items() if w not in free}}
        px = backend.joint(cond_x, free)
        py = backend.joint(cond_y, free)
        i, j = _maximal_coupling(px, py, rng.child(n + step).random())
        for t, w in enumerate(px.variables):
            x[w] = (i >> t) & 1
            y[w] = (j >> t) & 1
    return trace, [x[w] for w in range(n)], [y[w] for w in range(n)]


def estimate_mean_V1(formula: CnfFormula, marking: Marking, v0: int, params: CouplingParams,
                     trials: int, seed: int,
                     backend: ExactMarginals | None = None) -> tuple[float, float]:
    """Monte-Carlo mean of ``|V1|`` over independent C runs, with its standard error."""
    backend = backend or ExactMarginals(formula)
    root = RandomSource(seed)
    sizes = [len(run_coupling_C(formula, marking, v0, params, root.child(t), backend).V1)
             for t in range(trials)]
    mean = statistics.fmean(sizes)
    se = statistics.stdev(sizes) / math.sqrt(trials) if trials > 1 else 0.0
    return mean, se
