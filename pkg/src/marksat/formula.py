"""CNF data model, DIMACS I/O, random (k, d)-formulas, simplification under a
partial assignment, and component discovery in the residual hypergraph.

Variables are 0-based internally and 1-based in DIMACS.  A literal is a pair
``(variable, polarity)`` with polarity 1 for ``x`` and 0 for ``not x``; it is
true under value ``b`` iff ``b == polarity``.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .rng import RandomSource

log = logging.getLogger(__name__)

UNASSIGNED = -1


class DimacsError(ValueError):
    pass


class FormulaError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Clause:
    variables: tuple[int, ...]
    polarities: tuple[int, ...]

    def __post_init__(self):
        if len(self.variables) != len(self.polarities):
            raise FormulaError("variables and polarities differ in length")
        if len(set(self.variables)) != len(self.variables):
            raise FormulaError(f"duplicate variable in clause {self.to_dimacs()}")

    @classmethod
    def from_literals(cls, literals: Iterable[tuple[int, int]]) -> Clause:
        lits = list(literals)
        return cls(tuple(v for v, _ in lits), tuple(1 if p else 0 for _, p in lits))

    @classmethod
    def from_dimacs(cls, ints: Iterable[int]) -> Clause:
        ints = list(ints)
        return cls(tuple(abs(i) - 1 for i in ints), tuple(1 if i > 0 else 0 for i in ints))

    @property
    def literals(self) -> list[tuple[int, int]]:
        return list(zip(self.variables, self.polarities))

    def __len__(self) -> int:
        return len(self.variables)

    def satisfied_by(self, values: Sequence[int]) -> bool:
        """True iff some literal is true under ``values`` (``-1`` = unassigned)."""
        for v, p in zip(self.variables, self.polarities):
            if values[v] == p:
                return True
        return False

    def to_dimacs(self) -> list[int]:
        return [v + 1 if p else -(v + 1) for v, p in zip(self.variables, self.polarities)]


class CnfFormula:
    """Immutable CNF formula with cached width and degree statistics."""

    __slots__ = ("num_vars", "clauses", "width_min", "width_max", "max_degree", "occurrences")

    def __init__(self, num_vars: int, clauses: Iterable[Clause]):
        if num_vars < 0:
            raise FormulaError("num_vars must be non-negative")
        clauses = tuple(clauses)
        occ: list[list[int]] = [[] for _ in range(num_vars)]
        for cid, c in enumerate(clauses):
            for v in c.variables:
                if not 0 <= v < num_vars:
                    raise FormulaError(f"variable {v + 1} out of range 1..{num_vars}")
                occ[v].append(cid)
        self.num_vars = num_vars
        self.clauses = clauses
        widths = [len(c) for c in clauses]
        self.width_min = min(widths) if widths else 0
        self.width_max = max(widths) if widths else 0
        self.occurrences: tuple[tuple[int, ...], ...] = tuple(tuple(o) for o in occ)
        self.max_degree = max((len(o) for o in occ), default=0)

    @classmethod
    def from_dimacs_clauses(cls, num_vars: int, clauses: Iterable[Iterable[int]]) -> CnfFormula:
        return cls(num_vars, (Clause.from_dimacs(c) for c in clauses))

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    @property
    def is_uniform(self) -> bool:
        return self.width_min == self.width_max

    def __eq__(self, other) -> bool:
        if not isinstance(other, CnfFormula):
            return NotImplemented
        return self.num_vars == other.num_vars and self.clauses == other.clauses

    def __hash__(self) -> int:
        return hash((self.num_vars, self.clauses))

    def __repr__(self) -> str:
        return (f"CnfFormula(n={self.num_vars}, m={self.num_clauses}, "
                f"k={self.width_min}..{self.width_max}, d={self.max_degree})")

    def satisfied_by(self, values: Sequence[int]) -> bool:
        return all(c.satisfied_by(values) for c in self.clauses)

    def unsat_clauses(self, values: Sequence[int]) -> list[int]:
        return [cid for cid, c in enumerate(self.clauses) if not c.satisfied_by(values)]

    def with_clause(self, clause: Clause) -> CnfFormula:
        return CnfFormula(self.num_vars, self.clauses + (clause,))


# -- DIMACS -------------------------------------------------------------------


def parse_dimacs(text: str | bytes) -> CnfFormula:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    header = None
    clauses: list[list[int]] = []
    current: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None:
                raise DimacsError(f"line {lineno}: second header")
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: malformed header {line!r}")
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"line {lineno}: malformed header {line!r}") from None
            if header[0] < 0 or header[1] < 0:
                raise DimacsError(f"line {lineno}: negative counts in header")
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause before header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"line {lineno}: bad token {tok!r}") from None
            if lit == 0:
                clauses.append(current)
                current = []
                continue
            if abs(lit) > header[0]:
                raise DimacsError(f"line {lineno}: variable {abs(lit)} exceeds n={header[0]}")
            if any(abs(x) == abs(lit) for x in current):
                raise DimacsError(f"line {lineno}: duplicate variable {abs(lit)} in clause")
            current.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        clauses.append(current)
    n, m = header
    if m != len(clauses):
        log.warning("header declares %d clauses, found %d", m, len(clauses))
    return CnfFormula.from_dimacs_clauses(n, clauses)


def emit_dimacs(formula: CnfFormula, comments: Sequence[str] = ()) -> str:
    out = io.StringIO()
    for c in comments:
        out.write(f"c {c}\n")
    out.write(f"p cnf {formula.num_vars} {formula.num_clauses}\n")
    for clause in formula.clauses:
        out.write(" ".join(map(str, clause.to_dimacs() + [0])))
        out.write("\n")
    return out.getvalue()


# -- random formulas ----------------------------------------------------------


def generate_random(n: int, m: int, k: int, d_cap: int, rng: RandomSource,
                    max_retries: int = 100) -> CnfFormula:
    """Random formula with ``m`` clauses of ``k`` distinct variables, no variable
    in more than ``d_cap`` clauses, polarities uniform.

    Each clause draws ``k`` distinct variables uniformly among those with spare
    degree; a clause that cannot be placed is retried with a fresh draw of the
    whole formula, up to ``max_retries`` times.
    """
    if m and k > n:
        raise FormulaError(f"width k={k} exceeds n={n}")
    if m * k > n * d_cap:
        raise FormulaError(f"infeasible: m*k={m * k} exceeds n*d_cap={n * d_cap}")
    for attempt in range(max_retries):
        sub = rng.child(attempt)
        degree = [0] * n
        clauses = []
        for _ in range(m):
            free = [v for v in range(n) if degree[v] < d_cap]
            if len(free) < k:
                break
            chosen: list[int] = []
            pool = free[:]
            for _ in range(k):
                j = sub.below(len(pool))
                chosen.append(pool[j])
                pool[j] = pool[-1]
                pool.pop()
            for v in chosen:
                degree[v] += 1
            clauses.append(Clause(tuple(chosen), tuple(sub.bit() for _ in chosen)))
        else:
            return CnfFormula(n, clauses)
    raise FormulaError(f"could not place {m} clauses of width {k} with d_cap={d_cap}")


# -- partial assignments and simplification -----------------------------------


class PartialAssignment:
    """Values on a subset of variables, stored densely (``-1`` = unassigned).

    The value list may be shared with a caller that mutates it between uses
    (the Glauber loop does this to avoid copying); a PartialAssignment is only
    meaningful for the duration of the call it is passed to.
    """

    __slots__ = ("values",)

    def __init__(self, values: list[int]):
        self.values = values

    @classmethod
    def empty(cls, n: int) -> PartialAssignment:
        return cls([UNASSIGNED] * n)

    @classmethod
    def from_mapping(cls, n: int, assigned: Mapping[int, int]) -> PartialAssignment:
        values = [UNASSIGNED] * n
        for v, b in assigned.items():
            if not 0 <= v < n:
                raise FormulaError(f"variable {v} out of range")
            if b not in (0, 1):
                raise FormulaError(f"value for {v} must be 0 or 1")
            values[v] = b
        return cls(values)

    @property
    def assigned(self) -> dict[int, int]:
        return {v: b for v, b in enumerate(self.values) if b != UNASSIGNED}

    @property
    def domain(self) -> frozenset[int]:
        return frozenset(v for v, b in enumerate(self.values) if b != UNASSIGNED)

    def __getitem__(self, v: int) -> int:
        return self.values[v]

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"PartialAssignment({self.assigned})"


class SimplifiedFormula:
    """The formula simplified under a partial assignment.

    Residual clauses are computed lazily and memoised, so a traversal that only
    touches a few clauses pays only for those.  ``residual(cid)`` is ``None``
    for a satisfied clause, otherwise the tuple of surviving literals (empty if
    every literal is assigned false).
    """

    __slots__ = ("base", "x", "_cache")

    def __init__(self, base: CnfFormula, x: PartialAssignment):
        self.base = base
        self.x = x
        self._cache: dict[int, tuple[tuple[int, int], ...] | None] = {}

    def residual(self, cid: int) -> tuple[tuple[int, int], ...] | None:
        try:
            return self._cache[cid]
        except KeyError:
            pass
        c = self.base.clauses[cid]
        values = self.x.values
        survivors = []
        for v, p in zip(c.variables, c.polarities):
            b = values[v]
            if b == UNASSIGNED:
                survivors.append((v, p))
            elif b == p:
                self._cache[cid] = None
                return None
        res = tuple(survivors)
        self._cache[cid] = res
        return res

    @property
    def residual_clauses(self) -> list[tuple[int, tuple[tuple[int, int], ...]]]:
        out = []
        for cid in range(self.base.num_clauses):
            res = self.residual(cid)
            if res is not None:
                out.append((cid, res))
        return out

    @property
    def free_vars(self) -> frozenset[int]:
        return frozenset(v for v, b in enumerate(self.x.values) if b == UNASSIGNED)

    def is_falsified(self) -> bool:
        return any(len(res) == 0 for _, res in self.residual_clauses)


def simplify(formula: CnfFormula, x: PartialAssignment) -> SimplifiedFormula:
    if len(x) != formula.num_vars:
        raise FormulaError("partial assignment length does not match formula")
    return SimplifiedFormula(formula, x)


@dataclass(frozen=True)
class Component:
    vars: frozenset[int]
    clause_ids: frozenset[int]


class ComponentTooLarge(Exception):
    """A component reachable from the query set has more clauses than allowed."""

    def __init__(self, start: int, clauses_seen: int, cap: int):
        super().__init__(f"component of variable {start} exceeds {cap} clauses")
        self.start = start
        self.clauses_seen = clauses_seen
        self.cap = cap


def components_touching(sf: SimplifiedFormula, s: Iterable[int],
                        edge_cap: float = float("inf")) -> list[Component]:
    """Connected components of the residual hypergraph that meet ``s``.

    Depth-first search from each variable of ``s`` (in increasing order) over
    the variable/clause incidence index; satisfied clauses are skipped.  Raises
    :class:`ComponentTooLarge` as soon as a component under exploration holds
    more than ``edge_cap`` clauses.  Falsified (empty) residual clauses have no
    free variable, so they never join a component that meets ``s``.
    """
    occurrences = sf.base.occurrences
    values = sf.x.values
    residual = sf.residual
    seen_vars: set[int] = set()
    seen_clauses: set[int] = set()
    out = []
    for start in sorted(s):
        if start in seen_vars:
            continue
        if values[start] != UNASSIGNED:
            raise FormulaError(f"variable {start} is assigned; not free")
        seen_vars.add(start)
        comp_vars = [start]
        comp_clauses = []
        stack = [start]
        while stack:
            u = stack.pop()
            for cid in occurrences[u]:
                if cid in seen_clauses:
                    continue
                res = residual(cid)
                if res is None:
                    continue
                seen_clauses.add(cid)
                comp_clauses.append(cid)
                if len(comp_clauses) > edge_cap:
                    raise ComponentTooLarge(start, len(comp_clauses), edge_cap)
                for w, _ in res:
                    if w not in seen_vars:
                        seen_vars.add(w)
                        comp_vars.append(w)
                        stack.append(w)
        out.append(Component(frozenset(comp_vars), frozenset(comp_clauses)))
    return out


def all_components(sf: SimplifiedFormula) -> list[Component]:
    """Every component of the residual hypergraph over the free variables."""
    return components_touching(sf, sf.free_vars)


def iter_assignments(n: int) -> Iterator[list[int]]:
    for code in range(1 << n):
        yield [(code >> i) & 1 for i in range(n)]
