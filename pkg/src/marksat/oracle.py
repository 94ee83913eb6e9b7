"""Brute-force ground truth for small formulas.

Assignments over ``n`` variables are packed as integer codes with bit ``v``
holding the value of variable ``v``.  Distributions over a variable tuple
``(v_0, ..., v_{s-1})`` are dense arrays indexed by ``sum(bit_i << i)``.
Enumeration caps default to 30 variables for plain counts and 26 for weighted
or conditional queries; the environment variables ``MARKSAT_COUNT_CAP`` and
``MARKSAT_WEIGHTED_CAP`` override them.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .formula import UNASSIGNED, CnfFormula, PartialAssignment

CHUNK_BITS = 20
MAX_EMPIRICAL_ATOMS = 1 << 20


def count_cap() -> int:
    return int(os.environ.get("MARKSAT_COUNT_CAP", "30"))


def weighted_cap() -> int:
    return int(os.environ.get("MARKSAT_WEIGHTED_CAP", "26"))


class OracleCapExceeded(ValueError):
    pass


class ZeroMassCondition(ValueError):
    pass


class PreconditionError(ValueError):
    pass


def _require(n: int, cap: int):
    if n > cap:
        raise OracleCapExceeded(f"n={n} exceeds enumeration cap {cap}")


def clause_masks(formula: CnfFormula) -> tuple[np.ndarray, np.ndarray]:
    """Per clause, the bitmask of positive and of negative literal variables."""
    pos = np.zeros(formula.num_clauses, dtype=np.int64)
    neg = np.zeros(formula.num_clauses, dtype=np.int64)
    for i, c in enumerate(formula.clauses):
        for v, p in zip(c.variables, c.polarities):
            if p:
                pos[i] |= 1 << v
            else:
                neg[i] |= 1 << v
    return pos, neg


def unsat_counts(formula: CnfFormula, codes: np.ndarray) -> np.ndarray:
    """``|F(x)|`` for every packed assignment in ``codes``."""
    out = np.zeros(codes.shape, dtype=np.int64)
    pos, neg = clause_masks(formula)
    for p, q in zip(pos.tolist(), neg.tolist()):
        out += ((codes & p) == 0) & ((codes & q) == q)
    return out


def _chunks(n: int):
    total = 1 << n
    step = 1 << CHUNK_BITS
    for start in range(0, total, step):
        yield np.arange(start, min(total, start + step), dtype=np.int64)


def exact_count(formula: CnfFormula) -> int:
    """Number of satisfying assignments, by enumeration."""
    _require(formula.num_vars, count_cap())
    return int(sum(int(np.count_nonzero(unsat_counts(formula, codes) == 0))
                   for codes in _chunks(formula.num_vars)))


def gray_code_count(formula: CnfFormula) -> int:
    """Independent pure-Python counter walking assignments in Gray-code order.

    Keeps the number of true literals per clause and updates only the clauses
    of the flipped variable.
    """
    n = formula.num_vars
    _require(n, count_cap())
    values = [0] * n
    true_lits = [sum(1 for p in c.polarities if p == 0) for c in formula.clauses]
    unsat = sum(1 for t in true_lits if t == 0)
    total = 1 if unsat == 0 else 0
    for i in range(1, 1 << n):
        v = (i & -i).bit_length() - 1
        values[v] ^= 1
        for cid in formula.occurrences[v]:
            c = formula.clauses[cid]
            p = c.polarities[c.variables.index(v)]
            before = true_lits[cid]
            true_lits[cid] += 1 if values[v] == p else -1
            if before == 0:
                unsat -= 1
            elif true_lits[cid] == 0:
                unsat += 1
        if unsat == 0:
            total += 1
    return total


def unsat_histogram(formula: CnfFormula) -> np.ndarray:
    """``N[j]`` = number of assignments violating exactly ``j`` clauses."""
    _require(formula.num_vars, count_cap())
    hist = np.zeros(formula.num_clauses + 1, dtype=np.int64)
    for codes in _chunks(formula.num_vars):
        hist += np.bincount(unsat_counts(formula, codes), minlength=formula.num_clauses + 1)
    return hist


def exact_partition(formula: CnfFormula, theta: float) -> float:
    """``Z(theta) = sum_x exp(-theta |F(x)|)`` with compensated summation."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    _require(formula.num_vars, weighted_cap())
    hist = unsat_histogram(formula)
    return math.fsum(int(c) * math.exp(-theta * j) for j, c in enumerate(hist) if c)


# -- distributions ------------------------------------------------------------


@dataclass(frozen=True)
class ExactDistribution:
    variables: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self):
        if self.probs.shape != (1 << len(self.variables),):
            raise ValueError("probs must have one entry per assignment of variables")

    @property
    def support(self) -> list[tuple[int, ...]]:
        """Every assignment of ``variables`` (in code order), parallel to ``probs``."""
        s = len(self.variables)
        return [tuple((code >> i) & 1 for i in range(s)) for code in range(1 << s)]

    def prob(self, assignment: Mapping[int, int] | Sequence[int]) -> float:
        return float(self.probs[self.code_of(assignment)])

    def code_of(self, assignment: Mapping[int, int] | Sequence[int]) -> int:
        if isinstance(assignment, Mapping):
            bits = [assignment[v] for v in self.variables]
        else:
            bits = list(assignment)
        return sum(b << i for i, b in enumerate(bits))

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return dict(zip(self.support, self.probs.tolist()))

    def marginal(self, v: int) -> float:
        """Probability that variable ``v`` is 1."""
        i = self.variables.index(v)
        codes = np.arange(self.probs.size)
        return float(self.probs[((codes >> i) & 1) == 1].sum())


def bias_vector(n: int, bias) -> np.ndarray | None:
    if bias is None:
        return None
    if hasattr(bias, "p_one"):
        return np.array([bias.p_one(v) for v in range(n)], dtype=float)
    vec = np.asarray(bias, dtype=float)
    if vec.shape != (n,):
        raise ValueError("bias vector length must equal the number of variables")
    return vec


class Enumeration:
    """All ``2^n`` assignments of a formula with their (unnormalised) weights.

    Weight of ``x``: ``exp(-theta |F(x)|)`` when ``theta`` is given, otherwise
    the indicator that ``x`` satisfies the formula; multiplied by the product
    measure ``prod_v p_v^{x_v} (1-p_v)^{1-x_v}`` when ``bias`` is given.
    """

    def __init__(self, formula: CnfFormula, theta: float | None = None, bias=None):
        n = formula.num_vars
        _require(n, weighted_cap())
        self.formula = formula
        self.n = n
        self.theta = theta
        self.codes = np.arange(1 << n, dtype=np.int64)
        f = unsat_counts(formula, self.codes)
        self.unsat = f
        w = np.exp(-theta * f) if theta is not None else (f == 0).astype(float)
        probs = bias_vector(n, bias)
        if probs is not None:
            for v in range(n):
                b = self.bit(v)
                w = w * np.where(b == 1, probs[v], 1.0 - probs[v])
        self.weights = w

    def bit(self, v: int) -> np.ndarray:
        return (self.codes >> v) & 1

    @cached_property
    def total(self) -> float:
        return math.fsum(self.weights.tolist())

    def consistent(self, assigned: Mapping[int, int]) -> np.ndarray:
        mask = np.ones(self.codes.shape, dtype=bool)
        for v, b in assigned.items():
            mask &= self.bit(v) == b
        return mask

    def project(self, variables: Sequence[int], weights: np.ndarray) -> np.ndarray:
        idx = np.zeros(self.codes.shape, dtype=np.int64)
        for i, v in enumerate(variables):
            idx |= self.bit(v) << i
        return np.bincount(idx, weights=weights, minlength=1 << len(variables))

    def conditional(self, assigned: Mapping[int, int], s: Iterable[int]) -> ExactDistribution:
        variables = tuple(sorted(s))
        overlap = set(variables) & set(assigned)
        if overlap:
            raise ValueError(f"query variables {sorted(overlap)} are also conditioned on")
        w = np.where(self.consistent(assigned), self.weights, 0.0)
        mass = self.project(variables, w)
        z = mass.sum()
        if not z > 0:
            raise ZeroMassCondition(f"conditioning event {dict(assigned)} has zero mass")
        return ExactDistribution(variables, mass / z)


def _assigned_of(x) -> dict[int, int]:
    if x is None:
        return {}
    if isinstance(x, PartialAssignment):
        return x.assigned
    if isinstance(x, Mapping):
        return dict(x)
    return {v: b for v, b in enumerate(x) if b != UNASSIGNED}


def exact_conditional(formula: CnfFormula, x, s: Iterable[int], theta: float | None = None,
                      bias=None) -> ExactDistribution:
    """Exact law of the variables ``s`` given the partial assignment ``x``.

    Uniform over satisfying assignments by default; Gibbs-weighted when
    ``theta`` is given; reweighted by a product ``bias`` when supplied.
    """
    return Enumeration(formula, theta, bias).conditional(_assigned_of(x), s)


def exact_distribution(formula: CnfFormula, theta: float | None = None, bias=None) -> ExactDistribution:
    return exact_conditional(formula, None, range(formula.num_vars), theta, bias)


def tv_distance(p: ExactDistribution, q: ExactDistribution) -> float:
    if p.variables != q.variables:
        raise ValueError(f"mismatched supports {p.variables} vs {q.variables}")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def pack_codes(samples, num_vars: int | None = None) -> np.ndarray:
    """Pack assignments (rows of bits) into integer codes, bit ``i`` = column ``i``."""
    arr = np.asarray(samples)
    if arr.ndim == 1:
        return arr.astype(np.int64)
    weights = np.left_shift(np.int64(1), np.arange(arr.shape[1], dtype=np.int64))
    return (arr.astype(np.int64) * weights).sum(axis=1)


def empirical_tv(samples, p: ExactDistribution) -> float:
    """TV between the histogram of ``samples`` and ``p``.

    ``samples`` is either a 2-D array of bits whose columns follow
    ``p.variables`` or a 1-D array of packed codes.
    """
    size = p.probs.size
    if size > MAX_EMPIRICAL_ATOMS:
        raise ValueError(f"support of {size} atoms is too large for a plug-in estimate")
    codes = pack_codes(samples)
    if codes.size == 0:
        raise ValueError("no samples")
    if codes.min() < 0 or codes.max() >= size:
        raise ValueError("sample outside the support universe")
    hist = np.bincount(codes, minlength=size) / codes.size
    return 0.5 * float(np.abs(hist - p.probs).sum())


def local_uniformity_bound(s_param: float) -> float:
    return 0.5 * math.exp(1.0 / s_param)


def local_uniformity_check(formula: CnfFormula, s_param: float) -> bool:
    """Every variable's marginal under the uniform law on solutions lies
    within ``[1 - e^{1/s}/2, e^{1/s}/2]``.

    Raises :class:`PreconditionError` when ``2^{k_min} >= 2e d s`` or
    ``s >= k_max`` fails, or when ``n > 20``.
    """
    if formula.num_vars > 20:
        raise PreconditionError("local uniformity check is limited to n <= 20")
    d = max(formula.max_degree, 1)
    if formula.num_clauses:
        if 2 ** formula.width_min < 2 * math.e * d * s_param:
            raise PreconditionError(
                f"2^{formula.width_min} < 2e*{d}*{s_param}: local lemma condition unmet")
        if s_param < formula.width_max:
            raise PreconditionError(f"s={s_param} is below the maximum width {formula.width_max}")
    enum = Enumeration(formula)
    if not enum.total > 0:
        raise PreconditionError("formula is unsatisfiable")
    bound = local_uniformity_bound(s_param)
    for v in range(formula.num_vars):
        p1 = float(enum.weights[enum.bit(v) == 1].sum()) / enum.total
        if max(p1, 1 - p1) > bound + 1e-12:
            return False
    return True
