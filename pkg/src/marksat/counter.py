"""Approximate counting by non-adaptive simulated annealing.

The Gibbs weight ``w_theta(x) = exp(-theta |F(x)|)`` interpolates between the
uniform measure (``theta = 0``, partition function ``2^n``) and the uniform
measure on solutions (``theta -> inf``).  Along ``theta_i = i/(dn)`` each ratio
``Z(theta_i)/Z(theta_{i-1})`` is the mean of ``exp(-|F(X)|/(dn))`` with
``X ~ mu_{theta_{i-1}}``; the estimate is ``2^n`` times the product of the
sample ratios, averaged over independent replicates.

Samples from ``mu_theta`` come from the marked-variable sampler run on the
augmented formula in which every clause ``c`` becomes ``u_c or c`` with an
auxiliary variable ``u_c`` that is 1 with probability ``exp(-theta)``.
"""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .formula import UNASSIGNED, Clause, CnfFormula
from .marking import MarkFailure, Marking, mark_variables
from .oracle import Enumeration, unsat_histogram
from .regime import RegimeParams, derive_params, manual_params
from .rng import RandomSource
from .sampler import ORACLE, PAPER, Bias, MarkedMarginals, SamplerReport, full_sample, glauber_run

log = logging.getLogger(__name__)

LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class AnnealingSchedule:
    n: int
    d: int
    eps: float
    ell: int
    m: int

    @property
    def theta(self) -> list[float]:
        return [self.theta_at(i) for i in range(self.ell + 1)]

    def theta_at(self, i: int) -> float:
        return 0.0 if i == 0 else i / (self.d * self.n)

    def to_json(self) -> dict:
        return {"ell": self.ell, "m": self.m, "n": self.n, "d": self.d}


def make_schedule(n: int, d: int, eps: float) -> AnnealingSchedule:
    """``ell = n d ceil(ln(4nd/eps))`` rungs (natural log) and
    ``m = ceil(144/eps^2)`` replicates."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    ell = n * d * math.ceil(math.log(4 * n * d / eps)) if n * d > 0 else 0
    return AnnealingSchedule(n=n, d=d, eps=eps, ell=ell, m=math.ceil(144 / eps ** 2))


def unsat_count(formula: CnfFormula, x) -> int:
    """``|F(x)|`` for a full assignment."""
    if any(b == UNASSIGNED for b in x):
        raise ValueError("assignment must be total")
    return sum(1 for c in formula.clauses if not c.satisfied_by(x))


@dataclass(frozen=True)
class GibbsFormula:
    base: CnfFormula
    augmented: CnfFormula
    u_of_clause: dict[int, int]
    theta: float

    @property
    def u_vars(self) -> list[int]:
        return [self.u_of_clause[c] for c in range(self.base.num_clauses)]

    @property
    def bias(self) -> Bias:
        p = math.exp(-self.theta)
        return Bias(0.5, {u: p for u in self.u_vars})

    def at(self, theta: float) -> GibbsFormula:
        return GibbsFormula(self.base, self.augmented, self.u_of_clause, theta)


def build_gibbs(formula: CnfFormula, theta: float) -> GibbsFormula:
    """Augmented formula over ``V + U``: clause ``c`` becomes ``u_c or c`` with
    ``u_c = n + c``; the original literals keep their order after ``u_c``."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    n = formula.num_vars
    clauses = []
    u_of = {}
    for cid, c in enumerate(formula.clauses):
        u = n + cid
        u_of[cid] = u
        clauses.append(Clause((u,) + c.variables, (1,) + c.polarities))
    return GibbsFormula(formula, CnfFormula(n + formula.num_clauses, clauses), u_of, theta)


def _log2_mean_exp2(values: list[float]) -> float:
    """``log2(mean(2^v))`` with a max shift."""
    mx = max(values)
    return mx + math.log2(math.fsum(2.0 ** (v - mx) for v in values)) - math.log2(len(values))


@dataclass
class CountEstimate:
    log2_Z_hat: float
    replicate_log2: list[float]
    schedule: AnnealingSchedule
    eps: float
    seed: int
    sampler: str
    fallback_stats: dict = field(default_factory=dict)
    params: RegimeParams | None = None

    @property
    def decimal_estimate(self) -> float | None:
        return 2.0 ** self.log2_Z_hat if self.log2_Z_hat < 63 else None

    def to_json(self) -> dict:
        out = {
            "log2_estimate": self.log2_Z_hat,
            "epsilon": self.eps,
            "schedule": self.schedule.to_json(),
            "params": self.params.to_json() if self.params else None,
            "fallback_stats": self.fallback_stats,
            "sampler": self.sampler,
            "seed": self.seed,
        }
        if self.decimal_estimate is not None:
            out["decimal_estimate"] = self.decimal_estimate
        return out


def gibbs_params(gf: GibbsFormula, delta: float, mode: str = "strict", xi: float = 0.0,
                 **overrides) -> RegimeParams:
    """Sampler parameters for the augmented formula (width ``k + 1``) with
    sampler accuracy ``delta``.  Strict mode checks the regime at width ``k+1``."""
    f = gf.augmented
    k = f.width_max
    if mode == "strict":
        return derive_params(f.num_vars, k, f.max_degree, delta, xi, strict=True)
    return manual_params(f.num_vars, k, f.max_degree, delta, xi=xi, **overrides)


def mark_gibbs(gf: GibbsFormula, params: RegimeParams, delta: float, rng: RandomSource) -> Marking:
    """Marking of the augmented formula; auxiliary variables are never marked."""
    return mark_variables(gf.augmented, params, delta / 4, rng, unmarkable=gf.u_vars)


def gibbs_sample(gf: GibbsFormula, delta: float, seed: int, mode: str = PAPER,
                 params: RegimeParams | None = None, marking: Marking | None = None,
                 rng: RandomSource | None = None) -> tuple[list[int], SamplerReport]:
    """Assignment of ``V + U`` approximately distributed as the biased product
    law conditioned on the augmented formula; its ``V`` part follows
    ``mu_theta``.

    ``mode="paper"`` runs the full sampler pipeline; ``mode="oracle"`` runs
    the idealised chain with exact marginals and completes exactly.
    """
    rng = rng or RandomSource(seed)
    f = gf.augmented
    if params is None:
        params = gibbs_params(gf, delta)
    if marking is None:
        try:
            marking = mark_gibbs(gf, params, delta, rng.child(0))
        except MarkFailure:
            report = SamplerReport(seed=seed, mark_failed=True)
            draw = gf.bias.draw(range(f.num_vars), rng.child(1))
            return [draw[v] for v in range(f.num_vars)], report
    if mode == PAPER:
        return full_sample(f, delta, seed, "manual", params, gf.bias, marking=marking, rng=rng)
    if mode != ORACLE:
        raise ValueError(f"unknown mode {mode!r}")
    enum = Enumeration(f, None, gf.bias)
    marginals = MarkedMarginals(f, marking.sorted_marked, gf.bias, enum=enum)
    values, report = glauber_run(f, marking, params, gf.bias, rng.child(1), ORACLE, marginals)
    rest = [v for v in range(f.num_vars) if values[v] == UNASSIGNED]
    dist = enum.conditional({v: values[v] for v in marking.marked}, rest)
    code = int(np.searchsorted(np.cumsum(dist.probs), rng.child(2).random() * dist.probs.sum(),
                               side="right"))
    code = min(code, dist.probs.size - 1)
    for i, v in enumerate(dist.variables):
        values[v] = (code >> i) & 1
    return values, report


def sample_unsat_counts(hist: np.ndarray, theta: float, size: int, rng: RandomSource) -> np.ndarray:
    """Exact draws of ``|F(X)|`` for ``X ~ mu_theta`` given the histogram of
    unsatisfied-clause counts."""
    j = np.arange(hist.size)
    w = hist * np.exp(-theta * j)
    cdf = np.cumsum(w)
    pick = np.searchsorted(cdf, rng.random_array(size) * cdf[-1], side="right")
    return np.minimum(pick, hist.size - 1)


def approx_count(formula: CnfFormula, eps: float, seed: int, mode: str = "strict",
                 sampler: str = PAPER, xi: float = 0.0, **overrides) -> CountEstimate:
    """Annealing estimate of the number of satisfying assignments.

    ``sampler`` selects how each ``X ~ mu_theta`` is drawn:

    * ``"paper"``: the full sampler on the augmented formula, one scalar run
      per draw; replicate ``j`` uses substream ``j``.
    * ``"batch"``: the same pipeline vectorised over the ``m`` replicates of
      each rung (:mod:`marksat.batch`).
    * ``"exact"``: perfect draws of ``|F(X)|`` from the oracle histogram.

    ``overrides`` (``k_alpha``, ``k_beta``, ``eta``, ``T``, ``R``, ``delta``)
    apply in manual mode.
    """
    n = formula.num_vars
    d = formula.max_degree
    sched = make_schedule(n, d, eps)
    root = RandomSource(seed)
    report = SamplerReport(seed=seed)
    replicate = [0.0] * sched.m
    params = None
    scale = LOG2E / (d * n) if d * n else 0.0
    if sched.ell == 0:
        return CountEstimate(float(n), [float(n)] * sched.m, sched, eps, seed, sampler,
                             _stats(report), None)
    if sampler == "exact":
        hist = unsat_histogram(formula)
        logs = np.zeros(sched.m)
        for i in range(1, sched.ell + 1):
            f = sample_unsat_counts(hist, sched.theta_at(i - 1), sched.m, root.child(i))
            logs -= f * scale
        replicate = (n + logs).tolist()
        return CountEstimate(_log2_mean_exp2(replicate), replicate, sched, eps, seed, sampler,
                             _stats(report), None)
    gf = build_gibbs(formula, 0.0)
    delta_a = 1.0 / (8 * sched.ell * sched.m)
    params = gibbs_params(gf, delta_a, mode, xi, **overrides)
    try:
        marking = mark_gibbs(gf, params, delta_a, root.child(0))
    except MarkFailure as exc:
        log.warning("%s; every draw falls back to the product measure", exc)
        marking = None
        report.mark_failed = True
    if sampler == PAPER:
        for j in range(sched.m):
            rj = root.child(1).child(j)
            acc = float(n)
            for i in range(1, sched.ell + 1):
                g = gf.at(sched.theta_at(i - 1))
                ri = rj.child(i)
                if marking is None:
                    draw = g.bias.draw(range(n), ri)
                    x = [draw[v] for v in range(n)]
                else:
                    x, rep = full_sample(g.augmented, delta_a, seed, "manual", params, g.bias,
                                         marking=marking, rng=ri)
                    report.merge(rep)
                acc -= unsat_count(formula, x[:n]) * scale
            replicate[j] = acc
    elif sampler == "batch":
        from .batch import full_sample_batch
        logs = np.full(sched.m, float(n))
        for i in range(1, sched.ell + 1):
            g = gf.at(sched.theta_at(i - 1))
            ri = root.child(2).child(i)
            if marking is None:
                u = ri.random_array(sched.m * n).reshape(sched.m, n)
                x = (u < 0.5).astype(np.int8)
            else:
                x, rep = full_sample_batch(g.augmented, delta_a, seed, sched.m, params, g.bias,
                                           marking=marking, rng=ri)
                report.merge(rep)
            logs -= _unsat_rows(formula, x[:, :n]) * scale
        replicate = logs.tolist()
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return CountEstimate(_log2_mean_exp2(replicate), replicate, sched, eps, seed, sampler,
                         _stats(report), params)


def approx_count_median(formula: CnfFormula, eps: float, seed: int, repeats: int,
                        **kwargs) -> tuple[float, list[CountEstimate]]:
    """Median of ``repeats`` independent estimates (seeds ``seed .. seed+repeats-1``)."""
    runs = [approx_count(formula, eps, seed + r, **kwargs) for r in range(repeats)]
    return statistics.median(e.log2_Z_hat for e in runs), runs


def _unsat_rows(formula: CnfFormula, x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[0], dtype=np.int64)
    for c in formula.clauses:
        sat = np.zeros(x.shape[0], dtype=bool)
        for v, p in zip(c.variables, c.polarities):
            sat |= x[:, v] == p
        out += ~sat
    return out


def _stats(report: SamplerReport) -> dict:
    return {
        "subroutine_calls": report.subroutine_calls,
        "fallback_toolarge_count": report.fallback_toolarge_count,
        "fallback_rejection_count": report.fallback_rejection_count,
        "mark_failed": report.mark_failed,
    }
