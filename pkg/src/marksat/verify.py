"""Named oracle-backed checks of the sampler and counter.

Every check compares a stochastic or structural property against exact
enumeration and returns a :class:`CheckResult` carrying the measured
statistics.  :func:`verify` runs a selection of them and collects a report.
Checks that take ``formulas`` run on the given instances; otherwise they
generate their own seeded family.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .batch import full_sample_batch, subroutine_batch
from .counter import build_gibbs, make_schedule, sample_unsat_counts
from .formula import Clause, CnfFormula, FormulaError, PartialAssignment, generate_random
from .marking import MarkFailure, Marking, mark_variables
from .oracle import (Enumeration, PreconditionError, empirical_tv, exact_conditional, exact_count,
                     exact_distribution, exact_partition, gray_code_count, local_uniformity_check,
                     unsat_histogram)
from .regime import manual_params
from .rng import RandomSource
from .sampler import UNIFORM, MarkedMarginals, sample_subroutine

PASS = "pass"
FAIL = "fail"
SKIP = "skipped"


@dataclass
class CheckResult:
    name: str
    status: str
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_json(self) -> dict:
        return asdict(self)


def _result(name: str, ok: bool, **stats) -> CheckResult:
    return CheckResult(name, PASS if ok else FAIL, stats)


def _degree_ok(k: int, d: int) -> bool:
    return 2.0 ** k >= 2 * math.e * d * k


# -- checks ---------------------------------------------------------------------


def sampler_tv_uniform(n: int = 4, samples: int = 100_000, seed: int = 0,
                       tol: float = 0.02) -> CheckResult:
    """Full pipeline on a formula without clauses must be uniform on ``{0,1}^n``."""
    f = CnfFormula(n, [])
    params = manual_params(n, 2, 1, 0.1, 1, 1)
    bits, report = full_sample_batch(f, 0.1, seed, samples, params)
    tv = empirical_tv(bits, exact_distribution(f))
    return _result("sampler_tv_uniform", tv <= tol, tv=tv, tol=tol, samples=samples, n=n,
                   fallbacks=report.fallback_toolarge_count + report.fallback_rejection_count)


def subroutine_law(formulas: Sequence[CnfFormula] | None = None, instances: int = 10,
                   samples: int = 100_000, seed: int = 0, tol: float = 0.02,
                   max_s: int = 4, scalar: bool = False) -> CheckResult:
    """Non-fallback output of the Sample subroutine versus the exact
    conditional law of ``S`` given ``X``.

    ``X`` fixes the first half of a random solution's non-``S`` variables.
    ``scalar`` runs the reference implementation one call at a time instead
    of the vectorised engine.
    """
    root = RandomSource(seed)
    if formulas is None:
        formulas = [generate_random(12, 6, 4, 2, root.child(1000 + i)) for i in range(instances)]
    worst = 0.0
    rows = []
    for i, f in enumerate(formulas):
        r = root.child(i)
        n = f.num_vars
        enum = Enumeration(f)
        sols = np.flatnonzero(enum.weights > 0)
        if sols.size == 0:
            return CheckResult("subroutine_law", SKIP, {"reason": f"instance {i} is unsatisfiable"})
        sol = int(enum.codes[sols[r.below(sols.size)]])
        perm = sorted(range(n), key=lambda _: r.random())
        s = sorted(perm[:min(max_s, n)])
        rest = perm[len(s):]
        fixed = rest[:len(rest) // 2]
        values = [-1] * n
        for v in fixed:
            values[v] = (sol >> v) & 1
        k = max(f.width_max, 2)
        params = manual_params(n, k, f.max_degree, 0.1, 1, 1)
        if scalar:
            bits, fallback = _scalar_subroutine(f, values, s, params, samples, r.child(1))
        else:
            bits, fallback = subroutine_batch(f, params.delta, values, s, params, samples,
                                              r.child(1))
        kept = bits[~fallback]
        target = exact_conditional(f, {v: values[v] for v in fixed}, s)
        tv = empirical_tv(kept, target) if kept.shape[0] else 1.0
        worst = max(worst, tv)
        rows.append({"tv": tv, "kept": int(kept.shape[0]), "S": s})
    return _result("subroutine_law", worst <= tol, max_tv=worst, tol=tol, samples=samples,
                   instances=rows)


def _scalar_subroutine(f, values, s, params, samples, rng):
    x = PartialAssignment(values)
    bits = np.empty((samples, len(s)), dtype=np.int8)
    fallback = np.zeros(samples, dtype=bool)
    for t in range(samples):
        y, reason = sample_subroutine(f, params.delta, x, s, UNIFORM, params, rng)
        bits[t] = [y[v] for v in s]
        fallback[t] = reason is not None
    return bits, fallback


def _default_marking(f: CnfFormula, rng: RandomSource) -> Marking:
    k = max(f.width_max, 2)
    params = manual_params(f.num_vars, k, f.max_degree, 0.1, 1, 1)
    for j in range(20):
        try:
            marking = mark_variables(f, params, 0.01, rng.child(j))
        except MarkFailure:
            continue
        if 2 * len(marking.marked) >= f.num_vars:
            return marking
    return Marking.from_set(f, range(0, f.num_vars, 2))


def detailed_balance(formula: CnfFormula | None = None, marking: Marking | None = None,
                     seed: int = 0, rel_tol: float = 1e-9) -> CheckResult:
    """``pi(s) P(s, s') = pi(s') P(s', s)`` for every single-flip pair of the
    exact-marginal chain on the marked variables.

    ``pi`` comes straight from enumeration; ``P`` from the chain's update rule.
    """
    root = RandomSource(seed)
    f = formula or generate_random(6, 3, 3, 2, root.child(0))
    marking = marking or _default_marking(f, root.child(1))
    marked = marking.sorted_marked
    m = len(marked)
    if m == 0:
        return CheckResult("detailed_balance", SKIP, {"reason": "no marked variables"})
    pi = exact_conditional(f, None, marked).probs
    chain = MarkedMarginals(f, marked)
    worst = 0.0
    pairs = 0
    for s in range(1 << m):
        for i in range(m):
            t = s ^ (1 << i)
            if t < s:
                continue
            p_st = chain.p_one(i, s) if (t >> i) & 1 else 1 - chain.p_one(i, s)
            p_ts = chain.p_one(i, t) if (s >> i) & 1 else 1 - chain.p_one(i, t)
            lhs = pi[s] * p_st / m
            rhs = pi[t] * p_ts / m
            scale = max(abs(lhs), abs(rhs))
            if scale > 0:
                worst = max(worst, abs(lhs - rhs) / scale)
            pairs += 1
    return _result("detailed_balance", worst <= rel_tol, max_rel_error=worst, rel_tol=rel_tol,
                   pairs=pairs, marked=marked, n=f.num_vars)


def _legal_clause(f: CnfFormula, k: int, d: int, rng: RandomSource) -> Clause | None:
    free = [v for v in range(f.num_vars) if len(f.occurrences[v]) < d]
    if len(free) < k:
        return None
    chosen = []
    for _ in range(k):
        chosen.append(free.pop(rng.below(len(free))))
    return Clause(tuple(chosen), tuple(rng.bit() for _ in chosen))


def clause_addition_ratio(formulas: Sequence[CnfFormula] | None = None, instances: int = 1,
                          k: int = 8, d: int = 2, n: int = 16, seed: int = 0,
                          additions: int = 5) -> CheckResult:
    """Appending a legal clause (width ``k``, degree still at most ``d``) keeps
    at least half of the solutions."""
    root = RandomSource(seed)
    if not _degree_ok(k, d):
        return CheckResult("clause_addition_ratio", SKIP, {"reason": "2^k < 2e d k"})
    if formulas is None:
        # keeps at least k variables below degree d
        m_max = max(1, (n - k) * d // k)
        formulas = [generate_random(n, 1 + root.child(i).below(m_max), k, d, root.child(i).child(0))
                    for i in range(instances)]
    worst = math.inf
    tested = 0
    for i, f in enumerate(formulas):
        z = exact_count(f)
        for a in range(additions):
            c = _legal_clause(f, k, d, root.child(i).child(1 + a))
            if c is None:
                break
            ratio = exact_count(f.with_clause(c)) / z
            worst = min(worst, ratio)
            tested += 1
    if tested == 0:
        return CheckResult("clause_addition_ratio", SKIP, {"reason": "no legal clause to add"})
    return _result("clause_addition_ratio", worst >= 0.5, min_ratio=worst, additions=tested)


def telescope_endpoint(formulas: Sequence[CnfFormula] | None = None, instances: int = 20,
                       eps: float = 0.5, seed: int = 0) -> CheckResult:
    """``Z <= Z(theta_ell) <= e^{eps/2} Z`` at the last rung of the schedule."""
    root = RandomSource(seed)
    if formulas is None:
        formulas = [generate_random(10, 1 + root.child(i).below(2), 7, 2, root.child(i).child(0))
                    for i in range(instances)]
    worst = 0.0
    rows = []
    for f in formulas:
        d = max(f.max_degree, 1)
        if f.num_clauses and not _degree_ok(f.width_min, d):
            return CheckResult("telescope_endpoint", SKIP, {"reason": "2^k < 2e d k"})
        sched = make_schedule(f.num_vars, d, eps)
        z = exact_count(f)
        z_end = exact_partition(f, sched.theta_at(sched.ell))
        ok = z <= z_end * (1 + 1e-12) and z_end <= math.exp(eps / 2) * z * (1 + 1e-12)
        excess = math.log(z_end / z) if z else math.inf
        worst = max(worst, excess)
        rows.append({"Z": z, "Z_end": z_end, "ok": ok})
    return _result("telescope_endpoint", all(r["ok"] for r in rows), max_log_excess=worst,
                   bound=eps / 2, instances=len(rows))


def ratio_unbiasedness(formula: CnfFormula | None = None, rungs: int = 5, draws: int = 100_000,
                       eps: float = 0.5, seed: int = 0, z_tol: float = 3.0) -> CheckResult:
    """Mean of ``exp(-|F(X)|/(dn))`` with ``X`` exact from ``mu_theta_{i-1}``
    matches ``Z(theta_i)/Z(theta_{i-1})`` within ``z_tol`` standard errors."""
    root = RandomSource(seed)
    f = formula or generate_random(8, 3, 4, 2, root.child(0))
    n = f.num_vars
    d = max(f.max_degree, 1)
    sched = make_schedule(n, d, eps)
    hist = unsat_histogram(f)
    worst = 0.0
    rows = []
    for i in range(1, min(rungs, sched.ell) + 1):
        lo, hi = sched.theta_at(i - 1), sched.theta_at(i)
        counts = sample_unsat_counts(hist, lo, draws, root.child(i))
        w = np.exp(-counts / (d * n))
        mean = float(w.mean())
        se = float(w.std(ddof=1) / math.sqrt(draws))
        target = exact_partition(f, hi) / exact_partition(f, lo)
        z = abs(mean - target) / se if se > 0 else (0.0 if mean == target else math.inf)
        worst = max(worst, z)
        rows.append({"rung": i, "mean": mean, "target": target, "se": se})
    return _result("ratio_unbiasedness", worst <= z_tol, max_z=worst, z_tol=z_tol, draws=draws,
                   rungs=rows)


def oracle_cross_check(formulas: Sequence[CnfFormula] | None = None, instances: int = 100,
                       seed: int = 0) -> CheckResult:
    """Vectorised counting agrees with the Gray-code walker, and the partition
    function at ``theta = 0`` is exactly ``2^n``."""
    root = RandomSource(seed)
    if formulas is None:
        formulas = []
        for i in range(instances):
            r = root.child(i)
            n = 4 + r.below(9)
            k = 2 + r.below(min(4, n - 1))
            m = 1 + r.below(3 * n // k)
            formulas.append(generate_random(n, m, k, max(1, math.ceil(m * k / n) + 1), r.child(0)))
    mismatches = 0
    partition_ok = True
    for f in formulas:
        if exact_count(f) != gray_code_count(f):
            mismatches += 1
        if exact_partition(f, 0.0) != float(2 ** f.num_vars):
            partition_ok = False
    return _result("oracle_cross_check", mismatches == 0 and partition_ok, mismatches=mismatches,
                   partition_at_zero_exact=partition_ok, instances=len(formulas))


def gibbs_conditional_identity(formula: CnfFormula | None = None,
                               thetas: Sequence[float] = (0.0, 0.3, 1.0, 4.0), seed: int = 0,
                               tol: float = 1e-9) -> CheckResult:
    """The original-variable projection of the biased product law conditioned
    on the augmented formula equals ``mu_theta`` pointwise."""
    root = RandomSource(seed)
    f = formula or generate_random(8, 4, 3, 2, root.child(0))
    n = f.num_vars
    worst = 0.0
    for theta in thetas:
        gf = build_gibbs(f, theta)
        lhs = exact_conditional(gf.augmented, None, range(n), bias=gf.bias)
        rhs = exact_distribution(f, theta)
        worst = max(worst, float(np.abs(lhs.probs - rhs.probs).max()))
    return _result("gibbs_conditional_identity", worst <= tol, max_abs_error=worst, tol=tol,
                   thetas=list(thetas))


def local_uniformity(formulas: Sequence[CnfFormula] | None = None, instances: int = 50,
                     k: int = 8, d: int = 2, s_param: float = 8.0, seed: int = 0) -> CheckResult:
    """Every solution marginal lies in ``[1 - e^{1/s}/2, e^{1/s}/2]``."""
    root = RandomSource(seed)
    if formulas is None:
        formulas = []
        for i in range(instances):
            r = root.child(i)
            n = 12 + r.below(5)
            m = 1 + r.below(n * d // k)
            formulas.append(generate_random(n, m, k, d, r.child(0)))
    failures = 0
    try:
        for f in formulas:
            if not local_uniformity_check(f, s_param):
                failures += 1
    except PreconditionError as exc:
        return CheckResult("local_uniformity", SKIP, {"reason": str(exc)})
    return _result("local_uniformity", failures == 0, failures=failures, instances=len(formulas),
                   s=s_param)


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "oracle_cross_check": oracle_cross_check,
    "sampler_tv_uniform": sampler_tv_uniform,
    "subroutine_law": subroutine_law,
    "detailed_balance": detailed_balance,
    "local_uniformity": local_uniformity,
    "telescope_endpoint": telescope_endpoint,
    "ratio_unbiasedness": ratio_unbiasedness,
    "gibbs_conditional_identity": gibbs_conditional_identity,
    "clause_addition_ratio": clause_addition_ratio,
}

# checks that accept a user-supplied instance, and the keyword it goes under
_INSTANCE_ARG = {
    "oracle_cross_check": "formulas",
    "subroutine_law": "formulas",
    "detailed_balance": "formula",
    "local_uniformity": "formulas",
    "telescope_endpoint": "formulas",
    "ratio_unbiasedness": "formula",
    "gibbs_conditional_identity": "formula",
    "clause_addition_ratio": "formulas",
}


@dataclass
class VerifyConfig:
    checks: Sequence[str] | None = None
    seed: int = 0
    formula: CnfFormula | None = None
    samples: int | None = None


def verify(config: VerifyConfig) -> dict:
    """Run the selected checks (all by default) and return a JSON-ready report."""
    names = list(config.checks) if config.checks else list(CHECKS)
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}; available: {sorted(CHECKS)}")
    results = []
    for name in names:
        kwargs: dict = {"seed": config.seed}
        if config.formula is not None:
            arg = _INSTANCE_ARG.get(name)
            if arg is None:
                results.append(CheckResult(name, SKIP, {"reason": "does not take an input instance"}))
                continue
            kwargs[arg] = [config.formula] if arg == "formulas" else config.formula
        if config.samples is not None and name in ("sampler_tv_uniform", "subroutine_law"):
            kwargs["samples"] = config.samples
        if config.samples is not None and name == "ratio_unbiasedness":
            kwargs["draws"] = config.samples
        try:
            results.append(CHECKS[name](**kwargs))
        except FormulaError as exc:
            results.append(CheckResult(name, SKIP, {"reason": str(exc)}))
    return {
        "seed": config.seed,
        "passed": all(r.status != FAIL for r in results),
        "checks": [r.to_json() for r in results],
    }
