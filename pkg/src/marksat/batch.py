"""Many independent sampler runs at once, for desk-scale statistics.

The step semantics match :mod:`marksat.sampler`: the same marking procedure,
the same component decomposition (computed by the reference ``simplify`` and
``components_touching`` and cached per distinct conditioning), the same
rejection-sampling budget and fallbacks.  Only the order in which random
words are consumed differs, so results agree with the scalar path in
distribution, not draw for draw.

Assignments are packed into int64 codes (bit ``v`` = variable ``v``), which
limits the engine to formulas with at most 62 variables.
"""

from __future__ import annotations

import numpy as np

from .formula import UNASSIGNED, CnfFormula, ComponentTooLarge, PartialAssignment, \
    components_touching, simplify
from .marking import Marking, MarkFailure, mark_variables
from .oracle import Enumeration
from .regime import RegimeParams, edge_cap_of
from .rng import RandomSource
from .sampler import UNIFORM, Bias, MarkedMarginals, SamplerReport

MAX_VARS = 62


class _Draws:
    """Packed random assignments following a product bias."""

    def __init__(self, n: int, bias: Bias):
        self.n = n
        self.probs = bias.vector(n)
        self.uniform = bool(np.all(self.probs == 0.5))
        self.full = np.int64((1 << n) - 1)
        self.shifts = np.int64(1) << np.arange(n, dtype=np.int64)

    def codes(self, rng: RandomSource, rows: int) -> np.ndarray:
        if rows == 0:
            return np.zeros(0, dtype=np.int64)
        if self.uniform:
            return rng.words(rows).view(np.int64) & self.full
        u = rng.random_array(rows * self.n).reshape(rows, self.n)
        return ((u < self.probs) * self.shifts).sum(axis=1)


class _PlanTable:
    """Component decompositions stored as clause bitmasks, grown on demand.

    Plan ``p`` has ``ncomp[p]`` components; component ``k`` covers the
    variables in ``varmask[p, k]`` and has residual clauses
    ``(pos[p, k, c], neg[p, k, c])`` for the ``c`` with ``valid[p, k, c]``.
    A draw ``y`` satisfies a clause iff ``y & pos != 0`` or ``~y & neg != 0``.
    """

    def __init__(self, formula: CnfFormula, edge_cap: int, max_comps: int):
        self.formula = formula
        self.edge_cap = edge_cap
        self.K = max(1, max_comps)
        self.C = max(1, formula.num_clauses)
        self.size = 0
        self._alloc(64)
        self.index: dict = {}

    def _alloc(self, cap: int):
        def grow(old, shape, dtype):
            new = np.zeros(shape, dtype=dtype)
            if self.size:
                new[:self.size] = old[:self.size]
            return new
        get = lambda name: getattr(self, name, None)
        self.too_large = grow(get("too_large"), (cap,), bool)
        self.ncomp = grow(get("ncomp"), (cap,), np.int64)
        self.varmask = grow(get("varmask"), (cap, self.K), np.int64)
        self.pos = grow(get("pos"), (cap, self.K, self.C), np.int64)
        self.neg = grow(get("neg"), (cap, self.K, self.C), np.int64)
        self.valid = grow(get("valid"), (cap, self.K, self.C), bool)
        self.cap = cap

    def lookup(self, key, values, s) -> int:
        """Plan id for ``key``; ``values`` and ``s`` may be callables, evaluated
        only when the plan is new."""
        pid = self.index.get(key)
        if pid is not None:
            return pid
        if callable(values):
            values, s = values(), s()
        if self.size == self.cap:
            self._alloc(2 * self.cap)
        pid = self.size
        self.size += 1
        self.index[key] = pid
        sf = simplify(self.formula, PartialAssignment(values))
        try:
            comps = components_touching(sf, s, self.edge_cap)
        except ComponentTooLarge:
            self.too_large[pid] = True
            return pid
        self.ncomp[pid] = len(comps)
        for k, comp in enumerate(comps):
            self.varmask[pid, k] = sum(1 << v for v in comp.vars)
            for c, cid in enumerate(sorted(comp.clause_ids)):
                pm = nm = 0
                for v, p in sf.residual(cid):
                    if p:
                        pm |= 1 << v
                    else:
                        nm |= 1 << v
                self.pos[pid, k, c] = pm
                self.neg[pid, k, c] = nm
                self.valid[pid, k, c] = True
        return pid

    def execute(self, rng: RandomSource, draws: _Draws, pids: np.ndarray, s_mask: np.ndarray,
                R: int, report: SamplerReport) -> tuple[np.ndarray, np.ndarray]:
        """One Sample call per row.

        Returns packed values restricted to ``s_mask`` and the per-row
        fallback flag.
        """
        rows = pids.size
        report.subroutine_calls += rows
        out = np.zeros(rows, dtype=np.int64)
        tl = self.too_large[pids]
        failed = np.zeros(rows, dtype=bool)
        ncomp = self.ncomp[pids]
        kmax = int(ncomp.max()) if rows else 0
        for k in range(kmax):
            pending = np.flatnonzero((ncomp > k) & ~tl)
            for _ in range(R):
                if pending.size == 0:
                    break
                y = draws.codes(rng, pending.size)
                pid = pids[pending]
                yc = y[:, None]
                sat = ((yc & self.pos[pid, k]) != 0) | ((~yc & self.neg[pid, k]) != 0) \
                    | ~self.valid[pid, k]
                good = sat.all(axis=1)
                acc = pending[good]
                out[acc] |= y[good] & self.varmask[pid[good], k]
                pending = pending[~good]
            failed[pending] = True
        report.fallback_toolarge_count += int(tl.sum())
        report.fallback_rejection_count += int(failed.sum())
        fallback = tl | failed
        fb = np.flatnonzero(fallback)
        if fb.size:
            out[fb] = draws.codes(rng, fb.size)
        return out & s_mask, fallback


def _markings(formula: CnfFormula, params: RegimeParams, eps: float, root: RandomSource,
              runs: int, unmarkable=()) -> list[Marking | None]:
    """Marking of run ``j`` draws from substream ``j`` of ``root``; identical
    markings share one object so runs can be grouped."""
    out: list[Marking | None] = []
    cache: dict[frozenset, Marking] = {}
    for j in range(runs):
        try:
            mk = mark_variables(formula, params, eps / 4, root.child(j).child(0), unmarkable)
        except MarkFailure:
            out.append(None)
            continue
        out.append(cache.setdefault(mk.marked, mk))
    return out


def _unique_keys(g: np.ndarray, v: np.ndarray, code: np.ndarray, n: int):
    """Distinct ``(g, v, code)`` triples as Python tuples, plus the inverse map."""
    gbits = max(int(g.max(initial=0)).bit_length(), 1)
    vbits = max(n.bit_length(), 1)
    if gbits + vbits + n <= 62:
        packed = (g << (vbits + n)) | (v << n) | code
        uniq, inverse = np.unique(packed, return_inverse=True)
        mask = (1 << n) - 1
        triples = [(p >> (vbits + n), (p >> n) & ((1 << vbits) - 1), p & mask)
                   for p in uniq.tolist()]
        return triples, inverse.ravel()
    uniq, inverse = np.unique(np.stack([g, v, code], axis=1), axis=0, return_inverse=True)
    return [tuple(t) for t in uniq.tolist()], inverse.ravel()


def _values_of(code: int, mask: int, n: int) -> list[int]:
    return [((code >> v) & 1) if (mask >> v) & 1 else UNASSIGNED for v in range(n)]


def full_sample_batch(formula: CnfFormula, eps: float, seed: int, runs: int,
                      params: RegimeParams, bias: Bias = UNIFORM,
                      marking: Marking | None = None,
                      markings: list[Marking | None] | None = None,
                      rng: RandomSource | None = None) -> tuple[np.ndarray, SamplerReport]:
    """``runs`` independent executions of the full paper-mode pipeline.

    Returns a ``runs x n`` bit array.  Each run gets its own marking (or the
    shared ``marking``); a run whose marking fails gets a bias draw on all
    variables and sets ``report.mark_failed``.
    """
    n = formula.num_vars
    if n > MAX_VARS:
        raise ValueError(f"batch engine supports at most {MAX_VARS} variables")
    report = SamplerReport(seed=seed)
    report.steps = params.T * runs
    root = rng or RandomSource(seed)
    rng = root.child(runs + 1)
    if markings is None:
        markings = [marking] * runs if marking is not None else \
            _markings(formula, params, eps, root, runs)
    draws = _Draws(n, bias)
    groups: dict[frozenset, int] = {}
    group_of = np.full(runs, -1, dtype=np.int64)
    marked_lists: list[list[int]] = []
    for j, mk in enumerate(markings):
        if mk is None:
            continue
        g = groups.get(mk.marked)
        if g is None:
            g = groups[mk.marked] = len(marked_lists)
            marked_lists.append(mk.sorted_marked)
        group_of[j] = g
    failed = group_of < 0
    if failed.any():
        report.mark_failed = True
    live = np.flatnonzero(~failed)
    G = len(marked_lists)
    msize = np.array([len(m) for m in marked_lists] + [0], dtype=np.int64)
    mmax = max(int(msize.max()), 1)
    mtable = np.zeros((G + 1, mmax), dtype=np.int64)
    mmask = np.zeros(G + 1, dtype=np.int64)
    for g, ml in enumerate(marked_lists):
        mtable[g, :len(ml)] = ml
        mmask[g] = sum(1 << v for v in ml)
    grp = group_of[live]
    state = draws.codes(rng, live.size) & mmask[grp]
    cap = edge_cap_of(n, max(formula.max_degree, 1), formula.width_max, params.delta)
    steps = _PlanTable(formula, cap, 1)
    finals = _PlanTable(formula, cap, n)
    movable = np.flatnonzero(msize[grp] > 0)
    one = np.int64(1)
    for _ in range(params.T):
        if movable.size == 0:
            break
        gm = grp[movable]
        pick = np.minimum((rng.random_array(movable.size) * msize[gm]).astype(np.int64),
                          msize[gm] - 1)
        v = mtable[gm, pick]
        bit = one << v
        cleared = state[movable] & ~bit
        uniq, inverse = _unique_keys(gm, v, cleared, n)
        pid_of = np.array([
            steps.lookup((g, u, c),
                         lambda g=g, u=u, c=c: _values_of(c, int(mmask[g]) & ~(1 << u), n),
                         lambda u=u: [u])
            for g, u, c in uniq], dtype=np.int64)
        vals, _ = steps.execute(rng, draws, pid_of[inverse], bit, params.R, report)
        state[movable] = cleared | vals
    out_codes = np.zeros(runs, dtype=np.int64)
    full = (1 << n) - 1
    smask = np.int64(full) & ~mmask[grp]
    uniq, inverse = _unique_keys(grp, np.zeros_like(grp), state, n)
    pid_of = np.array([
        finals.lookup((g, c), _values_of(c, int(mmask[g]), n),
                      [v for v in range(n) if not (int(mmask[g]) >> v) & 1])
        for g, _, c in uniq], dtype=np.int64)
    rest, _ = finals.execute(rng, draws, pid_of[inverse], smask, params.R, report)
    # runs with nothing left to complete make no Sample call
    report.subroutine_calls -= int(np.count_nonzero(smask == 0))
    out_codes[live] = state | rest
    if failed.any():
        out_codes[failed] = draws.codes(root.child(runs), int(failed.sum()))
    bits = ((out_codes[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)
    return bits, report


def oracle_chain_batch(formula: CnfFormula, marking: Marking, T: int, runs: int,
                       rng: RandomSource, bias: Bias = UNIFORM,
                       marginals: MarkedMarginals | None = None) -> np.ndarray:
    """Final states (packed codes over the sorted marked variables) of ``runs``
    idealised chains with exact single-site updates."""
    marked = marking.sorted_marked
    m = len(marked)
    if m == 0:
        return np.zeros(runs, dtype=np.int64)
    marginals = marginals or MarkedMarginals(formula, marked, bias)
    table = marginals.table()
    probs = bias.vector(formula.num_vars)[marked]
    u = rng.random_array(runs * m).reshape(runs, m)
    state = ((u < probs) * (np.int64(1) << np.arange(m, dtype=np.int64))).sum(axis=1)
    for _ in range(T):
        idx = rng.below_array(m, runs)
        p1 = table[idx, state]
        bit = (rng.random_array(runs) < p1).astype(np.int64)
        state = (state & ~(np.int64(1) << idx)) | (bit << idx)
    return state


def oracle_full_sample_batch(formula: CnfFormula, marking: Marking, T: int, runs: int,
                             rng: RandomSource, bias: Bias = UNIFORM, theta: float | None = None,
                             enum: Enumeration | None = None) -> np.ndarray:
    """Idealised chain on the marked variables followed by an exact draw of the
    rest given the chain's final state.  Returns packed codes over all
    variables."""
    enum = enum or Enumeration(formula, theta, None if bias.is_uniform else bias)
    marked = marking.sorted_marked
    marginals = MarkedMarginals(formula, marked, bias, enum=enum)
    state = oracle_chain_batch(formula, marking, T, runs, rng, bias, marginals)
    # exact completion: bucket full assignments by their marked projection
    mcode = np.zeros(enum.codes.shape, dtype=np.int64)
    for i, v in enumerate(marked):
        mcode |= enum.bit(v) << i
    order = np.argsort(mcode, kind="stable")
    sorted_w = enum.weights[order]
    starts = np.searchsorted(mcode[order], np.arange((1 << len(marked)) + 1))
    out = np.empty(runs, dtype=np.int64)
    u = rng.random_array(runs)
    for st in np.unique(state).tolist():
        rows = np.flatnonzero(state == st)
        lo, hi = starts[st], starts[st + 1]
        cdf = np.cumsum(sorted_w[lo:hi])
        if cdf[-1] <= 0:
            raise ValueError("chain reached a marked state of zero mass")
        pick = np.searchsorted(cdf, u[rows] * cdf[-1], side="right")
        out[rows] = order[lo + np.minimum(pick, hi - lo - 1)]
    return out


def subroutine_batch(formula: CnfFormula, delta: float, values: list[int], s: list[int],
                     params: RegimeParams, runs: int, rng: RandomSource,
                     bias: Bias = UNIFORM) -> tuple[np.ndarray, np.ndarray]:
    """``runs`` independent Sample calls sharing one conditioning.

    Returns ``(draws, fallback)``: a ``runs x len(s)`` bit array (columns in
    sorted ``s`` order) and the per-run fallback flag.
    """
    s = sorted(s)
    n = formula.num_vars
    cap = edge_cap_of(n, max(formula.max_degree, 1), formula.width_max, delta)
    table = _PlanTable(formula, cap, len(s))
    pid = table.lookup(0, list(values), s)
    report = SamplerReport()
    smask = np.int64(sum(1 << v for v in s))
    codes, fallback = table.execute(rng, _Draws(n, bias), np.full(runs, pid, dtype=np.int64),
                                    np.full(runs, smask), params.R, report)
    bits = ((codes[:, None] >> np.array(s, dtype=np.int64)) & 1).astype(np.int8)
    return bits, fallback
