"""Command-line front end: ``marksat <subcommand> [flags]``.

Every subcommand writes one JSON document (or text) to stdout and
diagnostics to stderr.  Variable ids on the command line and in JSON output
are 1-based, as in DIMACS.  Exit codes: 0 success, 1 usage or input error,
2 regime violation in strict mode, 3 oracle cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from statistics import median

import jsonschema

from . import __version__
from .counter import approx_count
from .coupling import CouplingError, CouplingParams, estimate_mean_V1, run_coupling_C, \
    run_coupling_Cv, ExactMarginals
from .formula import DimacsError, FormulaError, emit_dimacs, generate_random, parse_dimacs
from .marking import MarkFailure, Marking, mark_variables
from .oracle import OracleCapExceeded, PreconditionError, ZeroMassCondition, exact_conditional, \
    exact_count, exact_partition
from .regime import ParamError, RegimeViolation, derive_params, k_beta_of, manual_params
from .rng import RandomSource
from .sampler import ORACLE, PAPER, SamplerInputError, full_sample, model_line
from .verify import CHECKS, VerifyConfig, verify

log = logging.getLogger("marksat")

EXIT_OK, EXIT_USAGE, EXIT_REGIME, EXIT_CAP = 0, 1, 2, 3
MANUAL_FLAGS = ("k_alpha", "k_beta", "eta", "T", "R")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- argument parsing ------------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, formula=True, params=False):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "text"), default="json")
    if formula:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--input", help="DIMACS CNF file ('-' for stdin)")
        src.add_argument("--random", metavar="N,M,K,D",
                         help="generate a random formula from the seed instead of reading one")
    if params:
        p.add_argument("--epsilon", type=float, default=0.1)
        p.add_argument("--xi", type=float, default=0.0)
        p.add_argument("--mode", choices=("strict", "manual"), default="strict")
        p.add_argument("--k-alpha", dest="k_alpha", type=int)
        p.add_argument("--k-beta", dest="k_beta", type=int)
        p.add_argument("--eta", type=float)
        p.add_argument("--T", dest="T", type=int)
        p.add_argument("--R", dest="R", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="marksat", description="Sample and count solutions of bounded-degree CNF formulas.")
    parser.add_argument("--version", action="version", version=f"marksat {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="random k-CNF with bounded degree")
    _common(p, formula=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)

    p = sub.add_parser("mark", help="choose the marked variables")
    _common(p, params=True)

    p = sub.add_parser("sample", help="draw one near-uniform solution")
    _common(p, params=True)
    p.add_argument("--marginals", choices=(PAPER, ORACLE), default=PAPER,
                   help="chain updates by the Sample subroutine or by exact marginals")

    p = sub.add_parser("count", help="approximate the number of solutions")
    _common(p, params=True)
    p.add_argument("--sampler", choices=("paper", "batch", "exact"), default="batch")
    p.add_argument("--repeat", type=int, default=1, help="median of this many estimates")
    p.add_argument("--parallel", type=int, default=1, help="worker processes for repeats")

    p = sub.add_parser("exact", help="oracle count, partition function or conditional law")
    _common(p)
    p.add_argument("--theta", type=float)
    p.add_argument("--given", default="", help="literals to condition on, e.g. '1,-3'")
    p.add_argument("--vars", default="", help="variables of the conditional law, e.g. '2,4'")

    p = sub.add_parser("verify", help="oracle-backed self checks")
    _common(p)
    p.add_argument("--checks", default="", help=f"comma list from {','.join(CHECKS)}")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("couple", help="run the coupling C or C_v")
    _common(p, params=True)
    p.add_argument("--v0", type=int, required=True)
    p.add_argument("--v", type=int)
    p.add_argument("--k-gamma", dest="k_gamma", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--marked", default="", help="explicit marked set, e.g. '1,2,5'")
    return parser


# -- helpers ----------------------------------------------------------------------


def _ids(text: str, signed: bool = False) -> list[int]:
    out = []
    for tok in text.replace(" ", ",").split(","):
        if not tok:
            continue
        try:
            lit = int(tok)
        except ValueError:
            raise UsageError(f"bad variable id {tok!r}") from None
        if lit == 0 or (lit < 0 and not signed):
            raise UsageError(f"bad variable id {tok!r}")
        out.append(lit)
    return out


def _load_formula(args):
    if args.random:
        try:
            n, m, k, d = (int(t) for t in args.random.split(","))
        except ValueError:
            raise UsageError("--random expects N,M,K,D") from None
        return generate_random(n, m, k, d, RandomSource(args.seed).child(1 << 20))
    if not args.input:
        raise UsageError("one of --input or --random is required")
    if args.input == "-":
        data = sys.stdin.buffer.read()
    else:
        with open(args.input, "rb") as fh:
            data = fh.read()
    return parse_dimacs(data)


def _overrides(args) -> dict:
    overrides = {f: getattr(args, f) for f in MANUAL_FLAGS if getattr(args, f) is not None}
    if args.mode == "strict" and overrides:
        raise UsageError(f"strict mode forbids manual overrides ({', '.join(overrides)})")
    if args.mode == "manual" and ("k_alpha" not in overrides or "k_beta" not in overrides):
        raise UsageError("manual mode needs --k-alpha and --k-beta")
    return overrides


def _params(args, formula):
    overrides = _overrides(args)
    if args.mode == "strict":
        if not formula.is_uniform:
            raise SamplerInputError("strict mode needs a k-uniform formula")
        return derive_params(formula.num_vars, formula.width_max, formula.max_degree,
                             args.epsilon, args.xi, strict=True)
    return manual_params(formula.num_vars, formula.width_max, formula.max_degree, args.epsilon,
                         xi=args.xi, **overrides)


def _one_based(variables) -> list[int]:
    return [v + 1 for v in sorted(variables)]


def _rekey(d: dict) -> dict:
    return {str(int(k) + 1): v for k, v in d.items()}


# -- subcommands -------------------------------------------------------------------


def cmd_generate(args):
    f = generate_random(args.n, args.m, args.k, args.d, RandomSource(args.seed))
    text = emit_dimacs(f, [f"marksat generate n={args.n} m={args.m} k={args.k} d={args.d} seed={args.seed}"])
    if args.format == "text":
        return text
    return {"seed": args.seed, "num_vars": f.num_vars, "num_clauses": f.num_clauses,
            "k": args.k, "d": f.max_degree, "dimacs": text}


def cmd_mark(args):
    f = _load_formula(args)
    params = _params(args, f)
    out = {"seed": args.seed, "params": params.to_json()}
    try:
        marking = mark_variables(f, params, args.epsilon / 4, RandomSource(args.seed).child(0))
    except MarkFailure as exc:
        log.warning("%s", exc)
        out.update(status="failed", marked=None, attempts=exc.attempts)
    else:
        out.update(status="ok", marked=_one_based(marking.marked), attempts=marking.attempts,
                   resamples=marking.resamples)
    if args.format == "text":
        return " ".join(map(str, out["marked"] or [])) + "\n"
    return out


def cmd_sample(args):
    f = _load_formula(args)
    params = _params(args, f)
    values, report = full_sample(f, args.epsilon, args.seed, "manual", params,
                                 marginal_mode=args.marginals)
    if args.format == "text":
        return model_line(values) + "\nc report " + json.dumps(report.to_json(), sort_keys=True) + "\n"
    return {"seed": args.seed, "params": params.to_json(), "assignment": values,
            "model": model_line(values), "satisfied": f.satisfied_by(values),
            "report": report.to_json()}


def _count_job(job):
    f, eps, seed, mode, sampler, xi, overrides = job
    return approx_count(f, eps, seed, mode, sampler, xi, **overrides).to_json()


def cmd_count(args):
    f = _load_formula(args)
    overrides = _overrides(args)
    if args.repeat < 1 or args.parallel < 1:
        raise UsageError("--repeat and --parallel must be positive")
    jobs = [(f, args.epsilon, args.seed + r, args.mode, args.sampler, args.xi, overrides)
            for r in range(args.repeat)]
    if args.parallel > 1 and args.repeat > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            runs = list(pool.map(_count_job, jobs))
    else:
        runs = [_count_job(j) for j in jobs]
    out = dict(runs[0])
    out["seed"] = args.seed
    if args.repeat > 1:
        out["log2_estimate"] = median(r["log2_estimate"] for r in runs)
        out.pop("decimal_estimate", None)
        if out["log2_estimate"] < 63:
            out["decimal_estimate"] = 2.0 ** out["log2_estimate"]
        out["repeats"] = [r["log2_estimate"] for r in runs]
    if args.format == "text":
        return f"{out['log2_estimate']!r}\n"
    return out


def cmd_exact(args):
    f = _load_formula(args)
    given_lits = _ids(args.given, signed=True)
    query = _ids(args.vars)
    for v in [abs(x) for x in given_lits] + query:
        if v > f.num_vars:
            raise UsageError(f"variable {v} exceeds n={f.num_vars}")
    if query:
        given = {abs(x) - 1: int(x > 0) for x in given_lits}
        dist = exact_conditional(f, given, [v - 1 for v in query], args.theta)
        out = {"given": given_lits, "vars": _one_based(dist.variables),
               "distribution": [{"assignment": list(a), "prob": float(p)}
                                for a, p in zip(dist.support, dist.probs.tolist())]}
        if args.theta is not None:
            out["theta"] = args.theta
    elif given_lits:
        raise UsageError("--given needs --vars")
    elif args.theta is not None:
        out = {"theta": args.theta, "partition": exact_partition(f, args.theta)}
    else:
        out = {"count": exact_count(f)}
    if args.format == "text":
        return "\n".join(f"{k} {json.dumps(v)}" for k, v in out.items()) + "\n"
    return out


def cmd_verify(args):
    formula = _load_formula(args) if (args.input or args.random) else None
    checks = [c for c in args.checks.split(",") if c]
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise UsageError(f"unknown checks {unknown}")
    report = verify(VerifyConfig(checks or None, args.seed, formula, args.samples))
    if args.format == "text":
        return "".join(f"{c['name']}: {c['status']}\n" for c in report["checks"])
    return report


def cmd_couple(args):
    f = _load_formula(args)
    n = f.num_vars
    v0 = args.v0 - 1
    v = args.v - 1 if args.v is not None else None
    if not 0 <= v0 < n or (v is not None and not 0 <= v < n):
        raise UsageError("--v0/--v out of range")
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    if args.marked:
        marking = Marking.from_set(f, [x - 1 for x in _ids(args.marked)])
        k_beta = args.k_beta if args.k_beta is not None else k_beta_of(f.width_max)
        params_json = None
    else:
        params = _params(args, f)
        marking = mark_variables(f, params, args.epsilon / 4, RandomSource(args.seed).child(0))
        k_beta = params.k_beta
        params_json = params.to_json()
    for flag, var in (("--v0", v0), ("--v", v)):
        if var is not None and var not in marking.marked:
            raise UsageError(f"{flag} {var + 1} is not marked (marked: {_one_based(marking.marked)})")
    cp = CouplingParams.from_regime(max(f.max_degree, 1), f.width_max, k_beta, s=args.s,
                                    k_gamma=args.k_gamma)
    backend = ExactMarginals(f)
    root = RandomSource(args.seed).child(1)
    out = {"seed": args.seed, "params": params_json, "coupling": cp.to_json(),
           "marked": _one_based(marking.marked), "v0": args.v0, "v": args.v}
    if args.trials == 1:
        if v is None:
            trace = run_coupling_C(f, marking, v0, cp, root, backend, k_beta)
        else:
            trace, x, y = run_coupling_Cv(f, marking, v0, v, cp, root, backend, k_beta=k_beta)
            out["x"], out["y"] = x, y
        t = trace.to_json()
        for key in ("V1", "S", "Vset", "remaining_edges"):
            t[key] = [i + 1 for i in t[key]] if key != "remaining_edges" else t[key]
        for key in ("x", "y", "r_values", "p_values"):
            t[key] = _rekey(t[key])
        t["v0"] += 1
        if t["v"] is not None:
            t["v"] += 1
        out["trace"] = t
    else:
        if v is not None:
            raise UsageError("summary statistics (--trials > 1) are for the coupling C only")
        mean, se = estimate_mean_V1(f, marking, v0, cp, args.trials, args.seed, backend)
        out["summary"] = {"trials": args.trials, "mean_V1": mean, "stderr_V1": se}
    if args.format == "text":
        body = out.get("summary") or {"V1": out["trace"]["V1"]}
        return "\n".join(f"{k} {json.dumps(val)}" for k, val in body.items()) + "\n"
    return out


COMMANDS = {
    "generate": cmd_generate,
    "mark": cmd_mark,
    "sample": cmd_sample,
    "count": cmd_count,
    "exact": cmd_exact,
    "verify": cmd_verify,
    "couple": cmd_couple,
}


def load_schema(command: str) -> dict:
    text = resources.files("marksat").joinpath("schemas", f"{command}.json").read_text()
    return json.loads(text)


def render(command: str, result) -> str:
    """Text results pass through; JSON results are schema-checked and dumped."""
    if isinstance(result, str):
        return result
    jsonschema.validate(result, load_schema(command))
    return json.dumps(result, indent=2, allow_nan=False) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"marksat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="marksat: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        text = render(args.command, COMMANDS[args.command](args))
    except UsageError as exc:
        print(f"marksat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RegimeViolation as exc:
        print(f"marksat: regime violation: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except OracleCapExceeded as exc:
        print(f"marksat: oracle cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (OSError, DimacsError, FormulaError, ParamError, SamplerInputError, CouplingError,
            PreconditionError, ZeroMassCondition, MarkFailure) as exc:
        print(f"marksat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(text)
    sys.stdout.flush()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
