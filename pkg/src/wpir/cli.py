"""Command-line front end: CSV sweeps, optimization, bounds and verification.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 infeasible
optimization budget in at least one row.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import bounds as bd
from .core import CapacityError, InfeasibleError, TradeoffPoint, capacity
from .metrics import evaluate_tradeoff
from .optimizer import OptProblem, minimize_leakage
from .protocol_sim import run_exhaustive
from .scheme_a import SchemeA, bernoulli_strategy_a, bernoulli_tuple_a, eps_privacy_rate_a, uniform_strategy_a
from .scheme_b import SchemeB, bernoulli_strategy_b, bernoulli_tuple_b, sphere_strategy_b, sphere_tuple_b
from .wrappers import PartitionScheme, PartitionSchemeA, partition_tuple_a, timeshare_wrap

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_INFEASIBLE = 0, 1, 2, 3
FAMILIES = ("scheme-a-bernoulli", "scheme-a-partition", "scheme-b-bernoulli", "scheme-b-sphere")
SWEEP_HEADER = ["family", "M", "n", "param", "rate", "upload", "access", "mi", "wil", "maxl", "epsp", "status"]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Formatting helpers


def fmt(x) -> str:
    """Nine significant digits; infinities as "inf"."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    out = f"{x:.9g}"
    return "0" if out == "-0" else out


def parse_grid(text: str) -> list[float]:
    """Parse a grid: comma-separated items, each a value or "start:end:step" (inclusive).

    An optional "name=" prefix is ignored. A range whose end is below its
    start contributes nothing, so "1:0:1" is an empty grid.
    """
    if "=" in text:
        text = text.split("=", 1)[1]
    out: list[float] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            parts = [float(p) for p in item.split(":")]
        except ValueError:
            raise UsageError(f"cannot parse grid item {item!r}") from None
        if len(parts) == 1:
            out.append(parts[0])
            continue
        if len(parts) != 3:
            raise UsageError(f"ranges need start:end:step, got {item!r}")
        start, end, step = parts
        if step <= 0:
            raise UsageError(f"grid step must be positive in {item!r}")
        if end < start:
            continue
        count = int(math.floor((end - start) / step + 1e-9)) + 1
        out.extend(round(start + i * step, 12) for i in range(count))
    return out


def write_csv(rows: Iterable[Sequence], header: Sequence[str], out: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def parallel_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# sweep


def family_point(family: str, M: int, n: int, param: float) -> TradeoffPoint:
    """Tradeoff for one grid point; closed forms where they exist, enumeration otherwise."""
    if family == "scheme-a-bernoulli":
        if n == 2:
            return bernoulli_tuple_a(M, param)
        if not 0 <= param <= 1:
            raise ValueError(f"p must lie in [0, 1], got {param}")
        return evaluate_tradeoff(SchemeA(M, n, bernoulli_strategy_a(M, param, n)))
    if family == "scheme-b-bernoulli":
        if n == 2:
            return bernoulli_tuple_b(M, param)
        if not 0 <= param <= 0.5:
            raise ValueError(f"p must lie in [0, 1/2], got {param}")
        return evaluate_tradeoff(SchemeB(M, n, bernoulli_strategy_b(M, param, n)))
    w = int(round(param))
    if abs(w - param) > 1e-9:
        raise ValueError(f"{family} needs an integer parameter, got {param}")
    if family == "scheme-a-partition":
        return partition_tuple_a(M, n, w)
    if family == "scheme-b-sphere":
        if n == 2:
            return sphere_tuple_b(M, w)
        return evaluate_tradeoff(SchemeB(M, n, sphere_strategy_b(M, w, n)))
    raise UsageError(f"unknown family {family!r}")


def normalize_point(pt: TradeoffPoint, M: int) -> TradeoffPoint:
    """Divide bit leakages by log2 M, upload by 2(M - 1) and access by M."""
    lm = math.log2(M)
    return TradeoffPoint(
        rate=pt.rate,
        upload=pt.upload / (2 * (M - 1)),
        access=pt.access / M,
        rho_mi=pt.rho_mi / lm,
        rho_wil=pt.rho_wil / lm,
        rho_maxl=pt.rho_maxl / lm,
        rho_epsp=pt.rho_epsp,
    )


def cmd_sweep(args) -> int:
    if args.family not in FAMILIES:
        raise UsageError(f"family must be one of {', '.join(FAMILIES)}")
    M, n = args.M, args.n
    if M < 2 or n < 2:
        raise UsageError("need --M >= 2 and --n >= 2")
    grid = parse_grid(args.grid)

    def row(param: float) -> list:
        try:
            pt = family_point(args.family, M, n, param)
        except (ValueError, CapacityError) as exc:
            return [args.family, M, n, param] + [math.nan] * 7 + [f"invalid: {exc}"]
        if args.normalize:
            pt = normalize_point(pt, M)
        return [args.family, M, n, param, pt.rate, pt.upload, pt.access, pt.rho_mi, pt.rho_wil, pt.rho_maxl, pt.rho_epsp, "ok"]

    write_csv(parallel_map(row, grid, args.jobs), SWEEP_HEADER, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# optimize


def cmd_optimize(args) -> int:
    M, n = args.M, args.n
    if M < 2 or n < 2:
        raise UsageError("need --M >= 2 and --n >= 2")
    grid = parse_grid(args.grid)
    scale = math.log2(M) if args.normalize else 1.0

    def row(D: float) -> list:
        try:
            res = minimize_leakage(OptProblem(M, n, args.metric, D))
        except InfeasibleError:
            return [D, math.nan, math.nan, math.nan, 0, "infeasible"]
        status = "ok" if res.converged else "unconverged"
        return [D, res.rate(n), res.objective / scale, res.leakage_gap / scale, res.iterations, status]

    rows = parallel_map(row, grid, args.jobs)
    write_csv(rows, ["D", "rate", "rho", "gap", "iterations", "status"], args.out)
    return EXIT_INFEASIBLE if any(r[-1] == "infeasible" for r in rows) else EXIT_OK


# ---------------------------------------------------------------------------
# bounds and compare-epsp


def cmd_bounds(args) -> int:
    M, n = args.M, args.n
    if M < 2 or n < 2:
        raise UsageError("need --M >= 2 and --n >= 2")
    fn = bd.r_ub_mi if args.metric == "mi" else bd.r_ub_maxl
    rows = []
    for rho in parse_grid(args.grid):
        if rho < 0:
            raise UsageError("leakage grid must be non-negative")
        b = fn(M, n, rho)
        rows.append([rho, b.raw, b.clamped, b.vacuous, b.clamped_flag])
    write_csv(rows, ["rho", "r_ub_raw", "r_ub_clamped", "vacuous", "clamped"], args.out)
    return EXIT_OK


def cmd_compare_epsp(args) -> int:
    M = args.M
    if M < 2:
        raise UsageError("need --M >= 2")
    rows = []
    for rho in parse_grid(args.grid):
        if rho < 0:
            raise UsageError("leakage grid must be non-negative")
        rows.append([rho, bd.lpir_rate(M, 2, rho), eps_privacy_rate_a(M, rho), bd.lpir_ub(M, 2, rho)])
    write_csv(rows, ["rho", "r_lpir", "r_a", "r_ub_epsp"], args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def retrievability_schemes(M_max: int, n_max: int) -> list:
    """Every scheme family and wrapper up to the given sizes, with full-support strategies."""
    out = []
    for n in range(2, n_max + 1):
        for M in range(2, M_max + 1):
            a, b = SchemeA(M, n), SchemeB(M, n)
            out += [a, b, timeshare_wrap(a), timeshare_wrap(b)]
            for eta in range(2, M + 1):
                if M % eta == 0:
                    g = M // eta
                    out += [PartitionScheme(SchemeA(g, n), eta), PartitionScheme(SchemeB(g, n), eta)]
                    if eta <= M - 1:
                        out.append(PartitionSchemeA(M, n, eta))
    return out


def oracle_cases(M_max: int, n_max: int) -> list[tuple[str, Callable[[], TradeoffPoint], Callable[[], TradeoffPoint]]]:
    """(label, closed form, enumeration) triples with M capped at 6."""
    cases = []
    for M in range(2, min(M_max, 6) + 1):
        for p in (0.0, 0.1, 0.25, 0.5):
            cases.append((f"A bernoulli M={M} p={p}", lambda M=M, p=p: bernoulli_tuple_a(M, p),
                          lambda M=M, p=p: evaluate_tradeoff(SchemeA(M, 2, bernoulli_strategy_a(M, p)))))
            cases.append((f"B bernoulli M={M} p={p}", lambda M=M, p=p: bernoulli_tuple_b(M, p),
                          lambda M=M, p=p: evaluate_tradeoff(SchemeB(M, 2, bernoulli_strategy_b(M, p)))))
        for w in range(M + 1):
            cases.append((f"B sphere M={M} w={w}", lambda M=M, w=w: sphere_tuple_b(M, w),
                          lambda M=M, w=w: evaluate_tradeoff(SchemeB(M, 2, sphere_strategy_b(M, w)))))
        for n in range(2, n_max + 1):
            for eta in range(1, M):
                if M % eta == 0:
                    cases.append((f"A partition M={M} n={n} eta={eta}", lambda M=M, n=n, eta=eta: partition_tuple_a(M, n, eta),
                                  lambda M=M, n=n, eta=eta: evaluate_tradeoff(PartitionSchemeA(M, n, eta))))
    return cases


def run_verification(M_max: int, n_max: int, seed: int, db_samples: int = 200, tol: float = 1e-9) -> list[SuiteResult]:
    """Retrievability over every (m, s) and closed-form versus enumeration checks."""
    retr = SuiteResult("retrievability")
    for scheme in retrievability_schemes(M_max, n_max):
        rep = run_exhaustive(scheme, db_samples, seed)
        retr.checks += rep.rounds
        for f in rep.failures:
            retr.failures.append(f"{scheme!r}: m={f.m} s={f.s} db={f.db.tolist()} ({f.reason})")
    oracle = SuiteResult("closed-form-oracle")
    for label, closed, enum in oracle_cases(M_max, n_max):
        oracle.checks += 1
        diff = closed().max_abs_diff(enum())
        if not diff <= tol:
            oracle.failures.append(f"{label}: max difference {diff:.3g}")
    cap = SuiteResult("uniform-capacity")
    for M in range(2, M_max + 1):
        for n in range(2, n_max + 1):
            cap.checks += 1
            pt = evaluate_tradeoff(SchemeA(M, n, uniform_strategy_a(M, n)))
            worst = max(pt.rho_mi, pt.rho_wil, pt.rho_maxl, pt.rho_epsp)
            if abs(pt.rate - capacity(M, n)) > tol or worst > tol:
                cap.failures.append(f"M={M} n={n}: rate {pt.rate:.12g}, leakage {worst:.3g}")
    return [retr, oracle, cap]


def cmd_verify(args) -> int:
    if args.M < 2 or args.n < 2:
        raise UsageError("need --M >= 2 and --n >= 2")
    suites = run_verification(args.M, args.n, args.seed, args.db_samples)
    ok = all(s.passed for s in suites)
    for s in suites:
        print(f"{'PASS' if s.passed else 'FAIL'} {s.name}: {s.checks} checks, {len(s.failures)} failures")
        for line in s.failures:
            print(f"  counterexample {line}")
    print("verify:", "PASS" if ok else "FAIL")
    summary = {
        "passed": ok,
        "M_max": args.M,
        "n_max": args.n,
        "seed": args.seed,
        "suites": [{"name": s.name, "checks": s.checks, "passed": s.passed, "failures": s.failures} for s in suites],
    }
    with open(args.out or "wpir-verify.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# Entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit with code 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--M", type=int, default=2, help="number of files")
    common.add_argument("--n", type=int, default=2, help="number of servers")
    common.add_argument("--seed", type=int, default=0, help="RNG seed")
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")
    common.add_argument("--normalize", action="store_true", help="report leakage / log2 M, U / 2(M-1), access / M")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for grid points")

    p = _Parser(prog="wpir", description="Weakly-private information retrieval laboratory")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("sweep", parents=[common], help="tradeoff of a scheme family over a parameter grid")
    s.add_argument("family", help="|".join(FAMILIES))
    s.add_argument("--grid", required=True, help="start:end:step, comma list, or single value")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("optimize", parents=[common], help="minimum leakage for each download budget D")
    o.add_argument("--metric", choices=("mi", "maxl"), required=True)
    o.add_argument("--grid", required=True, help="download budgets")
    o.set_defaults(func=cmd_optimize)

    b = sub.add_parser("bounds", parents=[common], help="converse rate bounds over a leakage grid")
    b.add_argument("--metric", choices=("mi", "maxl"), required=True)
    b.add_argument("--grid", required=True, help="leakage values in bits")
    b.set_defaults(func=cmd_bounds)

    c = sub.add_parser("compare-epsp", parents=[common], help="epsilon-privacy rates over a budget grid (nats)")
    c.add_argument("--grid", required=True, help="epsilon values in nats")
    c.set_defaults(func=cmd_compare_epsp)

    v = sub.add_parser("verify", parents=[common], help="exhaustive retrievability and oracle checks")
    v.add_argument("--db-samples", type=int, default=200)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"wpir: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
