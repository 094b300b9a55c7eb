"""Command-line entry point.

Exit codes: 0 when every verdict passes, 1 when any verdict fails, 2 on
usage, config or ingestion errors.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import error_channel as ec
from .harness import (
    ExperimentConfig,
    IngestionError,
    analyze_proxy_csv,
    check_cycle_records,
    emit_report,
    ingest_cycle_csv,
    ingest_proxy_csv,
    proxy_table_lines,
    report_body,
    run_experiment,
)
from .novelty import NoveltyFilter

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.from_file(args.config, seed=args.seed)
    res = run_experiment(cfg)
    files = emit_report(res.records, [], args.out, [res.report])
    print(report_body([res.report]), end="")
    print(f"wrote {', '.join(str(p) for p in files.values())}")
    return EXIT_OK if res.report.passed else EXIT_FAIL


def cmd_markov(args) -> int:
    p = ec.MarkovErrorParams(args.eps, args.gamma, args.lfull, args.alpha, args.pi_full, args.pi_delta)
    rng = np.random.default_rng(args.seed)
    print(f"pi_c (stationary correct)   {ec.stationary_correct_prob(p):.10g}")
    print(f"L_full / L_delta            {p.length(ec.FULL)} / {p.length(ec.DELTA)}")
    ok = True
    rates = {}
    for mode in (ec.FULL, ec.DELTA):
        rates[mode] = ec.valid_rate(p, mode)
        line = f"valid rate {mode:<5}            {rates[mode]:.10g}"
        if args.trials:
            chk = ec.check_against_simulation(p, p.length(mode), args.trials, rng)
            line += f"  (no-error MC {chk.estimate:.6g} vs {chk.closed_form:.6g}, z={chk.z:.2f})"
            ok &= chk.passed
        print(line)
    print(f"ratio delta/full (rounded)  {rates[ec.DELTA] / rates[ec.FULL]:.10g}")
    print(f"ratio closed form           {ec.valid_rate_ratio(p):.10g}")
    if args.trials:
        print(f"Monte-Carlo agreement within 4 sigma: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def _read_tokens(path) -> list[tuple[int, ...]]:
    genomes, problems = [], []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                toks = tuple(int(t) for t in line.replace(",", " ").split())
                if min(toks) < 0:
                    raise ValueError
            except ValueError:
                problems.append((ln, f"not a list of non-negative integers: {line!r}"))
                continue
            genomes.append(toks)
    if problems:
        raise IngestionError(path, problems)
    return genomes


def cmd_novelty(args) -> int:
    f = NoveltyFilter(args.tau_nov, args.k, args.w, seed=args.seed)
    admitted = 0
    for i, g in enumerate(_read_tokens(args.input)):
        ok = f.admit(g)
        admitted += ok
        print(f"{i}\t{'admit' if ok else 'reject'}\t{' '.join(map(str, g))}")
    print(f"admitted {admitted}, stored {len(f)}")
    return EXIT_OK


def cmd_proxy(args) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        analysis = analyze_proxy_csv(ingest_proxy_csv(args.csv))
    for line in proxy_table_lines(analysis):
        print(line)
    if args.out:
        emit_report([], [analysis], args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    reports = check_cycle_records(ingest_cycle_csv(args.csv), args.delta)
    print(report_body(reports), end="")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cenas", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the full pipeline from a config file")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--seed", type=_u64, default=None, help="overrides the config seed")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("markov", help="closed-form and Monte-Carlo valid rates")
    m.add_argument("--eps", type=float, required=True)
    m.add_argument("--gamma", type=float, required=True)
    m.add_argument("--alpha", type=float, required=True)
    m.add_argument("--lfull", type=float, required=True)
    m.add_argument("--trials", type=int, default=0)
    m.add_argument("--pi-full", type=float, default=1.0)
    m.add_argument("--pi-delta", type=float, default=1.0)
    m.add_argument("--seed", type=_u64, default=0)
    m.set_defaults(func=cmd_markov)

    n = sub.add_parser("novelty", help="filter a stream of genomes, one per line")
    n.add_argument("--input", required=True, type=Path)
    n.add_argument("--tau-nov", type=float, default=0.90)
    n.add_argument("--k", type=int, default=128)
    n.add_argument("--w", type=int, default=3)
    n.add_argument("--seed", type=_u64, default=0)
    n.set_defaults(func=cmd_novelty)

    p = sub.add_parser("proxy", help="SNR and rank-correlation table from proxy_full_pairs.csv")
    p.add_argument("--csv", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_proxy)

    c = sub.add_parser("check", help="recompute verdicts on an emitted trajectory")
    c.add_argument("--csv", required=True, type=Path)
    c.add_argument("--delta", type=float, default=0.05)
    c.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (IngestionError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
