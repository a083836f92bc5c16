"""Command-line entry points for the benchmark comparisons and diagnostics.

Every subcommand writes a CSV and prints one PASS or FAIL line per check it
owns; the process exits 0 only if all of those checks pass. The comparison
CSVs carry a wall-clock column that varies between runs, so byte-level
reproducibility holds for every column except ``wall_ms``.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import benchmarks


def _add_common(parser: argparse.ArgumentParser, n_seeds: int, sweep, out: str) -> None:
    parser.add_argument("--n-seeds", type=int, default=n_seeds, help="seeds per cell")
    parser.add_argument(
        "--sweep",
        type=lambda s: tuple(int(v) for v in s.split(",")),
        default=tuple(sweep),
        help="comma-separated episode budgets",
    )
    parser.add_argument("--out", default=out, help="output CSV path")
    parser.add_argument("--seed", type=int, default=0, help="base seed")
    parser.add_argument("--config", default=None, help="JSON file of benchmark config overrides")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for sweep cells")


def _overrides(args) -> dict | None:
    if args.config is None:
        return None
    with open(args.config) as fh:
        return json.load(fh)


def _report(checks, failures=()) -> int:
    for msg in failures:
        print(f"warning: run failed ({msg})")
    ok = True
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name}: {check.detail}")
        ok = ok and check.passed
    return 0 if ok else 1


def _print_summary(rows) -> None:
    stats = benchmarks.summarize(rows)
    for method, n in sorted(stats):
        mean, se, count = stats[(method, n)]
        print(f"  {method:>10s}  N={n:<5d} mean excess {mean:.5g} +/- {se:.3g} ({count} runs)")


def _cmd_figure2(args) -> int:
    rows, checks, failures = benchmarks.run_figure2(
        sweep=args.sweep,
        n_seeds=args.n_seeds,
        out_path=args.out,
        base_seed=args.seed,
        overrides=_overrides(args),
        threads=args.threads,
    )
    _print_summary(rows)
    print(f"wrote {args.out}")
    return _report(checks, failures)


def _cmd_figure3(args) -> int:
    rows, checks, failures = benchmarks.run_figure3(
        sweep=args.sweep,
        n_seeds=args.n_seeds,
        out_path=args.out,
        base_seed=args.seed,
        overrides=_overrides(args),
        threads=args.threads,
    )
    _print_summary(rows)
    print(f"wrote {args.out}")
    return _report(checks, failures)


def _cmd_rate_check(args) -> int:
    rows, slope = benchmarks.identification_rate(
        sweep=args.sweep,
        n_seeds=args.n_seeds,
        base_seed=args.seed,
        overrides=_overrides(args),
    )
    with open(args.out, "w", newline="") as fh:
        fh.write("n_episodes,seed,sq_error\n")
        for n, seed, err in rows:
            fh.write(f"{n},{seed},{err!r}\n")
    print(f"wrote {args.out}")
    passed = -1.3 <= slope <= -0.7
    check = benchmarks.CheckResult(
        "rate", passed, f"log-log slope of mean squared error {slope:.4f} in [-1.3, -0.7]"
    )
    return _report([check])


def _cmd_hessian_check(args) -> int:
    full, half = benchmarks.hessian_check(seed=args.seed, n_mc=args.n_mc)
    with open(args.out, "w", newline="") as fh:
        fh.write("fd_step,estimate\n")
        fh.write(f"0.01,{full!r}\n")
        fh.write(f"0.005,{half!r}\n")
    print(f"wrote {args.out}")
    rel_err = abs(full - 2.0) / 2.0
    rel_step = abs(full - half) / max(abs(half), 1e-12)
    checks = [
        benchmarks.CheckResult(
            "accuracy", rel_err <= 0.05, f"estimate {full:.5f} vs 2.0, relative error {rel_err:.4%}"
        ),
        benchmarks.CheckResult(
            "step-stability", rel_step <= 0.01, f"half-step change {rel_step:.4%}"
        ),
    ]
    return _report(checks)


def _cmd_doed_trace(args) -> int:
    rows = benchmarks.design_progress(
        n_design=args.n_design,
        n_seeds=args.n_seeds,
        base_seed=args.seed,
        overrides=_overrides(args),
    )
    with open(args.out, "w", newline="") as fh:
        fh.write("seed,epoch,objective\n")
        for seed, epoch, value in rows:
            fh.write(f"{seed},{epoch},{value!r}\n")
    print(f"wrote {args.out}")
    first = [v for _s, e, v in rows if e == 0]
    last_epoch = max(e for _s, e, _v in rows)
    final = [v for _s, e, v in rows if e == last_epoch]
    mean_first = sum(first) / len(first)
    mean_final = sum(final) / len(final)
    check = benchmarks.CheckResult(
        "non-worsening",
        mean_final <= mean_first,
        f"mean objective epoch {last_epoch} {mean_final:.5g} <= epoch 0 {mean_first:.5g}",
    )
    return _report([check])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alcoi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p2 = sub.add_parser("figure2", help="three-method comparison on the bump system")
    _add_common(p2, n_seeds=50, sweep=(64, 128, 256, 512), out="figure2.csv")
    p2.set_defaults(fn=_cmd_figure2)

    p3 = sub.add_parser("figure3", help="three-method comparison on the cartpole")
    _add_common(p3, n_seeds=30, sweep=(32, 64, 128), out="figure3.csv")
    p3.set_defaults(fn=_cmd_figure3)

    pr = sub.add_parser("rate-check", help="identification rate on the scalar linear system")
    _add_common(pr, n_seeds=30, sweep=(16, 64, 256, 1024), out="rate_check.csv")
    pr.set_defaults(fn=_cmd_rate_check)

    ph = sub.add_parser("hessian-check", help="curvature estimator against its closed form")
    ph.add_argument("--seed", type=int, default=0, help="shared noise seed")
    ph.add_argument("--n-mc", type=int, default=100_000, help="rollouts per cost evaluation")
    ph.add_argument("--out", default="hessian_check.csv", help="output CSV path")
    ph.set_defaults(fn=_cmd_hessian_check)

    pd = sub.add_parser("doed-trace", help="design objective trace on the bump system")
    _add_common(pd, n_seeds=10, sweep=(256,), out="doed_trace.csv")
    pd.add_argument("--n-design", type=int, default=256, help="episode budget for the design loop")
    pd.set_defaults(fn=_cmd_doed_trace)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
