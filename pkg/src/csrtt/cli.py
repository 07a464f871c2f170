"""Command-line entry point: ``csrtt run | report | selftest``."""

import argparse
import logging
import sys
from dataclasses import replace

from . import harness, selftest
from .errors import CsrttError


def _list(s: str, conv=str) -> list:
    return [conv(x) for x in s.split(",") if x.strip()]


def cmd_run(args) -> int:
    cfg = harness.load_scenario(args.scenario) if args.scenario else harness.ScenarioConfig()
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    records = harness.run_sweep(cfg, threads=args.threads)
    harness.export(records, args.format, args.out)
    failed = sum(r.status != "ok" for r in records)
    print(f"wrote {len(records)} records to {args.out} ({failed} flagged)")
    return 0


def cmd_report(args) -> int:
    records = harness.read_records(args.input)
    rows = harness.report_cdf(records, _list(args.group_by),
                              _list(args.percentiles, float))
    print(harness.format_report(rows))
    return 0


def cmd_selftest(args) -> int:
    only = set(_list(args.only, int)) if args.only else None
    results = selftest.run_all(only)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return 0 if passed == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csrtt", description="Cyclic-shift RTT link simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte Carlo sweep and export trial records")
    r.add_argument("--scenario", help="scenario YAML file (defaults if omitted)")
    r.add_argument("--out", required=True)
    r.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    r.add_argument("--seed", type=int, help="override master_seed")
    r.add_argument("--threads", type=int, default=1)
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="percentiles of range error per group")
    rep.add_argument("--in", dest="input", required=True)
    rep.add_argument("--group-by", default="estimator,snr,M")
    rep.add_argument("--percentiles", default="50,67,90,95")
    rep.set_defaults(func=cmd_report)

    st = sub.add_parser("selftest", help="run the acceptance checks")
    st.add_argument("--only", help="comma-separated criterion numbers")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CsrttError, OSError, ValueError, KeyError) as e:
        print(f"csrtt: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
