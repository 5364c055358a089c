"""Command line entry point: ``ibft run|fuzz|sweep|explore``.

Exit status is 0 iff every verdict passes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .harness import (
    build_report,
    explore,
    fuzz,
    measure_complexity,
    measure_round_change_complexity,
)
from .scenario import Scenario, ScenarioError, parse_scenario
from .simnet import run


def _seed_range(text: str) -> range:
    a, sep, b = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError("expected A..B")
    return range(int(a), int(b) + 1)


def _n_list(text: str) -> List[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _load(path: Optional[str], default: Optional[Scenario] = None) -> Scenario:
    if path is None:
        if default is None:
            raise SystemExit("--scenario is required")
        return default
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def _emit(text: str, path: Optional[str]):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    trace = run(scenario)
    if args.trace:
        Path(args.trace).write_text(trace.to_text(), encoding="utf-8")
    report = build_report(trace, scenario, lock_check=not args.no_lock_check)
    _emit(report.to_text(), args.report)
    return 0 if report.passed else 1


def cmd_fuzz(args) -> int:
    scenario = _load(args.scenario)
    result = fuzz(scenario, args.seeds, gst_max=args.gst_max, lock_check=not args.no_lock_check,
                  workers=args.workers)
    _emit(result.to_text(), args.report)
    return 0 if result.passed else 1


def cmd_sweep(args) -> int:
    template = _load(args.scenario, Scenario(n=4, f=1))
    normal = measure_complexity(template, args.n_list)
    rounds = dict(measure_round_change_complexity(template, args.n_list))
    lines, ok = [], True
    for n, total in normal:
        closed = n + 2 * n * n
        rc_ok = rounds[n] <= 3 * n * n + n
        ok &= total == closed and rc_ok
        lines.append(f"metric\tsweep.n{n}.total_sends\t{total}")
        lines.append(f"metric\tsweep.n{n}.closed_form\t{closed}")
        lines.append(f"metric\tsweep.n{n}.round_change_sends\t{rounds[n]}")
    lines.append(f"verdict\tsweep\t{'pass' if ok else 'fail'}")
    _emit("\n".join(lines) + "\n", args.report)
    return 0 if ok else 1


def cmd_explore(args) -> int:
    adversary = None
    if args.scenario:
        scenario = _load(args.scenario)
        adversary = scenario.adversaries[0] if scenario.adversaries else None
    result = explore(4, args.round_bound, args.window, adversary=adversary,
                     max_reorders=args.max_reorders, budget=args.budget)
    lines = [
        f"metric\texplore.schedules\t{result.schedules}",
        f"metric\texplore.distinct_traces\t{len(result.digests)}",
        f"metric\texplore.complete\t{int(result.complete)}",
    ]
    lines += [f"failure\t{forced}\t{detail}" for forced, detail in result.violations]
    lines.append(f"verdict\tagreement\t{'pass' if result.passed else 'fail'}")
    _emit("\n".join(lines) + "\n", args.report)
    return 0 if result.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trace")
    p.add_argument("--report")
    p.add_argument("--no-lock-check", action="store_true", help="skip the certificate-builder check")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fuzz", help="run a scenario over a seed range")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", type=_seed_range, default=range(0, 100))
    p.add_argument("--gst-max", type=int, help="draw GST per seed from [0, GST_MAX]")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report")
    p.add_argument("--no-lock-check", action="store_true")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("sweep", help="message complexity over system sizes")
    p.add_argument("--scenario")
    p.add_argument("--n-list", type=_n_list, default=[4, 7, 10, 13, 16])
    p.add_argument("--report")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("explore", help="bounded schedule exploration at n=4")
    p.add_argument("--scenario", help="takes the first adversary, if any")
    p.add_argument("--round-bound", type=int, default=2)
    p.add_argument("--window", type=int, default=2, help="reorder window")
    p.add_argument("--max-reorders", type=int, default=2)
    p.add_argument("--budget", type=int, default=5000)
    p.add_argument("--report")
    p.set_defaults(func=cmd_explore)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
