"""Command-line entry points.

::

    maniplan info
    maniplan solve --problem FILE [options]
    maniplan bench run --suite FILE --out DIR [options]

``solve`` exits 0 iff the problem was Solved; ``bench run`` exits 0 iff
the suite completed (individual trial failures are recorded, not fatal).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ManiplanError


def _add_run_options(parser, with_trials: bool):
    parser.add_argument("--projection",
                        choices=["parallel", "naive", "literal-gap"],
                        default=None,
                        help="projector mode override (default: per problem)")
    parser.add_argument("--cc-flag", choices=["on", "off"], default=None,
                        help="shared early-termination flag for collision "
                             "checking")
    parser.add_argument("--densify", type=int, choices=[1, 10, 100],
                        default=None,
                        help="scene subdivision factor override")
    parser.add_argument("--seed-offset", type=int, default=None,
                        help="base sample-stream offset")
    if with_trials:
        parser.add_argument("--trials", type=int, default=None,
                            help="trials per problem override")
    parser.add_argument("--deterministic", action="store_true",
                        help="ignore the wall clock so outcomes depend only "
                             "on seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maniplan",
        description="Constrained bidirectional RRT-Connect planner and "
                    "benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("info", help="print version and active kernel backend")

    solve = sub.add_parser("solve", help="plan a single problem file")
    solve.add_argument("--problem", required=True, help="problem YAML file")
    _add_run_options(solve, with_trials=False)

    bench = sub.add_parser("bench", help="benchmark harness")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    run = bench_sub.add_parser("run", help="run a suite and emit CSV records")
    run.add_argument("--suite", required=True, help="suite YAML file")
    run.add_argument("--out", required=True, help="output directory")
    _add_run_options(run, with_trials=True)
    return parser


def _cmd_info() -> int:
    from . import __version__
    from ._kernels import active_name, compiled_module
    print(f"maniplan {__version__}")
    print(f"kernel backend: {active_name}")
    built = "yes" if compiled_module() is not None else "no"
    print(f"compiled backend built: {built}")
    return 0


def _cmd_solve(args) -> int:
    from .bench import load_problem
    from .planner import PlanProblem, plan
    problem = load_problem(args.problem,
                           overrides={"densify": args.densify})
    params = problem.params
    if args.seed_offset is not None:
        params = replace(params, seed_offset=args.seed_offset)
    if args.projection is not None:
        params = replace(params, projection_mode=args.projection)
    if args.cc_flag is not None:
        params = replace(params, flag_mode=args.cc_flag)
    if args.deterministic:
        params = replace(params, deterministic=True)
    result = plan(PlanProblem(model=problem.model, scene=problem.scene,
                              spec=problem.spec, start=problem.start,
                              goal=problem.goal, params=params,
                              name=problem.id))
    st = result.stats
    print(f"{result.status}  wall_ms={st.wall_ms:.1f} "
          f"iterations={st.iterations} "
          f"nodes={st.nodes_start}+{st.nodes_goal} "
          f"projection_failures={st.projection_failures} "
          f"checks={st.cc_performed}/{st.cc_possible}")
    if result.solved:
        print(f"path: {len(result.path)} configurations")
        return 0
    return 1


def _cmd_bench_run(args) -> int:
    from .bench import load_suite, run_suite, summarize, write_cdfs
    overrides = {"densify": args.densify, "trials": args.trials,
                 "seed_offset": args.seed_offset}
    suite = load_suite(args.suite, overrides=overrides)
    total = (len(suite.problems) + len(suite.load_failures)) * suite.trials
    done = [0]

    def progress(rec):
        done[0] += 1
        print(f"[{done[0]}/{total}] {rec.problem} trial {rec.trial}: "
              f"{rec.status} ({rec.wall_ms:.1f} ms)", flush=True)

    records = run_suite(suite, out_dir=args.out, projection=args.projection,
                        cc_flag=args.cc_flag,
                        deterministic=args.deterministic, progress=progress)
    write_cdfs(records, args.out)
    print()
    for label, entry in summarize(records).items():
        line = (f"{label}: {entry['solved']}/{entry['trials']} solved "
                f"({100 * entry['success_rate']:.0f}%)")
        if "median_wall_ms" in entry:
            line += f", median {entry['median_wall_ms']:.1f} ms"
        if "mean_checks_saved" in entry:
            line += f", checks saved {100 * entry['mean_checks_saved']:.0f}%"
        print(line)
    print(f"\nwrote {args.out}/records.csv")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "info":
            return _cmd_info()
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "bench":
            return _cmd_bench_run(args)
    except ManiplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
