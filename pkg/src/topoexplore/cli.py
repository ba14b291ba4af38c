"""Command line entry point: ``explore run | compare | validate``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path as FsPath

from .errors import ExploreError, ScenarioError
from .harness import run_episode
from .plotting import compare_figure, save_svg
from .report import episode_summary, export_report, write_log, write_summary
from .scenario import load_scenario, resolve_scenario_path

log = logging.getLogger("topoexplore")


def _load(arg: str):
    return load_scenario(resolve_scenario_path(arg))


def _run_one(cfg, env, out: FsPath, stem: str):
    result = run_episode(cfg, env)
    csv_path, svg_path = export_report(result.metrics, out / f"{stem}.csv", title=f"{cfg.name} ({cfg.planner_kind})")
    log_path = write_log(result.log_records, out / f"{stem}.log.jsonl")
    return result, (csv_path, svg_path, log_path)


def _print_summary(summary: dict, files) -> None:
    print("---")
    for k, v in summary.items():
        print(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")
    for f in files:
        print(f"wrote: {f}")
    print("---")


def cmd_run(args) -> int:
    cfg, env = _load(args.scenario)
    cfg = cfg.with_planner(args.planner)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = FsPath(args.out)
    result, files = _run_one(cfg, env, out, cfg.planner_kind)
    _print_summary(episode_summary(result), files)
    return 0 if result.metrics.status == "done" else 1


def cmd_compare(args) -> int:
    cfg, env = _load(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = FsPath(args.out)
    summaries, metrics, files = [], {}, []
    for kind in ("proposed", "greedy_baseline"):
        result, fs = _run_one(cfg.with_planner(kind), env, out, kind)
        summaries.append(episode_summary(result))
        metrics[kind] = result.metrics
        files += fs
    d_prop, d_greedy = (s["distance_at_95_m"] for s in summaries)
    ratio = d_prop / d_greedy if math.isfinite(d_prop) and math.isfinite(d_greedy) and d_greedy > 0 else math.nan
    files.append(write_summary(summaries, out / "compare.csv", extra={"distance_at_95_ratio": ratio}))
    fig_path = out / "compare.svg"
    save_svg(compare_figure(metrics, title=cfg.name), fig_path)
    files.append(fig_path)
    for s in summaries:
        _print_summary(s, ())
    print(f"distance_at_95_ratio: {ratio:.6g}")
    for f in files:
        print(f"wrote: {f}")
    return 0


def cmd_validate(args) -> int:
    try:
        cfg, env = _load(args.scenario)
    except ScenarioError as exc:
        problems = exc.problems or [str(exc)]
        print(f"invalid: {args.scenario}")
        for p in problems:
            print(f"  - {p}")
        return 2
    print(f"ok: {cfg.name} ({env.reachable_count} reachable free voxels)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="explore", description="Keyframe-graph exploration simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one episode and write CSV, log and SVG")
    r.add_argument("scenario")
    r.add_argument("--out", required=True)
    r.add_argument("--planner", choices=("proposed", "greedy"), default="proposed")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run both planners and write a paired report")
    c.add_argument("scenario")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ExploreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
