"""Command-line front end.

Subcommands: plan, validate, simulate, analyze, search, render, figure1.
Exit codes: 0 success, 1 validation failure, 2 usage/configuration error.
All outputs are pure functions of the config file and flags, so repeated runs
are byte-identical (the fuzz seed comes from ``ZEROPP_SEED`` when set).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .config import ConfigError, load_config, make_placement
from .costmodel import TABLE_METHODS, Method, figure1_curve, table2_row
from .planner import SearchSpace, report, search
from .render import RenderFormat, render_timeline
from .schedules import generate
from .simulation import simulate
from .tasks import ScheduleVariant, export_text, schedule_from_json, schedule_to_json
from .validation import fuzz_check, validate

DEFAULT_FUZZ_SEED = 20240817
DEFAULT_FIGURE1_BATCHES = "1,2,4,8,16,32,64,128,256"


def _write_or_print(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load(args):
    return load_config(args.config)


def _build(model, cfg, variant: str):
    placement = make_placement(cfg, model)
    sched = generate(model, cfg, placement, ScheduleVariant(variant))
    return placement, sched


def _cmd_plan(args) -> int:
    model, cfg, costs = _load(args)
    placement, sched = _build(model, cfg, args.variant)
    violations = validate(sched, placement, cfg)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        return 1
    result = simulate(sched, model, cfg, placement, costs)
    print(f"variant={args.variant} devices={sched.num_devices} "
          f"tasks={sched.task_count()}")
    print(f"makespan={result.makespan:.10g}")
    print(f"bubble_ratio={result.bubble_ratio:.6f}")
    print(f"peak_mem_per_device={max(result.peak_mem):.10g}")
    print(f"comm_bytes intra={result.comm_bytes_intra:.10g} "
          f"inter={result.comm_bytes_inter:.10g}")
    if args.out:
        payload = schedule_to_json(sched, model, cfg, costs)
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"schedule written to {args.out}")
    if args.text:
        sys.stdout.write(export_text(sched, result.task_times))
    return 0


def _cmd_validate(args) -> int:
    if args.schedule:
        with open(args.schedule, encoding="utf-8") as fh:
            payload = json.load(fh)
        try:
            sched, model, cfg, _costs = schedule_from_json(payload)
        except (ValueError, KeyError) as exc:
            print(f"schedule file rejected: {exc}", file=sys.stderr)
            return 1
        placement = make_placement(cfg, model)
    else:
        model, cfg, _costs = _load(args)
        placement, sched = _build(model, cfg, args.variant)
    violations = validate(sched, placement, cfg)
    for v in violations:
        print(v)
    if violations:
        print(f"INVALID: {len(violations)} violation(s)")
        return 1
    print("OK")
    if args.fuzz:
        seed = int(os.environ.get("ZEROPP_SEED", DEFAULT_FUZZ_SEED))
        summary = fuzz_check(seed, trials=args.fuzz)
        print(f"fuzz: {summary.generated_clean}/{summary.trials} clean, "
              f"{summary.mutations_caught}/{summary.trials} mutations caught "
              f"(seed={seed})")
        if not summary.ok:
            for line in summary.failures[:10]:
                print(line)
            return 1
    return 0


def _cmd_simulate(args) -> int:
    model, cfg, costs = _load(args)
    placement, sched = _build(model, cfg, args.variant)
    result = simulate(sched, model, cfg, placement, costs)
    metrics = {
        "variant": args.variant,
        "makespan": result.makespan,
        "per_device_busy": result.per_device_busy,
        "per_device_idle": result.per_device_idle,
        "bubble_ratios": result.bubble_ratios,
        "peak_mem": result.peak_mem,
        "comm_bytes_intra": result.comm_bytes_intra,
        "comm_bytes_inter": result.comm_bytes_inter,
    }
    for key in ("makespan", "comm_bytes_intra", "comm_bytes_inter"):
        print(f"{key}={metrics[key]:.10g}")
    for d in range(sched.num_devices):
        print(f"d{d} busy={result.per_device_busy[d]:.10g} "
              f"idle={result.per_device_idle[d]:.10g} "
              f"bubble={result.bubble_ratios[d]:.6f} "
              f"peak_mem={result.peak_mem[d]:.10g}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _method_cfg(method: Method, cfg):
    """Closed-form rows for single-stage methods need V=1 regardless of config."""
    from dataclasses import replace

    from .config import RecomputeMode

    if method in (Method.GPIPE, Method.ONE_F_ONE_B):
        return replace(cfg, stages_per_device=1, recompute=RecomputeMode.NONE)
    return cfg


def _cmd_analyze(args) -> int:
    model, cfg, _costs = _load(args)
    if args.methods == "all":
        methods = list(TABLE_METHODS)
    else:
        methods = [Method(name.strip()) for name in args.methods.split(",")]
    lines = ["method,bubble_ratio,weight_mem,activation_mem,"
             "comm_volume_per_block,crossover"]
    for method in methods:
        row = table2_row(method, model, _method_cfg(method, cfg))
        lines.append(
            f"{row.method.value},{row.bubble_ratio:.10g},{row.weight_mem:.10g},"
            f"{row.activation_mem:.10g},{row.comm_volume_per_block:.10g},"
            f"{int(row.crossover_satisfied)}"
        )
    _write_or_print("\n".join(lines) + "\n", args.csv)
    return 0


def _cmd_search(args) -> int:
    model, cfg, costs = _load(args)
    cap = math.inf if args.mem_cap_gb is None else args.mem_cap_gb * 2**30
    space = SearchSpace(model=model, base=cfg, costs=costs, memory_cap=cap)
    plan = search(space)
    csv_text, summary = report(plan)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    print(summary)
    return 0


def _cmd_render(args) -> int:
    model, cfg, costs = _load(args)
    placement, sched = _build(model, cfg, args.variant)
    result = simulate(sched, model, cfg, placement, costs)
    text = render_timeline(result, sched, RenderFormat(args.format))
    _write_or_print(text, args.out)
    return 0


def _cmd_figure1(args) -> int:
    model, _cfg, _costs = _load(args)
    batches = [int(b) for b in args.batches.split(",") if b.strip()]
    points = figure1_curve(model, batches)
    lines = ["batch,tp_bytes_per_gpu,sharded_dp_bytes_per_gpu"]
    for batch, tp, sharded in points:
        lines.append(f"{batch},{tp:.10g},{sharded:.10g}")
    _write_or_print("\n".join(lines) + "\n", args.csv)
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zeroppsim",
        description="Schedule generator, simulator, and planner for "
                    "pipeline-parallel training with intra-node sharding.",
    )
    sub = parser.add_subparsers(dest="command")
    variants = [v.value for v in ScheduleVariant]

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        return p

    p = add("plan", "generate, validate, and simulate one schedule")
    p.add_argument("--variant", default="zeropp", choices=variants)
    p.add_argument("--out", help="write the schedule as JSON")
    p.add_argument("--text", action="store_true", help="dump the task table")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("validate", help="check a schedule against the task rules")
    p.add_argument("--config", help="JSON config file (generate fresh)")
    p.add_argument("--schedule", help="schedule JSON produced by 'plan --out'")
    p.add_argument("--variant", default="zeropp", choices=variants)
    p.add_argument("--fuzz", type=int, default=0, metavar="N",
                   help="also fuzz N random configs (seed: $ZEROPP_SEED)")
    p.set_defaults(func=_cmd_validate)

    p = add("simulate", "simulate and print timing/memory/traffic metrics")
    p.add_argument("--variant", default="zeropp", choices=variants)
    p.add_argument("--json", help="also write metrics as JSON")
    p.set_defaults(func=_cmd_simulate)

    p = add("analyze", "emit closed-form method comparison rows as CSV")
    p.add_argument("--methods", default="all",
                   help="'all' or comma list of method names")
    p.add_argument("--csv", help="output file (default: stdout)")
    p.set_defaults(func=_cmd_analyze)

    p = add("search", "exhaustive config search under a memory cap")
    p.add_argument("--mem-cap-gb", type=float, default=None,
                   help="per-device memory cap in GiB (default: unbounded)")
    p.add_argument("--csv", help="ranked candidate table (default: stdout)")
    p.set_defaults(func=_cmd_search)

    p = add("render", "draw the simulated timeline")
    p.add_argument("--variant", default="zeropp", choices=variants)
    p.add_argument("--format", default="ascii",
                   choices=[f.value for f in RenderFormat])
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=_cmd_render)

    p = add("figure1", "per-GPU traffic vs. batch size for TP and sharded DP")
    p.add_argument("--batches", default=DEFAULT_FIGURE1_BATCHES,
                   help="comma-separated global batch sizes")
    p.add_argument("--csv", help="output file (default: stdout)")
    p.set_defaults(func=_cmd_figure1)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "validate" and not args.schedule and not args.config:
        print("validate needs --config or --schedule", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"malformed JSON: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
