"""Command line entry points.

kfnoc run CONFIG        one scenario, artifacts into --out
kfnoc compare CONFIG    the same workload under all four configurations
kfnoc sweep-vc CONFIG   static VC split sweep
kfnoc validate CONFIG   parse and sanity-check a config, print derived facts
kfnoc engines           list the simulation engines available here
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import simcore
from .config import ENGINES, MODES, ScenarioConfig, load_config
from .engine import available_engines
from .topology import build_topology
from .traffic import TrafficClass


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="scenario config (INI)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, help="override the seed")
    parser.add_argument("--engine", choices=ENGINES,
                        help="override the engine selection")
    parser.add_argument("--max-cycles", type=int, dest="max_cycles",
                        help="override the active cycle budget")


def _load_with_overrides(args) -> ScenarioConfig:
    config = load_config(args.config)
    overrides = {}
    for name in ("seed", "engine", "max_cycles"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
        overrides["pin_signal"] = None
        overrides["static_partition"] = None
    if overrides:
        config = replace(config, **overrides)
    return config


def _print_run(result: simcore.RunResult) -> None:
    sys.stdout.write(simcore.summary_text(result))


def _print_table(results, label: str, key) -> None:
    header = (label,) + simcore.SUMMARY_ROW_FIELDS
    rows = [[key(r)] + [simcore._fmt(getattr(r, f))
                        for f in simcore.SUMMARY_ROW_FIELDS]
            for r in results]
    widths = [max(len(header[i]), *(len(row[i]) for row in rows))
              for i in range(len(header))]
    line = "  ".join(h.ljust(widths[i]) for i, h in enumerate(header))
    print(line)
    print("-" * len(line))
    for row in rows:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))


def cmd_run(args) -> int:
    config = _load_with_overrides(args)
    result = simcore.run(config)
    written = simcore.write_run_outputs(result, args.out)
    _print_run(result)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_compare(args) -> int:
    config = _load_with_overrides(args)
    modes = tuple(args.modes.split(",")) if args.modes \
        else simcore.COMPARISON_MODES
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
    results = simcore.compare(config, modes)
    path = simcore.write_comparison(results, args.out)
    _print_table(results, "mode", lambda r: r.config.mode)
    print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_with_overrides(args)
    splits = tuple(args.splits.split(",")) if args.splits else None
    results = simcore.sweep_vc(config, splits)
    path = simcore.write_sweep(results, args.out)
    _print_table(results, "split", lambda r: r.config.static_partition)
    print(f"wrote {path}")
    return 0


def cmd_validate(args) -> int:
    config = load_config(args.config)
    topo = build_topology(config.width, config.height, config.placement,
                          config.subnet_count)
    print(f"mode: {config.mode}")
    print(f"mesh: {config.width}x{config.height} "
          f"(cpu {len(topo.cpu_nodes)}, gpu {len(topo.gpu_nodes)}, "
          f"mc {len(topo.mc_nodes)})")
    print(f"subnets: {config.subnet_count}")
    print(f"vcs_per_port: {config.vcs_per_port}, "
          f"buffer_depth: {config.buffer_depth}")
    for cls, name in ((TrafficClass.CPU, "cpu"), (TrafficClass.GPU, "gpu")):
        print(f"{name} request flits: {config.request_flits_for(cls)}, "
              f"reply flits: {config.reply_flits_for(cls)}")
    print(f"epoch_len: {config.policy.epoch_len}, "
          f"warmup: {config.policy.warmup_cycles}, "
          f"max_cycles: {config.max_cycles}")
    print("ok")
    return 0


def cmd_engines(_args) -> int:
    for name in available_engines():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kfnoc",
        description="cycle-level mesh interconnect simulator with "
                    "filter-driven reconfiguration")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    _add_common(p)
    p.add_argument("--mode", choices=MODES, help="override the mode")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare",
                       help="same workload under each configuration")
    _add_common(p)
    p.add_argument("--modes", help="comma-separated subset of modes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-vc", help="static VC split sweep")
    _add_common(p)
    p.add_argument("--splits", help="comma-separated g:c splits")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a config and print facts")
    p.add_argument("config", help="scenario config (INI)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("engines", help="list available engines")
    p.set_defaults(func=cmd_engines)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
