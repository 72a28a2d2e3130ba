"""Command line: ``mpamp run | validate | presets``.

Exit codes: 0 success, 1 unreadable file, 2 invalid config, 3 divergence or
infeasible plan during the run.
"""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .amp import DivergenceError
from .config import PRESETS, ConfigError, apply_overrides, load_config, preset_config, validate_config
from .experiments import OUTPUT_ENV, resolve_output_dir, run_experiment
from .rate_dp import DpError

log = logging.getLogger("mpamp")


def _load(args):
    if args.preset:
        cfg, lines = preset_config(args.preset), {}
    else:
        cfg, lines = load_config(args.config)
    if args.set:
        cfg = apply_overrides(cfg, args.set)
        lines = {}
    return cfg, lines


def cmd_validate(args) -> int:
    try:
        cfg, lines = _load(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d)
        return 2
    diags = validate_config(cfg, lines)
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return 2 if diags else 0


def cmd_run(args) -> int:
    try:
        cfg, lines = _load(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return 2
    diags = validate_config(cfg, lines)
    if diags:
        for d in diags:
            print(d, file=sys.stderr)
        return 2
    out = resolve_output_dir(cfg, args.output)
    log.info("running %s (%s) -> %s", cfg.get("name", "config"), cfg["algorithm"], out)
    try:
        written = run_experiment(cfg, out)
    except (DivergenceError, DpError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    for name in sorted(written):
        print(written[name])
    return 0


def cmd_presets(args) -> int:
    if args.show:
        if args.show not in PRESETS:
            print(f"unknown preset {args.show!r}", file=sys.stderr)
            return 2
        print(yaml.safe_dump(preset_config(args.show), sort_keys=False), end="")
        return 0
    width = max(len(n) for n in PRESETS)
    for name, cfg in PRESETS.items():
        print(f"{name:<{width}}  {cfg['algorithm']:<12}  {cfg.get('description', '')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpamp", description="Multi-processor AMP experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add_source(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("config", nargs="?", help="YAML config file")
        g.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a field, e.g. problem.trials=5 (repeatable)")

    run = sub.add_parser("run", help="run an experiment and write CSV files")
    add_source(run)
    run.add_argument("-o", "--output", help=f"output directory (default: ${OUTPUT_ENV}/<name> "
                                            "or the config's output)")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config without running it")
    add_source(val)
    val.set_defaults(func=cmd_validate)

    pre = sub.add_parser("presets", help="list built-in presets")
    pre.add_argument("--show", metavar="NAME", help="print one preset as YAML")
    pre.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
