"""Command-line entry point ``approx``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure in at
least one trial.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    ENV_OUTPUT_ROOT,
    PRESET_BUDGETS,
    PRESETS,
    ConfigError,
    ExperimentConfig,
    preset,
    run_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _load_config(path: str, overrides) -> ExperimentConfig:
    if path in PRESETS:
        cfg = preset(path)
        cfg.validate()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"no such config file or preset: {path}")
        cfg = ExperimentConfig.from_ini(p.read_text())
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args.config, args.set)
    outdir, failed = run_experiment(cfg, root=args.output_root, jobs=args.jobs, full=args.full)
    print(f"wrote {outdir}")
    if failed:
        print(f"{failed} trial(s) failed; see manifest.json", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.write:
        dest = Path(args.write)
        dest.mkdir(parents=True, exist_ok=True)
        for name in PRESETS:
            (dest / f"{name}.ini").write_text(preset(name).to_ini())
        print(f"wrote {len(PRESETS)} presets to {dest}")
        return EXIT_OK
    for name, cfg in PRESETS.items():
        print(f"{name}: {cfg.plot} {cfg.function} d={cfg.d} n={cfg.n} m={cfg.m_grid or cfg.m} "
              f"trials={cfg.trials} (full {cfg.full_trials}) budget~{PRESET_BUDGETS[name]}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load_config(args.config, args.set)
    print(f"ok: {cfg.experiment} ({cfg.plot}, {cfg.function})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="approx",
        description="Sparse polynomial approximation experiments.",
        epilog=f"Output root: --output-root, else ${ENV_OUTPUT_ROOT}, else ./approx-output.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file or preset name")
    run.add_argument("config")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    run.add_argument("--full", action="store_true", help="use the full trial count")
    run.add_argument("--output-root", default=None)
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config entry (repeatable)")
    run.set_defaults(func=_cmd_run)

    pre = sub.add_parser("presets", help="list presets or write them as config files")
    pre.add_argument("--write", metavar="DIR", default=None)
    pre.set_defaults(func=_cmd_presets)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
