"""Command-line entry point: run scenarios, export tables, render reports."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .runner import export_run, run_scenario
from .scenario import ScenarioError, parse_scenario

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _apply_log_levels(settings) -> None:
    logging.basicConfig(
        format="%(levelname)-7s %(name)s: %(message)s", level=logging.WARNING)
    for setting in settings or ():
        if "=" in setting:
            module, _, level = setting.partition("=")
            logger_name = f"lorawansim.{module}" if not module.startswith(
                "lorawansim") else module
        else:
            logger_name, level = "lorawansim", setting
        numeric = getattr(logging, level.upper(), None)
        if not isinstance(numeric, int):
            raise ValueError(f"unknown log level {level!r}")
        logging.getLogger(logger_name).setLevel(numeric)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorawansim",
        description="Discrete-event LoRa/LoRaWAN network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and export its tables")
    run.add_argument("scenario", help="path to a scenario YAML file")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario PRNG seed")
    run.add_argument("--length", type=float, default=None, metavar="S",
                     help="override the simulated duration in seconds")
    run.add_argument("--out", default="out", metavar="DIR",
                     help="output directory for CSV tables (default: ./out)")
    run.add_argument("--log-level", action="append", metavar="MODULE=LEVEL",
                     help="e.g. phy=DEBUG or just DEBUG; repeatable")
    run.add_argument("--figures", action="store_true",
                     help="also render report figures into the output directory")

    report = sub.add_parser(
        "report", help="render figures from previously exported tables")
    report.add_argument("tables", help="directory containing the exported CSVs")
    report.add_argument("--out", default=None, metavar="DIR",
                        help="figure output directory (default: same as tables)")
    report.add_argument("--log-level", action="append",
                        metavar="MODULE=LEVEL")
    return parser


def _cmd_run(args) -> int:
    scenario_path = Path(args.scenario)
    try:
        text = scenario_path.read_text()
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        spec = parse_scenario(text)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None or args.length is not None:
        from dataclasses import replace
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.length is not None:
            overrides["length_s"] = args.length
        spec = replace(spec, **overrides)

    outputs = run_scenario(spec, firmware_root=scenario_path.parent)
    out_dir = Path(args.out)
    written = export_run(outputs, out_dir)
    if args.figures:
        from .report import render_figures
        written += render_figures(outputs, out_dir)
    for path in written:
        print(path)
    _print_summary(outputs)
    return EXIT_OK


def _print_summary(outputs) -> None:
    summary = outputs.summary
    if not len(summary):
        return
    print()
    print(summary.to_string(
        index=False,
        float_format=lambda v: f"{v:.4g}",
    ))


def _cmd_report(args) -> int:
    from .report import render_figures
    tables = Path(args.tables)
    out_dir = Path(args.out) if args.out else tables
    try:
        written = render_figures(tables, out_dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for path in written:
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_log_levels(args.log_level)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_report(args)
    except Exception as exc:  # runtime failures map to exit code 1
        log.error("run failed: %s", exc, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
