"""``chronocast`` command line.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 model error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import boxjenkins as bj
from .checkpoint import CheckpointError, load_trained, save_trained
from .data import DataError, describe, load_series, window_and_split
from .harness import (
    SCALES, ExperimentConfig, GridSearchError, Trace, evaluate_trace, load_experiment, make_experiment,
    run_experiment, run_model, write_forecast_csv, write_outputs, write_trace_csv,
)
from .metrics import CRITERIA, csv_header, csv_row
from .models import DISPLAY_NAMES, MODEL_NAMES, ONE_STEP, RECURSIVE, FIXED_ORIGIN, ROLLING, default_config
from .neural import TrainingError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3
SEED_ENV = "CHRONOCAST_SEED"

log = logging.getLogger("chronocast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chronocast", description="Daily emissions forecasting toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(p, required=False):
        p.add_argument("--input", required=required, help="input CSV")
        p.add_argument("--format", default=None, choices=("carbon-monitor", "tidy"),
                       help="input layout (default carbon-monitor)")

    def run_flags(p):
        data_flags(p)
        p.add_argument("--config", help="INI experiment file")
        p.add_argument("--seed", type=int, help=f"master seed (overrides ${SEED_ENV} and the config)")
        p.add_argument("--paper-config", action="store_true", help="use the published single configuration per model")
        p.add_argument("--profile", choices=("ci", "full"), help="ci caps training at 300 epochs")
        p.add_argument("--output-dir", default=".", help="where result files go")
        p.add_argument("--scale", choices=("normalized", "physical", "both"), default=None)
        p.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    p = sub.add_parser("stats", help="descriptive statistics of the daily series")
    data_flags(p, required=True)
    p.add_argument("--output-dir", help="also write stats.csv here")

    p = sub.add_parser("prepare", help="normalize, window and split; write prepared.csv")
    data_flags(p, required=True)
    p.add_argument("--window-length", type=_positive, default=3)
    p.add_argument("--output-dir", default=".")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("train", help="grid-search and fit one model; write <model>.ckpt")
    run_flags(p)
    p.add_argument("--model", required=True, choices=MODEL_NAMES)

    p = sub.add_parser("evaluate", help="score a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scale", choices=("normalized", "physical", "both"), default="both")
    p.add_argument("--mode", choices=(FIXED_ORIGIN, ROLLING, ONE_STEP, RECURSIVE), default=None)
    p.add_argument("--output-dir", help="also write trace_<model>.csv here")

    p = sub.add_parser("compare", help="run every configured model and rank them")
    run_flags(p)
    p.add_argument("--model", action="append", choices=MODEL_NAMES, help="restrict to this model (repeatable)")

    p = sub.add_parser("forecast", help="dated forecast past the end of the data")
    run_flags(p)
    p.add_argument("--checkpoint", help="trained model file; otherwise --model is trained on --input first")
    p.add_argument("--model", choices=MODEL_NAMES, default="lstm")
    p.add_argument("--horizon", type=_positive, default=92)
    return parser


# -- helpers ------------------------------------------------------------------------


def resolve_seed(flag: int | None, config_seed: int = 0) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return config_seed


def _scales(choice: str | None, default=SCALES) -> tuple:
    if choice is None:
        return tuple(default)
    return SCALES if choice == "both" else (choice,)


def experiment_from_args(args, models=None) -> ExperimentConfig:
    try:
        cfg = load_experiment(args.config) if args.config else make_experiment()
    except (OSError, configparser.Error, ValueError, TypeError) as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from None
    if models:
        cfg.models = {m: cfg.models.get(m, default_config(m)) for m in models}
        cfg.grids = {m: g for m, g in cfg.grids.items() if m in models}
    if args.paper_config:
        cfg.paper_config = True
        cfg.models = {m: default_config(m) for m in cfg.models}
        cfg.grids = {}
    changes = {"seed": resolve_seed(args.seed, cfg.seed)}
    if args.input:
        changes["input"] = args.input
    if args.format:
        changes["format"] = args.format
    if args.profile:
        changes["profile"] = args.profile
    if args.scale:
        changes["scales"] = _scales(args.scale)
    try:
        cfg = dataclasses.replace(cfg, **changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cfg.input is None:
        raise UsageError("no input data: pass --input or set input in the config")
    return cfg


def _print_reports(reports, out=None) -> None:
    w = csv.writer(out or sys.stdout, lineterminator="\n")
    w.writerow(csv_header())
    for r in reports:
        w.writerow(csv_row(r))


def _summary_table(table, scales) -> str:
    lines = []
    for scale in scales:
        lines.append(f"[{scale}]")
        lines.append(f"{'model':<9}" + "".join(f"{c:>14}" for c in CRITERIA))
        for r in table.rows[scale]:
            cells = "".join(f"{'n/a':>14}" if getattr(r, c) is None else f"{getattr(r, c):>14.6g}" for c in CRITERIA)
            lines.append(f"{DISPLAY_NAMES[r.model_name]:<9}{cells}")
        best = table.best.get(scale, {})
        if best:
            lines.append("best: " + ", ".join(f"{k}={DISPLAY_NAMES[v]}" for k, v in best.items()))
    return "\n".join(lines)


# -- subcommands ----------------------------------------------------------------------


def cmd_stats(args) -> int:
    series = load_series(args.input, args.format or "carbon-monitor")
    stats = describe(series).to_dict()
    for key, value in stats.items():
        print(f"{key},{value!r}")
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "stats.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["statistic", "value"])
            w.writerows((k, repr(v)) for k, v in stats.items())
    return EXIT_OK


def cmd_prepare(args) -> int:
    series = load_series(args.input, args.format or "carbon-monitor")
    prepared = window_and_split(series, args.window_length)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    role = np.full(len(series), "", dtype=object)
    for name in ("train", "validation", "test"):
        role[prepared.target_positions(name).start:prepared.target_positions(name).stop] = name
    with open(out / "prepared.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "value", "normalized", "target_split"])
        for d, v, z, r in zip(series.dates, series.values, prepared.normalized, role):
            w.writerow([d.isoformat(), repr(float(v)), repr(float(z)), r])
    if not args.no_plots:
        from .plotting import plot_series

        plot_series(series, out / "series.png")
    n = prepared.normalizer
    print(f"points {len(series)}  samples {prepared.n_samples}  "
          f"train/validation/test {len(prepared.train)}/{len(prepared.validation)}/{len(prepared.test)}")
    print(f"normalizer min {n.train_min!r} max {n.train_max!r}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = experiment_from_args(args, [args.model])
    series = load_series(cfg.input, cfg.format)
    prepared = window_and_split(series, cfg.window_length, cfg.ratios)
    sel, tm, trace = run_model(args.model, cfg, prepared)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_trained(tm, out / f"{args.model}.ckpt")
    write_trace_csv(trace, out / f"trace_{args.model}.csv")
    print(f"{DISPLAY_NAMES[args.model]}: validation MSE {sel.best_score:.6g} with "
          f"{json.dumps(dataclasses.asdict(sel.best_config))}")
    _print_reports([evaluate_trace(trace)[s] for s in cfg.scales])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    tm = load_trained(args.checkpoint)
    prepared = tm.prepared()
    pos = prepared.target_positions("test")
    phys, norm = tm.predict_positions(pos.start, pos.stop, args.mode)
    mode = args.mode or (FIXED_ORIGIN if tm.statistical else ONE_STEP)
    trace = Trace(tm.name, prepared.series.dates[pos.start:pos.stop], prepared.series.values[pos.start:pos.stop],
                  phys, prepared.normalized[pos.start:pos.stop], norm, mode)
    reports = evaluate_trace(trace)
    _print_reports([reports[s] for s in _scales(args.scale)])
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(trace, out / f"trace_{tm.name}.csv")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = experiment_from_args(args, args.model)
    result = run_experiment(cfg)
    for name, err in result.failures.items():
        print(f"warning: {name} failed: {err}", file=sys.stderr)
    if not result.trained:
        raise bj.ModelError("every model failed; see warnings above")
    write_outputs(result, args.output_dir, plots=not args.no_plots)
    print(_summary_table(result.table, cfg.scales))
    if result.forecast is not None:
        model, dates, _ = result.forecast
        print(f"forecast: {DISPLAY_NAMES[model]} {dates[0]}..{dates[-1]} -> forecast.csv")
    return EXIT_OK


def cmd_forecast(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.checkpoint:
        tm = load_trained(args.checkpoint)
    else:
        cfg = experiment_from_args(args, [args.model])
        series = load_series(cfg.input, cfg.format)
        _, tm, _ = run_model(args.model, cfg, window_and_split(series, cfg.window_length, cfg.ratios))
        save_trained(tm, out / f"{args.model}.ckpt")
    dates, values = tm.forecast_future(args.horizon)
    write_forecast_csv(dates, values, out / "forecast.csv")
    if not args.no_plots:
        from .plotting import plot_forecast

        plot_forecast(tm.series, dates, values, out / "forecast.png", label=f"{DISPLAY_NAMES[tm.name]} forecast")
    print(f"{DISPLAY_NAMES[tm.name]} forecast {dates[0]}..{dates[-1]} ({len(dates)} days) -> {out / 'forecast.csv'}")
    return EXIT_OK


COMMANDS = {
    "stats": cmd_stats,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "forecast": cmd_forecast,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (bj.ModelError, TrainingError, GridSearchError, CheckpointError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
