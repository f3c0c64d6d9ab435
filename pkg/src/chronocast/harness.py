"""Experiment orchestration: grid search, test-set comparison, future forecast."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import datetime as dt
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import boxjenkins as bj
from .checkpoint import save_trained
from .data import PreparedData, TimeSeries, load_series, window_and_split
from .metrics import CRITERIA, EvaluationReport, csv_header, csv_row, evaluate
from .models import (
    DISPLAY_NAMES, FIXED_ORIGIN, MODEL_NAMES, ONE_STEP, RECURSIVE, ROLLING,
    STATISTICAL, TrainedModel, config_to_dict, default_config, fit_model,
)

log = logging.getLogger(__name__)

CI_EPOCHS = 300
SCALES = ("normalized", "physical")


class GridSearchError(RuntimeError):
    def __init__(self, model: str, failures: list):
        detail = "; ".join(f"{c}: {e}" for c, e in failures[:5])
        super().__init__(f"all {len(failures)} {model} grid candidates failed ({detail})")
        self.failures = failures


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a comparison run."""

    input: str | None = None
    format: str = "carbon-monitor"
    window_length: int = 3
    ratios: tuple = (0.8, 0.1, 0.1)
    models: dict = field(default_factory=lambda: {m: default_config(m) for m in MODEL_NAMES})
    grids: dict = field(default_factory=dict)
    seed: int = 0
    statistical_mode: str = FIXED_ORIGIN
    ml_mode: str = ONE_STEP
    profile: str = "full"
    paper_config: bool = False
    adf_prefilter: bool = False
    forecast_horizon: int = 92
    scales: tuple = SCALES

    def __post_init__(self):
        if not self.models:
            raise ValueError("experiment needs at least one model")
        unknown = set(self.models) - set(MODEL_NAMES)
        if unknown:
            raise ValueError(f"unknown model(s): {', '.join(sorted(unknown))}")
        for name, grid in self.grids.items():
            for axis, values in grid.items():
                if not values:
                    raise ValueError(f"empty grid axis {name}.{axis}")
        if self.statistical_mode not in (FIXED_ORIGIN, ROLLING):
            raise ValueError(f"unknown statistical mode {self.statistical_mode!r}")
        if self.ml_mode not in (ONE_STEP, RECURSIVE):
            raise ValueError(f"unknown ML mode {self.ml_mode!r}")
        if not self.scales or set(self.scales) - set(SCALES):
            raise ValueError(f"scales must be drawn from {SCALES}")
        if self.profile not in ("ci", "full"):
            raise ValueError("profile must be 'ci' or 'full'")

    @property
    def epochs_override(self) -> int | None:
        return CI_EPOCHS if self.profile == "ci" else None

    def to_dict(self) -> dict:
        return {
            "input": None if self.input is None else os.path.basename(str(self.input)),
            "format": self.format,
            "window_length": self.window_length,
            "ratios": list(self.ratios),
            "models": {k: config_to_dict(v) for k, v in self.models.items()},
            "grids": {k: {a: [list(x) if isinstance(x, tuple) else x for x in v] for a, v in g.items()}
                      for k, g in self.grids.items()},
            "seed": self.seed,
            "statistical_mode": self.statistical_mode,
            "ml_mode": self.ml_mode,
            "profile": self.profile,
            "paper_config": self.paper_config,
            "adf_prefilter": self.adf_prefilter,
            "forecast_horizon": self.forecast_horizon,
            "scales": list(self.scales),
        }


def default_grids() -> dict:
    arima = {"p": [0, 1, 2, 3], "d": [0, 1, 2], "q": [0, 1, 2, 3]}
    return {
        "arima": dict(arima),
        "sarimax": dict(arima),
        "ann": {"hidden": [(8, 8), (12, 12), (16, 16)]},
        "lstm": {"hidden": [(32, 32), (50, 50), (64, 64)]},
        "rf": {"max_depth": [10, 20, None]},
    }


def make_experiment(paper_config: bool = False, profile: str = "full", seed: int = 0,
                    models=MODEL_NAMES, **kwargs) -> ExperimentConfig:
    """Default grids, or the single published configuration per model when ``paper_config``."""
    grids = {} if paper_config else {m: g for m, g in default_grids().items() if m in models}
    return ExperimentConfig(
        models={m: default_config(m) for m in models}, grids=grids, seed=seed,
        profile=profile, paper_config=paper_config, **kwargs,
    )


# -- INI experiment files ---------------------------------------------------------

EXPERIMENT_KEYS = {
    "input", "format", "window_length", "ratios", "models", "seed", "statistical_mode", "ml_mode",
    "profile", "paper_config", "adf_prefilter", "forecast_horizon", "scales",
}


def _parse_value(text: str):
    t = text.strip()
    if t.lower() in ("none", "null", ""):
        return None
    if t.lower() in ("true", "yes", "on"):
        return True
    if t.lower() in ("false", "no", "off"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _parse_list(text: str) -> list:
    return [_parse_value(v) for v in text.split(",")]


def _coerce(cfg, key: str, value):
    fld = {f.name: f for f in dataclasses.fields(cfg)}.get(key)
    if fld is None:
        raise ValueError(f"unknown option {key!r} for {type(cfg).__name__}")
    current = getattr(cfg, key)
    if isinstance(current, tuple):
        return tuple(value) if isinstance(value, list) else (value,)
    return value


def parse_experiment(text: str, base_dir: str | os.PathLike | None = None) -> ExperimentConfig:
    """Parse the INI experiment schema (see README)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    ex = cp["experiment"] if cp.has_section("experiment") else {}
    unknown = set(ex) - EXPERIMENT_KEYS
    if unknown:
        raise ValueError(f"unknown [experiment] key(s): {', '.join(sorted(unknown))}")
    stray = set(cp.sections()) - {"experiment", *MODEL_NAMES}
    if stray:
        raise ValueError(f"unknown section(s): {', '.join(sorted(stray))}")
    paper = bool(_parse_value(ex.get("paper_config", "false")))
    profile = ex.get("profile", "full").strip()
    models = [m.strip() for m in ex.get("models", ",".join(MODEL_NAMES)).split(",") if m.strip()]
    kwargs = {}
    if "input" in ex:
        path = ex["input"].strip()
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        kwargs["input"] = path
    for key, conv in (("format", str), ("window_length", int), ("statistical_mode", str), ("ml_mode", str),
                      ("forecast_horizon", int)):
        if key in ex:
            kwargs[key] = conv(ex[key].strip())
    if "adf_prefilter" in ex:
        kwargs["adf_prefilter"] = bool(_parse_value(ex["adf_prefilter"]))
    if "scales" in ex:
        kwargs["scales"] = tuple(v.strip() for v in ex["scales"].split(","))
    if "ratios" in ex:
        kwargs["ratios"] = tuple(float(v) for v in ex["ratios"].split(","))
    seed = int(ex.get("seed", 0))
    cfg = make_experiment(paper, profile, seed, models, **kwargs)

    for name in models:
        if not cp.has_section(name):
            continue
        section = cp[name]
        updates, grid = {}, {}
        for key, raw in section.items():
            if key.startswith("grid."):
                axis = key[5:]
                if axis in ("width", "units"):
                    depth = len(cfg.models[name].hidden)
                    grid["hidden"] = [(int(v),) * depth for v in _parse_list(raw)]
                else:
                    _coerce(cfg.models[name], axis, None)
                    grid[axis] = _parse_list(raw)
            elif key in ("order", "seasonal_order"):
                vals = [int(v) for v in raw.split(",")]
                names = ("p", "d", "q") if key == "order" else ("P", "D", "Q", "s")
                if len(vals) != len(names):
                    raise ValueError(f"{name}.{key} needs {len(names)} integers")
                updates.update(zip(names, vals))
            else:
                value = _parse_list(raw) if "," in raw else _parse_value(raw)
                updates[key] = _coerce(cfg.models[name], key, value)
        cfg.models[name] = dataclasses.replace(cfg.models[name], **updates)
        if grid:
            cfg.grids[name] = grid
    return ExperimentConfig(**{f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)})


def load_experiment(path) -> ExperimentConfig:
    p = Path(path)
    return parse_experiment(p.read_text(encoding="utf-8"), base_dir=p.parent)


# -- grid search ----------------------------------------------------------------------


@dataclass
class GridResult:
    best_config: object
    best_score: float
    best_model: TrainedModel
    scores: list  # (candidate dict, validation mse or error text)


def _candidates(base, grid: dict):
    axes = list(grid)
    for combo in itertools.product(*(grid[a] for a in axes)):
        values = {a: (tuple(v) if isinstance(v, list) else v) for a, v in zip(axes, combo)}
        yield values, dataclasses.replace(base, **values)


def _adf_d(values: np.ndarray, choices) -> int:
    for d in sorted(choices):
        series = np.diff(values, n=d) if d else values
        if len(series) >= 20 and bj.adf_test(series).reject:
            return d
    return max(choices)


def validation_score(tm: TrainedModel, prepared: PreparedData, stat_mode: str = FIXED_ORIGIN) -> float:
    """Normalized-scale validation MSE."""
    if tm.statistical:
        pos = prepared.target_positions("validation")
        _, norm = tm.predict_positions(pos.start, pos.stop, stat_mode)
        _, y_val = prepared.samples("validation")
        return float(np.mean((norm - y_val) ** 2))
    return float(tm.meta["validation_mse"])


def grid_search(name: str, base_config, grid: dict | None, prepared: PreparedData, *, seed: int = 0,
                epochs: int | None = None, stat_mode: str = FIXED_ORIGIN, adf_prefilter: bool = False) -> GridResult:
    """Exhaustive search by validation MSE; ties keep the earliest candidate."""
    grid = dict(grid or {})
    if adf_prefilter and name in ("arima", "sarimax") and "d" in grid:
        train_raw = prepared.raw_until(prepared.target_positions("validation").start)
        grid["d"] = [_adf_d(train_raw, grid["d"])]
    val_start = prepared.target_positions("validation").start
    if len(prepared.validation) == 0:
        raise ValueError("grid search needs a non-empty validation split")
    best = None
    scores, failures = [], []
    for values, cfg in _candidates(base_config, grid):
        try:
            tm = fit_model(name, cfg, prepared, fit_end=val_start, seed=seed, epochs=epochs)
            score = validation_score(tm, prepared, stat_mode)
            if not math.isfinite(score):
                raise bj.ModelError("non-finite validation score")
        except Exception as exc:  # noqa: BLE001 - every candidate failure is recorded
            failures.append((values, str(exc)))
            scores.append((values, f"error: {exc}"))
            continue
        scores.append((values, score))
        if best is None or score < best[1]:
            best = (cfg, score, tm)
    if best is None:
        raise GridSearchError(name, failures)
    return GridResult(best[0], best[1], best[2], scores)


# -- comparison -----------------------------------------------------------------------


@dataclass
class ComparisonTable:
    rows: dict  # scale -> list[EvaluationReport]
    best: dict  # scale -> {criterion: model, "overall": model}

    def to_dict(self) -> dict:
        return {
            "rows": {s: [r.to_dict() for r in rows] for s, rows in self.rows.items()},
            "best": self.best,
        }

    def row(self, model: str, scale: str = "normalized") -> EvaluationReport:
        for r in self.rows[scale]:
            if r.model_name == model:
                return r
        raise KeyError(model)


def rank(reports: list[EvaluationReport]) -> dict:
    """Per-criterion winners and an overall winner by majority; ties broken by MSE."""
    if not reports:
        return {}
    winners = {}
    for c in CRITERIA:
        valid = [r for r in reports if getattr(r, c) is not None]
        if not valid:
            continue
        if c == "r2":
            winners[c] = max(valid, key=lambda r: r.r2).model_name
        else:
            winners[c] = min(valid, key=lambda r: getattr(r, c)).model_name
    wins = {r.model_name: sum(1 for w in winners.values() if w == r.model_name) for r in reports}
    top = max(wins.values())
    tied = [r for r in reports if wins[r.model_name] == top]
    winners["overall"] = min(tied, key=lambda r: r.mse).model_name
    return winners


def build_table(reports: dict) -> ComparisonTable:
    """``reports``: model -> {scale: EvaluationReport}."""
    rows = {s: [reports[m][s] for m in reports] for s in SCALES}
    return ComparisonTable(rows, {s: rank(rows[s]) for s in SCALES})


@dataclass
class Trace:
    model: str
    dates: list
    actual: np.ndarray
    predicted: np.ndarray
    actual_normalized: np.ndarray
    predicted_normalized: np.ndarray
    mode: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    prepared: PreparedData
    table: ComparisonTable
    traces: dict
    trained: dict
    selections: dict
    failures: dict
    forecast: tuple | None = None  # (model, dates, values)

    def to_dict(self, generated_at: str | None = None) -> dict:
        p = self.prepared
        out = {
            "metadata": {"generated_at": generated_at, "tool": "chronocast"},
            "config": self.config.to_dict(),
            "data": {
                "first_date": p.series.first_date.isoformat(),
                "last_date": p.series.last_date.isoformat(),
                "count": len(p.series),
                "samples": p.n_samples,
                "split": {k: [p.split(k).start, p.split(k).stop] for k in ("train", "validation", "test")},
                "normalizer": {"train_min": p.normalizer.train_min, "train_max": p.normalizer.train_max},
            },
            "models": {},
        }
        for name in self.config.models:
            entry = {"display_name": DISPLAY_NAMES[name]}
            if name in self.failures:
                entry.update(status="failed", error=self.failures[name])
            else:
                sel = self.selections[name]
                tm = self.trained[name]
                entry.update(
                    status="ok",
                    family="statistical" if name in STATISTICAL else "machine_learning",
                    forecast_mode=self.traces[name].mode,
                    config=config_to_dict(tm.config),
                    validation_mse=sel.best_score,
                    grid=[{"candidate": {k: list(v) if isinstance(v, tuple) else v for k, v in c.items()},
                           "validation_mse": s} for c, s in sel.scores],
                )
                if name in ("arima", "sarimax"):
                    entry["order"] = str(tm.model.order)
                    entry["calendar_exog"] = tm.config.calendar_exog
                    entry["flags"] = list(tm.model.flags)
                if name == "gm11":
                    entry["parameters"] = {"a": tm.model.a, "b": tm.model.b, "n_fit": tm.model.n_fit}
                if name in ("ann", "lstm"):
                    entry["best_epoch"] = tm.meta["epoch"]
                    entry["epochs"] = tm.meta["epochs"]
                    entry["n_params"] = tm.model.n_params
                if name == "rf":
                    lo, hi = float(np.min(p.samples("train")[1])), float(np.max(p.samples("train")[1]))
                    entry["prediction_bounds_normalized"] = [lo, hi]
            out["models"][name] = entry
        out["comparison"] = self.table.to_dict()
        if self.forecast is not None:
            model, dates, values = self.forecast
            out["forecast"] = {
                "model": model,
                "first_date": dates[0].isoformat(),
                "last_date": dates[-1].isoformat(),
                "horizon": len(dates),
            }
        return out


def _stat_fit_end(prepared: PreparedData) -> int:
    return prepared.target_positions("test").start


def run_model(name: str, cfg: ExperimentConfig, prepared: PreparedData) -> tuple[GridResult, TrainedModel, Trace]:
    base = cfg.models[name]
    sel = grid_search(
        name, base, cfg.grids.get(name), prepared, seed=cfg.seed, epochs=cfg.epochs_override,
        stat_mode=cfg.statistical_mode, adf_prefilter=cfg.adf_prefilter,
    )
    pos = prepared.target_positions("test")
    if name in STATISTICAL:
        tm = fit_model(name, sel.best_config, prepared, fit_end=pos.start, seed=cfg.seed)
        mode = cfg.statistical_mode
    else:
        tm = sel.best_model
        mode = cfg.ml_mode
    phys, norm = tm.predict_positions(pos.start, pos.stop, mode)
    dates = [dt.date.fromordinal(int(d)) for d in prepared.series.days[pos.start:pos.stop]]
    trace = Trace(name, dates, np.asarray(prepared.series.values[pos.start:pos.stop]), phys,
                  np.asarray(prepared.normalized[pos.start:pos.stop]), norm, mode)
    return sel, tm, trace


def evaluate_trace(trace: Trace) -> dict:
    return {
        "normalized": evaluate(trace.actual_normalized, trace.predicted_normalized,
                               model_name=trace.model, split_name="test", scale="normalized"),
        "physical": evaluate(trace.actual, trace.predicted,
                             model_name=trace.model, split_name="test", scale="physical"),
    }


def run_experiment(cfg: ExperimentConfig, series: TimeSeries | None = None) -> ExperimentResult:
    if series is None:
        if cfg.input is None:
            raise ValueError("experiment has no input data")
        series = load_series(cfg.input, cfg.format)
    prepared = window_and_split(series, cfg.window_length, cfg.ratios)
    traces, trained, selections, failures, reports = {}, {}, {}, {}, {}
    for name in cfg.models:
        log.info("running %s", name)
        try:
            sel, tm, trace = run_model(name, cfg, prepared)
            reports[name] = evaluate_trace(trace)
        except Exception as exc:  # noqa: BLE001 - isolate per-model failures
            log.warning("%s failed: %s", name, exc)
            failures[name] = f"{type(exc).__name__}: {exc}"
            continue
        selections[name], trained[name], traces[name] = sel, tm, trace
    table = build_table(reports)
    result = ExperimentResult(cfg, prepared, table, traces, trained, selections, failures)
    if reports and cfg.forecast_horizon > 0:
        best = table.best["normalized"]["overall"]
        dates, values = forecast_future(trained[best], cfg.forecast_horizon)
        result.forecast = (best, dates, values)
    return result


def forecast_future(tm: TrainedModel, horizon_days: int) -> tuple[list, np.ndarray]:
    return tm.forecast_future(horizon_days)


# -- output files ---------------------------------------------------------------------------


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "actual", "predicted", "actual_normalized", "predicted_normalized"])
        for row in zip(trace.dates, trace.actual, trace.predicted, trace.actual_normalized, trace.predicted_normalized):
            w.writerow([row[0].isoformat(), *(repr(float(v)) for v in row[1:])])


def read_trace_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {"date": [dt.date.fromisoformat(r["date"]) for r in rows]}
    for key in ("actual", "predicted", "actual_normalized", "predicted_normalized"):
        out[key] = np.array([float(r[key]) for r in rows])
    return out


def write_forecast_csv(dates, values, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "predicted"])
        for d, v in zip(dates, values):
            w.writerow([d.isoformat(), repr(float(v))])


def write_comparison_csv(table: ComparisonTable, path, scales=SCALES) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header())
        for s in scales:
            for r in table.rows[s]:
                w.writerow(csv_row(r))


def write_outputs(result: ExperimentResult, out_dir, *, plots: bool = True, timestamp: bool = True) -> dict:
    """Write comparison.json/csv, traces, checkpoints, forecast.csv and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds") if timestamp else None
    paths = {"comparison.json": out / "comparison.json", "comparison.csv": out / "comparison.csv"}
    with open(paths["comparison.json"], "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(generated_at=stamp), fh, indent=2)
        fh.write("\n")
    write_comparison_csv(result.table, paths["comparison.csv"], result.config.scales)
    for name, trace in result.traces.items():
        paths[f"trace_{name}.csv"] = out / f"trace_{name}.csv"
        write_trace_csv(trace, paths[f"trace_{name}.csv"])
    for name, tm in result.trained.items():
        paths[f"{name}.ckpt"] = out / f"{name}.ckpt"
        save_trained(tm, paths[f"{name}.ckpt"])
    if result.forecast is not None:
        _, dates, values = result.forecast
        paths["forecast.csv"] = out / "forecast.csv"
        write_forecast_csv(dates, values, paths["forecast.csv"])
    if plots:
        from . import plotting

        paths.update(plotting.render_experiment(result, out))
    return paths


def strip_metadata(doc: dict) -> dict:
    """Copy of a comparison document without the volatile metadata block."""
    return {k: v for k, v in doc.items() if k != "metadata"}
