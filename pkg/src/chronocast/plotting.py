"""PNG figures for a comparison run. Uses the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .models import DISPLAY_NAMES  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}
UNITS = "Mt CO$_2$/day"


def _date_axis(ax) -> None:
    ax.xaxis.set_major_locator(mdates.AutoDateLocator())
    ax.xaxis.set_major_formatter(mdates.ConciseDateFormatter(ax.xaxis.get_major_locator()))


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_series(series, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(series.dates, series.values, lw=0.8, color="0.2")
        ax.set_ylabel(UNITS)
        _date_axis(ax)
        return _save(fig, Path(path))


def plot_test_fits(traces: dict, path) -> Path:
    """One panel per model: actual vs predicted over the test window."""
    names = list(traces)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(names), 1, figsize=(8, 1.9 * len(names)), sharex=True, squeeze=False)
        for ax, name in zip(axes[:, 0], names):
            tr = traces[name]
            ax.plot(tr.dates, tr.actual, lw=0.9, color="0.3", label="actual")
            ax.plot(tr.dates, tr.predicted, lw=1.1, color="C3", label="predicted")
            ax.set_title(f"{DISPLAY_NAMES.get(name, name)} ({tr.mode})", loc="left", fontsize=9)
            ax.set_ylabel(UNITS)
        axes[0, 0].legend(loc="upper right", ncol=2)
        _date_axis(axes[-1, 0])
        return _save(fig, Path(path))


def plot_forecast(series, dates, values, path, label: str = "forecast", history_days: int = 365) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 3))
        hist = series.dates[-history_days:]
        ax.plot(hist, series.values[-history_days:], lw=0.8, color="0.3", label="observed")
        ax.plot(dates, np.asarray(values), lw=1.2, color="C0", label=label)
        ax.axvline(series.last_date, color="0.6", ls="--", lw=0.8)
        ax.set_ylabel(UNITS)
        ax.legend(loc="upper left")
        _date_axis(ax)
        return _save(fig, Path(path))


def render_experiment(result, out_dir) -> dict:
    out = Path(out_dir)
    paths = {"series.png": plot_series(result.prepared.series, out / "series.png")}
    if result.traces:
        paths["test_fits.png"] = plot_test_fits(result.traces, out / "test_fits.png")
    if result.forecast is not None:
        model, dates, values = result.forecast
        paths["forecast.png"] = plot_forecast(
            result.prepared.series, dates, values, out / "forecast.png",
            label=f"{DISPLAY_NAMES.get(model, model)} forecast",
        )
    return paths
