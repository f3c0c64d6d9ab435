"""Per-family model configs and a uniform fitted-model wrapper.

A :class:`TrainedModel` carries the fitted parameters together with the
series, normalizer and split geometry it was built against, so it can score
any split or forecast past the end of the data on its own.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from . import boxjenkins as bj
from . import grey, neural
from .data import Normalizer, PreparedData, TimeSeries, future_days, window_and_split
from .forest import ForestConfig, fit_forest
from .lstm import LstmModel

STATISTICAL = ("gm11", "arima", "sarimax")
MACHINE_LEARNING = ("ann", "rf", "lstm")
MODEL_NAMES = STATISTICAL + MACHINE_LEARNING
DISPLAY_NAMES = {"gm11": "GM(1,1)", "arima": "ARIMA", "sarimax": "SARIMAX", "ann": "ANN", "rf": "RF", "lstm": "LSTM"}

FIXED_ORIGIN = "fixed-origin"
ROLLING = "rolling"
ONE_STEP = "one-step"
RECURSIVE = "recursive"


@dataclass(frozen=True)
class GreyConfig:
    fit_length: int | None = None


@dataclass(frozen=True)
class ArimaConfig:
    p: int = 0
    d: int = 1
    q: int = 3
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 0
    calendar_exog: bool = False

    @property
    def order(self) -> bj.ArimaOrder:
        return bj.ArimaOrder(self.p, self.d, self.q, self.P, self.D, self.Q, self.s)


@dataclass(frozen=True)
class AnnConfig:
    hidden: tuple = (12, 12)
    activation: str = "relu"
    epochs: int = 3000
    batch_size: int = 32
    learning_rate: float = 1e-3


@dataclass(frozen=True)
class LstmConfig:
    hidden: tuple = (50, 50)
    hidden_relu: bool = True
    epochs: int = 3000
    batch_size: int = 32
    learning_rate: float = 1e-3


CONFIG_TYPES = {
    "gm11": GreyConfig,
    "arima": ArimaConfig,
    "sarimax": ArimaConfig,
    "ann": AnnConfig,
    "rf": ForestConfig,
    "lstm": LstmConfig,
}


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def config_from_dict(name: str, d: dict):
    cls = CONFIG_TYPES[name]
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in d:
            v = d[f.name]
            kwargs[f.name] = tuple(v) if isinstance(v, list) else v
    return cls(**kwargs)


def default_config(name: str):
    if name == "sarimax":
        return ArimaConfig(0, 1, 3, 0, 0, 0, 7)
    return CONFIG_TYPES[name]()


@dataclass
class TrainedModel:
    name: str
    config: object
    model: object
    series: TimeSeries
    normalizer: Normalizer
    window_length: int
    ratios: tuple
    fit_start: int = 0
    fit_end: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def statistical(self) -> bool:
        return self.name in STATISTICAL

    def prepared(self) -> PreparedData:
        return window_and_split(self.series, self.window_length, self.ratios)

    # -- statistical helpers --------------------------------------------------

    def _exog(self, days) -> np.ndarray | None:
        if self.name in ("arima", "sarimax") and self.config.calendar_exog:
            return bj.default_calendar_exog(days)
        return None

    def _stat_forecast(self, horizon: int) -> np.ndarray:
        """Fixed-origin forecast of positions fit_end .. fit_end+horizon-1."""
        if self.name == "gm11":
            n_fit = self.fit_end - self.fit_start
            j = np.arange(n_fit + 1, n_fit + horizon + 1)
            return grey.response(self.model, j)
        days = self.series.days[0] + np.arange(self.fit_end, self.fit_end + horizon)
        return bj.forecast(self.model, horizon, self._exog(days))

    def _stat_rolling(self, start: int, stop: int) -> np.ndarray:
        values = self.series.values
        if self.name == "gm11":
            out = np.empty(stop - start)
            length = self.fit_end - self.fit_start
            for k, t in enumerate(range(start, stop)):
                out[k] = grey.predict_gm11(grey.fit_gm11(values[t - length:t]), 1)[0]
            return out
        days = self.series.days
        return bj.one_step_predictions(
            self.model, values[:self.fit_end], values[start:stop],
            self._exog(days[:self.fit_end]), self._exog(days[start:stop]),
        )

    # -- scoring ------------------------------------------------------------------

    def predict_positions(self, start: int, stop: int, mode: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Predictions for series positions ``start..stop-1`` as (physical, normalized)."""
        if self.statistical:
            mode = mode or FIXED_ORIGIN
            if start != self.fit_end:
                raise ValueError(f"{self.name} was fitted up to position {self.fit_end}, not {start}")
            if mode == FIXED_ORIGIN:
                phys = self._stat_forecast(stop - start)
            elif mode == ROLLING:
                phys = self._stat_rolling(start, stop)
            else:
                raise ValueError(f"unknown statistical forecast mode {mode!r}")
            return phys, self.normalizer.normalize(phys)
        mode = mode or ONE_STEP
        norm_series = self.normalizer.normalize(self.series.values)
        w = self.window_length
        if mode == ONE_STEP:
            idx = np.arange(start, stop)[:, None] - w + np.arange(w)[None, :]
            norm = self.model.predict(norm_series[idx])
        elif mode == RECURSIVE:
            norm = neural.recursive_forecast(self.model.predict, norm_series[start - w:start], stop - start)
        else:
            raise ValueError(f"unknown ML forecast mode {mode!r}")
        norm = np.asarray(norm, dtype=float)
        return self.normalizer.denormalize(norm), norm

    def forecast_future(self, horizon: int) -> tuple[list[dt.date], np.ndarray]:
        """Dated physical-scale forecast for the days after the last observation."""
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        n = len(self.series)
        dates = future_days(self.series.last_date, horizon)
        if self.name == "gm11":
            n_fit = self.fit_end - self.fit_start
            offset = n - self.fit_end
            j = np.arange(n_fit + offset + 1, n_fit + offset + horizon + 1)
            return dates, grey.response(self.model, j)
        if self.name in ("arima", "sarimax"):
            all_days = np.concatenate((self.series.days, self.series.days[-1] + np.arange(1, horizon + 1)))
            exog = self._exog(all_days)
            moved = bj.update_state(self.model, self.series.values, None if exog is None else exog[:n])
            return dates, bj.forecast(moved, horizon, None if exog is None else exog[n:])
        norm_series = self.normalizer.normalize(self.series.values)
        norm = neural.recursive_forecast(self.model.predict, norm_series[n - self.window_length:], horizon)
        return dates, self.normalizer.denormalize(norm)


def fit_model(name: str, config, prepared: PreparedData, fit_end: int | None = None, seed: int = 0,
              epochs: int | None = None) -> TrainedModel:
    """Fit one model family.

    Statistical models use raw values at positions ``< fit_end``; ML models train
    on the training windows with best-validation checkpointing.
    """
    series = prepared.series
    tm = TrainedModel(name, config, None, series, prepared.normalizer, prepared.window_length,
                      tuple(prepared.ratios), seed=seed)
    if name in STATISTICAL:
        if fit_end is None:
            raise ValueError("statistical models need a fit_end position")
        start = 0
        if name == "gm11" and config.fit_length:
            start = max(0, fit_end - int(config.fit_length))
        tm.fit_start, tm.fit_end = start, fit_end
        values = series.values[start:fit_end]
        if name == "gm11":
            tm.model = grey.fit_gm11(values)
        else:
            exog = tm._exog(series.days[start:fit_end])
            tm.model = bj.fit(values, config.order, exog)
            tm.meta["flags"] = list(tm.model.flags)
        return tm

    tm.fit_end = prepared.train.stop + prepared.window_length
    if name == "rf":
        tm.model = fit_forest(*prepared.samples("train"), config)
        X_va, y_va = prepared.samples("validation")
        if len(y_va):
            tm.meta["validation_mse"] = float(np.mean((tm.model.predict(X_va) - y_va) ** 2))
        return tm

    n_epochs = config.epochs if epochs is None else epochs
    tcfg = neural.TrainConfig(epochs=n_epochs, batch_size=config.batch_size,
                              learning_rate=config.learning_rate, seed=seed)
    if name == "ann":
        model = neural.ann_network(seed, prepared.window_length, config.hidden, config.activation)
    elif name == "lstm":
        model = LstmModel(1, config.hidden, config.hidden_relu, seed)
    else:
        raise ValueError(f"unknown model {name!r}")
    result = neural.train_on(model, prepared, tcfg)
    tm.model = model
    tm.meta.update(
        epochs=n_epochs,
        epoch=result.best_epoch,
        validation_mse=result.best_validation_mse,
        final_train_mse=result.history[-1][1],
    )
    tm.meta["history"] = result.history
    return tm
