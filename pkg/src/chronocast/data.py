"""Ingestion, descriptive statistics, normalization, windowing and splitting."""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SECTORS = (
    "Power",
    "Industry",
    "Ground Transport",
    "Residential",
    "Domestic Aviation",
    "International Aviation",
)


class DataError(ValueError):
    """Raised for malformed, gappy or otherwise unusable input data."""


class ParseError(DataError):
    pass


class GapError(DataError):
    pass


class SchemaError(DataError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    """Gapless daily series. ``days`` holds proleptic-Gregorian ordinals."""

    days: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        days = np.asarray(self.days, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or days.shape != values.shape:
            raise DataError("days and values must be 1-d and of equal length")
        if len(values) == 0:
            raise DataError("empty series")
        if not np.all(np.isfinite(values)):
            raise DataError("series contains non-finite values")
        steps = np.diff(days)
        if np.any(steps <= 0):
            raise SchemaError("dates must be strictly increasing without duplicates")
        if np.any(steps != 1):
            k = int(np.flatnonzero(steps != 1)[0])
            missing = dt.date.fromordinal(int(days[k]) + 1)
            raise GapError(f"missing calendar day {missing.isoformat()}")
        days.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def dates(self) -> list[dt.date]:
        return [dt.date.fromordinal(int(d)) for d in self.days]

    @property
    def first_date(self) -> dt.date:
        return dt.date.fromordinal(int(self.days[0]))

    @property
    def last_date(self) -> dt.date:
        return dt.date.fromordinal(int(self.days[-1]))

    @classmethod
    def from_dates(cls, dates: Sequence[dt.date], values: Sequence[float]) -> "TimeSeries":
        return cls(np.array([d.toordinal() for d in dates], dtype=np.int64), np.asarray(values, float))


def _rows_from(source) -> list[dict]:
    """Accept a path, an open text stream, CSV text, or an iterable of dicts."""
    looks_like_path = isinstance(source, str) and (os.path.exists(source) or "\n" not in source and "," not in source)
    if isinstance(source, os.PathLike) or looks_like_path:
        try:
            with open(source, newline="", encoding="utf-8-sig") as fh:
                return list(csv.DictReader(fh))
        except OSError as exc:
            raise DataError(f"cannot read {os.fspath(source)}: {exc.strerror or exc}") from None
    if isinstance(source, str):
        return list(csv.DictReader(io.StringIO(source)))
    if hasattr(source, "read"):
        return list(csv.DictReader(source))
    return [dict(r) for r in source]


def _require_columns(rows: list[dict], columns: Iterable[str]) -> None:
    if not rows:
        raise DataError("empty series")
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")


def _parse_float(text: str, index: int) -> float:
    try:
        value = float(str(text).strip())
    except ValueError:
        raise ParseError(f"row {index}: cannot parse value {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"row {index}: non-finite value {text!r}")
    return value


def ingest_carbon_monitor(source) -> TimeSeries:
    """Sum the six Carbon Monitor sectors per day (``country,date,sector,value``, DD/MM/YYYY)."""
    rows = _rows_from(source)
    _require_columns(rows, ("country", "date", "sector", "value"))
    totals: dict[int, float] = {}
    seen: set[tuple[int, str]] = set()
    for i, row in enumerate(rows):
        try:
            day = dt.datetime.strptime(row["date"].strip(), "%d/%m/%Y").date().toordinal()
        except (ValueError, AttributeError):
            raise ParseError(f"row {i}: cannot parse date {row['date']!r} as DD/MM/YYYY") from None
        sector = row["sector"].strip()
        if sector not in SECTORS:
            raise SchemaError(f"row {i}: unknown sector {sector!r}")
        if (day, sector) in seen:
            raise SchemaError(f"row {i}: duplicate ({row['date']}, {sector})")
        seen.add((day, sector))
        totals[day] = totals.get(day, 0.0) + _parse_float(row["value"], i)
    days = sorted(totals)
    return TimeSeries(np.array(days, dtype=np.int64), np.array([totals[d] for d in days]))


def ingest_tidy(source) -> TimeSeries:
    """Read a ``date,value`` CSV with ISO dates, one row per day."""
    rows = _rows_from(source)
    _require_columns(rows, ("date", "value"))
    days, values = [], []
    for i, row in enumerate(rows):
        try:
            day = dt.date.fromisoformat(row["date"].strip()).toordinal()
        except (ValueError, AttributeError):
            raise ParseError(f"row {i}: cannot parse date {row['date']!r} as YYYY-MM-DD") from None
        days.append(day)
        values.append(_parse_float(row["value"], i))
    order = np.argsort(days, kind="stable")
    days = np.asarray(days, dtype=np.int64)[order]
    if np.any(np.diff(days) == 0):
        raise SchemaError("duplicate date rows")
    return TimeSeries(days, np.asarray(values, dtype=float)[order])


def load_series(path, fmt: str = "carbon-monitor") -> TimeSeries:
    if fmt in ("carbon-monitor", "carbon_monitor", "raw"):
        return ingest_carbon_monitor(path)
    if fmt == "tidy":
        return ingest_tidy(path)
    raise ValueError(f"unknown input format {fmt!r}")


@dataclass(frozen=True)
class DescriptiveStats:
    count: int
    maximum: float
    minimum: float
    mean: float
    median: float
    range: float
    skewness: float
    kurtosis: float
    standard_deviation: float
    standard_error: float
    total: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def describe(series: TimeSeries | Sequence[float]) -> DescriptiveStats:
    """Spreadsheet-style summary: sample std (n-1), adjusted skewness G1, excess kurtosis G2."""
    x = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    n = len(x)
    if n < 2:
        raise DataError("describe needs at least 2 values")
    mean = float(np.mean(x))
    dev = x - mean
    m2 = float(np.mean(dev**2))
    std = math.sqrt(float(np.sum(dev**2)) / (n - 1))
    if m2 > 0 and n >= 3:
        g1 = float(np.mean(dev**3)) / m2**1.5
        skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
    else:
        skew = float("nan") if m2 == 0 else 0.0
    if m2 > 0 and n >= 4:
        g2 = float(np.mean(dev**4)) / m2**2 - 3.0
        kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    else:
        kurt = float("nan")
    mx, mn = float(np.max(x)), float(np.min(x))
    return DescriptiveStats(
        count=n,
        maximum=mx,
        minimum=mn,
        mean=mean,
        median=float(np.median(x)),
        range=mx - mn,
        skewness=skew,
        kurtosis=kurt,
        standard_deviation=std,
        standard_error=std / math.sqrt(n),
        total=float(np.sum(x)),
    )


@dataclass(frozen=True)
class Normalizer:
    train_min: float
    train_max: float

    def __post_init__(self):
        if not (math.isfinite(self.train_min) and math.isfinite(self.train_max)):
            raise DataError("normalizer bounds must be finite")
        if not self.train_max > self.train_min:
            raise DataError("constant training range; cannot normalize")

    @property
    def span(self) -> float:
        return self.train_max - self.train_min

    def normalize(self, values):
        return (np.asarray(values, dtype=float) - self.train_min) / self.span

    def denormalize(self, values):
        return np.asarray(values, dtype=float) * self.span + self.train_min


def fit_normalizer(values) -> Normalizer:
    v = np.asarray(values.values if isinstance(values, TimeSeries) else values, dtype=float)
    if len(v) == 0:
        raise DataError("cannot fit a normalizer on no data")
    return Normalizer(float(np.min(v)), float(np.max(v)))


@dataclass(frozen=True)
class PreparedData:
    """Normalized series, supervised windows and chronological sample splits.

    Sample ``i`` uses normalized positions ``i .. i+window_length-1`` as input and
    position ``i+window_length`` as target. ``train``/``validation``/``test`` are
    half-open ranges over sample indices.
    """

    series: TimeSeries
    normalizer: Normalizer
    normalized: np.ndarray
    window_length: int
    X: np.ndarray
    y: np.ndarray
    train: range
    validation: range
    test: range
    ratios: tuple = field(default=(0.8, 0.1, 0.1))

    @property
    def n_samples(self) -> int:
        return len(self.y)

    def split(self, name: str) -> range:
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]

    def samples(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        r = self.split(name)
        return self.X[r.start:r.stop], self.y[r.start:r.stop]

    def target_positions(self, name: str) -> range:
        """Series positions of the targets of a split."""
        r = self.split(name)
        return range(r.start + self.window_length, r.stop + self.window_length)

    def raw_until(self, position: int) -> np.ndarray:
        """Physical values strictly before ``position``."""
        return np.asarray(self.series.values[:position])


def split_sizes(n: int, ratios=(0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_val = math.floor(ratios[1] * n + 1e-9)
    return n_train, n_val, n - n_train - n_val


def make_windows(values, window_length: int) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(values, dtype=float)
    n = len(v) - window_length
    if n < 1:
        raise DataError("series too short for the window length")
    idx = np.arange(n)[:, None] + np.arange(window_length)[None, :]
    return v[idx], v[window_length:]


def window_and_split(series: TimeSeries, window_length: int = 3, ratios=(0.8, 0.1, 0.1)) -> PreparedData:
    if window_length < 1:
        raise DataError("window_length must be positive")
    if len(series) <= window_length + 2:
        raise DataError(f"series of length {len(series)} too short for window {window_length}")
    n = len(series) - window_length
    n_train, n_val, _ = split_sizes(n, ratios)
    if n_train < 1:
        raise DataError("training split is empty")
    # raw values underlying the training samples: inputs and targets
    normalizer = fit_normalizer(series.values[: n_train + window_length])
    normalized = normalizer.normalize(series.values)
    normalized.setflags(write=False)
    X, y = make_windows(normalized, window_length)
    return PreparedData(
        series=series,
        normalizer=normalizer,
        normalized=normalized,
        window_length=window_length,
        X=X,
        y=y,
        train=range(0, n_train),
        validation=range(n_train, n_train + n_val),
        test=range(n_train + n_val, n),
        ratios=tuple(ratios),
    )


def future_days(last_day: int | dt.date, horizon: int) -> list[dt.date]:
    start = last_day.toordinal() if isinstance(last_day, dt.date) else int(last_day)
    return [dt.date.fromordinal(start + k) for k in range(1, horizon + 1)]
