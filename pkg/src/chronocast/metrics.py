"""The five forecast-accuracy criteria: MSE, RMSE, MAE, MAPE (%) and R²."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

CRITERIA = ("mse", "rmse", "mae", "mape_percent", "r2")


@dataclass(frozen=True)
class EvaluationReport:
    """Metric values for one model on one split at one scale.

    ``mape_percent`` is ``None`` when an actual value is zero and ``r2`` is ``None``
    when the actuals have zero variance; ``flags`` names the reason.
    """

    mse: float
    rmse: float
    mae: float
    mape_percent: float | None
    r2: float | None
    n: int
    model_name: str = ""
    split_name: str = ""
    scale: str = ""
    flags: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d

    def labelled(self, model_name: str, split_name: str, scale: str) -> "EvaluationReport":
        return EvaluationReport(
            self.mse, self.rmse, self.mae, self.mape_percent, self.r2, self.n,
            model_name, split_name, scale, self.flags,
        )


def evaluate(actual, predicted, *, model_name: str = "", split_name: str = "", scale: str = "") -> EvaluationReport:
    y = np.asarray(actual, dtype=float).ravel()
    yhat = np.asarray(predicted, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {len(y)} actual vs {len(yhat)} predicted")
    if len(y) == 0:
        raise ValueError("cannot evaluate an empty sequence")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise ValueError("actual and predicted values must be finite")

    n = len(y)
    err = y - yhat
    sse = float(np.dot(err, err))
    mse = sse / n
    flags = []

    if np.any(y == 0):
        mape = None
        flags.append("mape_undefined_zero_actual")
    else:
        mape = float(np.mean(np.abs(err / y))) * 100.0

    centred = y - np.mean(y)
    sst = float(np.dot(centred, centred))
    if sst == 0.0:
        r2 = None
        flags.append("r2_undefined_constant_actual")
    else:
        r2 = 1.0 - sse / sst

    return EvaluationReport(
        mse=mse,
        rmse=math.sqrt(mse),
        mae=float(np.mean(np.abs(err))),
        mape_percent=mape,
        r2=r2,
        n=n,
        model_name=model_name,
        split_name=split_name,
        scale=scale,
        flags=tuple(flags),
    )


def csv_header() -> list[str]:
    return ["model", "split", "scale", "n", *CRITERIA, "flags"]


def csv_row(report: EvaluationReport) -> list:
    def cell(v):
        return "" if v is None else repr(float(v))

    return [
        report.model_name, report.split_name, report.scale, report.n,
        *(cell(getattr(report, c)) for c in CRITERIA),
        ";".join(report.flags),
    ]
