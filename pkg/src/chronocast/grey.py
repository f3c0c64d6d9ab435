"""GM(1,1) grey prediction model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEGENERATE_A = 1e-12


@dataclass(frozen=True)
class GreyModel:
    """Fitted GM(1,1): ``x0_j + a*z_j = b`` with initial condition ``x1``.

    ``-a`` is the development coefficient and ``b`` the grey action quantity.
    """

    a: float
    b: float
    x1: float
    n_fit: int

    def __post_init__(self):
        if self.n_fit < 4:
            raise ValueError("GM(1,1) needs n_fit >= 4")
        if not all(math.isfinite(v) for v in (self.a, self.b, self.x1)):
            raise ValueError("GM(1,1) parameters must be finite")

    def to_dict(self) -> dict:
        return {"model": "gm11", "a": self.a, "b": self.b, "x1": self.x1, "n_fit": self.n_fit}


def accumulate(x0) -> np.ndarray:
    x = np.asarray(x0, dtype=float)
    if x.ndim != 1 or len(x) == 0 or not np.all(np.isfinite(x)):
        raise ValueError("accumulate needs a nonempty finite 1-d sequence")
    return np.cumsum(x)


def inverse_accumulate(x1, first=None) -> np.ndarray:
    """First differences; ``first`` is prepended as the value preceding ``x1[0]``'s increment."""
    x = np.asarray(x1, dtype=float)
    if first is None:
        return np.concatenate(([x[0]], np.diff(x)))
    return np.diff(np.concatenate(([first], x)))


def mean_sequence(x1) -> np.ndarray:
    """Adjacent means z_j = (x1_{j-1} + x1_j)/2 for j = 2..n."""
    x = np.asarray(x1, dtype=float)
    if len(x) < 2:
        raise ValueError("mean_sequence needs at least 2 values")
    return 0.5 * (x[:-1] + x[1:])


def fit_gm11(x0) -> GreyModel:
    """Least-squares (a, b) over j = 2..n from the 2x2 normal equations."""
    x = np.asarray(x0, dtype=float)
    if x.ndim != 1 or len(x) < 4:
        raise ValueError("GM(1,1) needs at least 4 observations")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("GM(1,1) requires strictly positive finite values")

    z = mean_sequence(accumulate(x))
    y = x[1:]
    m = len(z)
    # regressors: (-z, 1)
    s_zz = float(np.dot(z, z))
    s_z = float(np.sum(z))
    s_zy = float(np.dot(z, y))
    s_y = float(np.sum(y))
    det = m * s_zz - s_z * s_z
    if not det > 1e-12 * max(1.0, m * s_zz):
        raise ValueError("singular GM(1,1) normal equations")
    a = (s_z * s_y - m * s_zy) / det
    b = (s_zz * s_y - s_z * s_zy) / det
    return GreyModel(a=a, b=b, x1=float(x[0]), n_fit=len(x))


def _decay_factor(a: float) -> float:
    # (e^a - 1)/a, -> 1 as a -> 0
    return math.expm1(a) / a


def response(model: GreyModel, j) -> np.ndarray:
    """Restored values x0_hat_j for 1-based times ``j`` (j = 1 returns x1)."""
    j = np.asarray(j, dtype=float)
    a, b, x1 = model.a, model.b, model.x1
    if abs(a) < DEGENERATE_A:
        out = np.full(j.shape, b)
    else:
        # (x1 - b/a) e^{-a(j-1)} (1 - e^a), rearranged to stay finite as a -> 0
        out = (b - a * x1) * _decay_factor(a) * np.exp(-a * (j - 1.0))
    return np.where(j == 1, x1, out)


def accumulated_response(model: GreyModel, j) -> np.ndarray:
    """Whitening-equation solution x1_hat_j = (x1 - b/a) e^{-a(j-1)} + b/a."""
    j = np.asarray(j, dtype=float)
    a, b, x1 = model.a, model.b, model.x1
    if abs(a) < DEGENERATE_A:
        return x1 + b * (j - 1.0)
    return (x1 - b / a) * np.exp(-a * (j - 1.0)) + b / a


def fitted_values(model: GreyModel) -> np.ndarray:
    return response(model, np.arange(1, model.n_fit + 1))


def predict_gm11(model: GreyModel, horizon: int) -> np.ndarray:
    """Out-of-sample values for j = n_fit+1 .. n_fit+horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return response(model, np.arange(model.n_fit + 1, model.n_fit + horizon + 1))
