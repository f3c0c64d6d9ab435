"""ARIMA / SARIMAX estimation by conditional sum of squares.

Polynomial conventions (backshift ``B``)::

    phi(B)   = 1 - phi_1 B - ... - phi_p B^p          Phi(B^s)   likewise
    theta(B) = 1 + theta_1 B + ... + theta_q B^q      Theta(B^s) likewise

    Phi(B^s) phi(B) (w_t - mu) = Theta(B^s) theta(B) e_t + zeta . X_t
    w_t = (1 - B^s)^D (1 - B)^d y_t
"""

from __future__ import annotations

import datetime as dt
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

# large-sample Dickey-Fuller critical values, constant-only regression
ADF_CRITICAL = {"1%": -3.43, "5%": -2.86, "10%": -2.57}

# chi-square 95% quantiles for df = 1..40
_CHI2_95 = (
    3.8415, 5.9915, 7.8147, 9.4877, 11.0705, 12.5916, 14.0671, 15.5073, 16.9190, 18.3070,
    19.6751, 21.0261, 22.3620, 23.6848, 24.9958, 26.2962, 27.5871, 28.8693, 30.1435, 31.4104,
    32.6706, 33.9244, 35.1725, 36.4150, 37.6525, 38.8851, 40.1133, 41.3371, 42.5570, 43.7730,
    44.9853, 46.1943, 47.3999, 48.6024, 49.8018, 50.9985, 52.1923, 53.3835, 54.5722, 55.7585,
)


class ModelError(RuntimeError):
    """Estimation failed."""


class ConvergenceError(ModelError):
    def __init__(self, message: str, objective: float):
        super().__init__(f"{message} (last objective {objective:.6g})")
        self.objective = objective


class EstimationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ArimaOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 0

    def __post_init__(self):
        if any(v < 0 for v in (self.p, self.d, self.q, self.P, self.D, self.Q, self.s)):
            raise ValueError("orders must be non-negative")
        if self.s == 0 and (self.P or self.D or self.Q):
            raise ValueError("seasonal orders need a season length s >= 2")
        if self.s == 1:
            raise ValueError("season length 1 is ordinary differencing; use d")

    @property
    def ar_lags(self) -> int:
        return self.p + self.P * self.s

    @property
    def ma_lags(self) -> int:
        return self.q + self.Q * self.s

    @property
    def diff_lags(self) -> int:
        return self.d + self.D * self.s

    @property
    def n_arma(self) -> int:
        return self.p + self.q + self.P + self.Q

    def as_tuple(self) -> tuple:
        return (self.p, self.d, self.q, self.P, self.D, self.Q, self.s)

    def __str__(self) -> str:
        base = f"({self.p},{self.d},{self.q})"
        if self.s:
            base += f"({self.P},{self.D},{self.Q})_{self.s}"
        return base


# -- differencing -------------------------------------------------------------


@dataclass(frozen=True)
class DiffState:
    """Leading values removed by each differencing pass, in application order."""

    d: int
    D: int
    s: int
    heads: tuple[tuple[float, ...], ...]


def difference(y, d: int = 0, D: int = 0, s: int = 0) -> tuple[np.ndarray, DiffState]:
    """Apply (1 - B^s)^D, then (1 - B)^d."""
    w = np.asarray(y, dtype=float)
    if D and s < 2:
        raise ValueError("seasonal differencing needs s >= 2")
    if len(w) <= d + D * s:
        raise ValueError(f"series of length {len(w)} too short for d={d}, D={D}, s={s}")
    heads = []
    for _ in range(D):
        heads.append(tuple(w[:s]))
        w = w[s:] - w[:-s]
    for _ in range(d):
        heads.append((float(w[0]),))
        w = np.diff(w)
    return w, DiffState(d, D, s, tuple(heads))


def undifference(diffed, state: DiffState) -> np.ndarray:
    y = np.asarray(diffed, dtype=float)
    if len(state.heads) != state.d + state.D:
        raise ValueError("differencing state does not match its orders")
    for head in reversed(state.heads[state.D:]):
        if len(head) != 1:
            raise ValueError("malformed ordinary-differencing head")
        y = np.cumsum(np.concatenate((head, y)))
    s = state.s
    for head in reversed(state.heads[: state.D]):
        if len(head) != s:
            raise ValueError("malformed seasonal-differencing head")
        out = np.empty(len(y) + s)
        out[:s] = head
        for t in range(len(y)):
            out[t + s] = y[t] + out[t]
        y = out
    return y


def differencing_polynomial(d: int, D: int, s: int) -> np.ndarray:
    """Coefficients of (1 - B)^d (1 - B^s)^D, lowest power first."""
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    if D:
        seasonal = np.zeros(s + 1)
        seasonal[0], seasonal[s] = 1.0, -1.0
        for _ in range(D):
            poly = np.convolve(poly, seasonal)
    return poly


def integrate(w_future, raw_tail, d: int, D: int, s: int) -> np.ndarray:
    """Continue a raw series from its last ``d + D*s`` values given future differenced values."""
    delta = differencing_polynomial(d, D, s)
    k = len(delta) - 1
    hist = list(np.asarray(raw_tail, dtype=float)[len(raw_tail) - k:] if k else [])
    if len(hist) < k:
        raise ValueError("raw tail too short to undo differencing")
    out = []
    for w in np.asarray(w_future, dtype=float):
        y = w - sum(delta[j] * hist[-j] for j in range(1, k + 1))
        hist.append(y)
        out.append(y)
    return np.array(out)


# -- unit-root and whiteness tests --------------------------------------------


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags: int
    n_obs: int
    critical_values: dict
    reject: bool


def default_adf_lags(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(y, max_lag: int | None = None) -> AdfResult:
    """Dickey-Fuller regression with constant and ``max_lag`` lagged differences."""
    x = np.asarray(y, dtype=float)
    n = len(x)
    if n < 20:
        raise ValueError("ADF needs at least 20 observations")
    k = default_adf_lags(n) if max_lag is None else int(max_lag)
    dy = np.diff(x)
    n_obs = len(dy) - k
    if n_obs < k + 3:
        raise ValueError(f"too few observations for {k} lags")
    cols = [np.ones(n_obs), x[k:-1]]
    for i in range(1, k + 1):
        cols.append(dy[k - i: len(dy) - i])
    X = np.column_stack(cols)
    target = dy[k:]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ModelError("degenerate ADF regression (singular design)")
    beta, _, _, _ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    dof = n_obs - X.shape[1]
    sigma2 = float(resid @ resid) / dof
    if sigma2 <= 0:
        raise ModelError("degenerate ADF regression (perfect fit)")
    cov = sigma2 * np.linalg.inv(X.T @ X)
    stat = float(beta[1] / math.sqrt(cov[1, 1]))
    return AdfResult(stat, k, n_obs, dict(ADF_CRITICAL), stat < ADF_CRITICAL["5%"])


def chi2_critical_95(df: int) -> float:
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if df <= len(_CHI2_95):
        return _CHI2_95[df - 1]
    # Wilson-Hilferty
    z = 1.6448536269514722
    c = 2.0 / (9.0 * df)
    return df * (1.0 - c + z * math.sqrt(c)) ** 3


@dataclass(frozen=True)
class LjungBoxResult:
    statistic: float
    lags: int
    df: int
    critical_value: float
    white: bool


def ljung_box(residuals, lags: int = 10, model_df: int = 0) -> LjungBoxResult:
    """Q = n(n+2) sum r_k^2/(n-k); ``white`` is True when Q is below the 5% threshold."""
    e = np.asarray(residuals, dtype=float)
    n = len(e)
    if n <= lags or lags < 1:
        raise ValueError("need 1 <= lags < len(residuals)")
    c = e - e.mean()
    denom = float(c @ c)
    if denom == 0:
        raise ValueError("constant residuals")
    r = np.array([float(c[k:] @ c[:-k]) / denom for k in range(1, lags + 1)])
    q = n * (n + 2) * float(np.sum(r**2 / (n - np.arange(1, lags + 1))))
    df = max(lags - model_df, 1)
    crit = chi2_critical_95(df)
    return LjungBoxResult(q, lags, df, crit, q < crit)


# -- exogenous regressors -----------------------------------------------------


def default_calendar_exog(dates: Sequence[dt.date] | np.ndarray) -> np.ndarray:
    """Day-of-week indicators for Tuesday..Sunday; Monday is the all-zero baseline."""
    weekdays = np.array(
        [(d if isinstance(d, dt.date) else dt.date.fromordinal(int(d))).weekday() for d in dates]
    )
    X = np.zeros((len(weekdays), 6))
    for col in range(6):
        X[weekdays == col + 1, col] = 1.0
    return X


# -- estimation -----------------------------------------------------------------


@dataclass(frozen=True)
class ArimaModel:
    order: ArimaOrder
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    seasonal_ar: np.ndarray
    seasonal_ma: np.ndarray
    exog_coeffs: np.ndarray
    intercept: float
    residual_variance: float
    presample_level: float
    raw_tail: np.ndarray
    level_tail: np.ndarray
    resid_tail: np.ndarray
    n_obs: int
    css: float
    css_trace: tuple = field(default=(), repr=False)
    residuals: np.ndarray | None = field(default=None, repr=False)
    flags: tuple = ()

    @property
    def has_exog(self) -> bool:
        return len(self.exog_coeffs) > 0

    def ar_polynomial(self) -> np.ndarray:
        return _ar_poly(self.ar_coeffs, self.seasonal_ar, self.order.s)

    def ma_polynomial(self) -> np.ndarray:
        return _ma_poly(self.ma_coeffs, self.seasonal_ma, self.order.s)


def _ar_poly(phi, Phi, s) -> np.ndarray:
    base = np.concatenate(([1.0], -np.asarray(phi, float)))
    seas = np.zeros(len(Phi) * s + 1)
    seas[0] = 1.0
    for i, c in enumerate(Phi, start=1):
        seas[i * s] = -c
    return np.convolve(base, seas)


def _ma_poly(theta, Theta, s) -> np.ndarray:
    base = np.concatenate(([1.0], np.asarray(theta, float)))
    seas = np.zeros(len(Theta) * s + 1)
    seas[0] = 1.0
    for i, c in enumerate(Theta, start=1):
        seas[i * s] = c
    return np.convolve(base, seas)


class _CssProblem:
    """Residual map params -> e for a fixed differenced series."""

    def __init__(self, w: np.ndarray, order: ArimaOrder, exog: np.ndarray | None, intercept: bool):
        self.w = w
        self.order = order
        self.exog = exog
        self.k_exog = 0 if exog is None else exog.shape[1]
        self.intercept = intercept
        self.level = float(np.mean(w))

    @property
    def n_params(self) -> int:
        return int(self.intercept) + self.k_exog + self.order.n_arma

    def unpack(self, params):
        o = self.order
        i = 0
        mu = 0.0
        if self.intercept:
            mu = float(params[0])
            i = 1
        zeta = np.asarray(params[i:i + self.k_exog])
        i += self.k_exog
        phi = np.asarray(params[i:i + o.p]); i += o.p
        Phi = np.asarray(params[i:i + o.P]); i += o.P
        theta = np.asarray(params[i:i + o.q]); i += o.q
        Theta = np.asarray(params[i:i + o.Q])
        return mu, zeta, phi, Phi, theta, Theta

    def filter(self, params, w=None, exog=None):
        """Return (residuals, padded centred levels)."""
        w = self.w if w is None else w
        exog = self.exog if exog is None else exog
        mu, zeta, phi, Phi, theta, Theta = self.unpack(params)
        ar = _ar_poly(phi, Phi, self.order.s)
        ma = _ma_poly(theta, Theta, self.order.s)
        k = len(ar) - 1
        v = np.concatenate((np.full(k, self.level - mu), w - mu))
        x = np.convolve(v, ar, mode="full")[k:k + len(w)] if k else v.copy()
        if self.k_exog:
            x = x - exog @ zeta
        e = lfilter([1.0], ma, x) if len(ma) > 1 else x
        return e, v

    def residuals(self, params) -> np.ndarray:
        return self.filter(params)[0]


def _levenberg_marquardt(fun, x0, max_iter=2000, ftol=1e-10, xtol=1e-8):
    """Damped Gauss-Newton; only objective-decreasing steps are accepted."""
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    f = float(r @ r)
    trace = [f]
    if len(x) == 0:
        return x, f, trace
    lam = 1e-3
    it = 0
    while it < max_iter:
        it += 1
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        J = np.empty((len(r), len(x)))
        for j in range(len(x)):
            step = np.zeros_like(x)
            step[j] = h[j]
            J[:, j] = (fun(x + step) - fun(x - step)) / (2.0 * h[j])
        g = J.T @ r
        A = J.T @ J
        diag = np.maximum(np.diag(A), 1e-12)
        accepted = False
        while it <= max_iter:
            try:
                dx = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                it += 1
                continue
            x_new = x + dx
            with np.errstate(over="ignore", invalid="ignore"):
                r_new = fun(x_new)
                f_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if not math.isfinite(f_new):
                f_new = math.inf
            if f_new < f:
                accepted = True
                break
            lam *= 10.0
            it += 1
            if lam > 1e16:
                return x, f, trace
        if not accepted:
            break
        small_f = (f - f_new) <= ftol * max(f, 1e-300)
        small_x = np.linalg.norm(dx) <= xtol * (np.linalg.norm(x) + xtol)
        x, r, f = x_new, r_new, f_new
        trace.append(f)
        lam = max(lam / 10.0, 1e-12)
        if small_f or small_x:
            return x, f, trace
    raise ConvergenceError(f"CSS optimizer did not converge in {max_iter} iterations", f)


def _root_flags(model_ar: np.ndarray, model_ma: np.ndarray) -> tuple:
    flags = []
    for name, poly in (("ar", model_ar), ("ma", model_ma)):
        if len(poly) > 1:
            roots = np.roots(poly[::-1])
            if np.any(np.abs(roots) <= 1.0 + 1e-8):
                flags.append("explosive_ar" if name == "ar" else "noninvertible_ma")
    return tuple(flags)


def fit(y, order: ArimaOrder, exog=None, *, max_iter: int = 2000) -> ArimaModel:
    """CSS estimate of an ARIMA/SARIMAX model on raw series ``y``.

    Pre-sample residuals are zero and pre-sample differenced values equal the
    differenced-series mean. An intercept is estimated only when ``d + D == 0``.
    """
    y = np.asarray(y, dtype=float)
    w, _ = difference(y, order.d, order.D, order.s)
    X = None
    if exog is not None:
        X = np.asarray(exog, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if len(X) != len(y):
            raise ValueError("exog must have one row per observation")
        X = X[len(y) - len(w):]
        if X.shape[1] == 0:
            X = None
    k_exog = 0 if X is None else X.shape[1]
    if len(w) <= 10 + order.n_arma + k_exog:
        raise ValueError(f"series too short for order {order}")

    problem = _CssProblem(w, order, X, intercept=(order.d + order.D == 0))
    params, css, trace = _levenberg_marquardt(problem.residuals, np.zeros(problem.n_params), max_iter)
    e, v = problem.filter(params)
    mu, zeta, phi, Phi, theta, Theta = problem.unpack(params)

    flags = _root_flags(_ar_poly(phi, Phi, order.s), _ma_poly(theta, Theta, order.s))
    for flag in flags:
        warnings.warn(f"fitted ARIMA{order} is {flag.replace('_', ' ')}", EstimationWarning, stacklevel=2)

    return ArimaModel(
        order=order,
        ar_coeffs=phi.copy(),
        ma_coeffs=theta.copy(),
        seasonal_ar=Phi.copy(),
        seasonal_ma=Theta.copy(),
        exog_coeffs=zeta.copy(),
        intercept=mu,
        residual_variance=css / len(w),
        presample_level=problem.level,
        raw_tail=y[len(y) - order.diff_lags:].copy(),
        level_tail=v[len(v) - order.ar_lags:].copy(),
        resid_tail=e[len(e) - order.ma_lags:].copy(),
        n_obs=len(w),
        css=css,
        css_trace=tuple(trace),
        residuals=e,
        flags=flags,
    )


def fit_sarimax(y, order: ArimaOrder, exog=None, **kwargs) -> ArimaModel:
    return fit(y, order, exog, **kwargs)


def _future_exog(model: ArimaModel, future_exog, horizon: int) -> np.ndarray | None:
    if not model.has_exog:
        return None
    if future_exog is None:
        raise ValueError("model has exogenous terms; future_exog is required")
    X = np.asarray(future_exog, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape != (horizon, len(model.exog_coeffs)):
        raise ValueError(f"future_exog must have shape ({horizon}, {len(model.exog_coeffs)})")
    return X


def forecast(model: ArimaModel, horizon: int, future_exog=None) -> np.ndarray:
    """Fixed-origin forecast with future shocks at zero, returned on the raw scale."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    X = _future_exog(model, future_exog, horizon)
    ar = model.ar_polynomial()
    ma = model.ma_polynomial()
    v = list(model.level_tail)
    e = list(model.resid_tail) + [0.0] * horizon
    n_e = len(model.resid_tail)
    w_future = np.empty(horizon)
    for h in range(horizon):
        val = -sum(ar[k] * v[-k] for k in range(1, len(ar)))
        t = n_e + h
        val += sum(ma[k] * e[t - k] for k in range(1, len(ma)) if t - k >= 0)
        if X is not None:
            val += float(X[h] @ model.exog_coeffs)
        v.append(val)
        w_future[h] = val + model.intercept
    o = model.order
    return integrate(w_future, model.raw_tail, o.d, o.D, o.s)


def _refilter(model: ArimaModel, full, full_exog):
    o = model.order
    w, _ = difference(full, o.d, o.D, o.s)
    X = None
    if model.has_exog:
        if full_exog is None:
            raise ValueError("model has exogenous terms; exog rows for the whole series are required")
        X = np.asarray(full_exog, float)
        if X.ndim == 1:
            X = X[:, None]
        if len(X) != len(full):
            raise ValueError("exog must have one row per observation")
        X = X[len(full) - len(w):]
    problem = _CssProblem(w, o, X, intercept=(o.d + o.D == 0))
    problem.level = model.presample_level
    params = np.concatenate((
        [model.intercept] if problem.intercept else [],
        model.exog_coeffs, model.ar_coeffs, model.seasonal_ar, model.ma_coeffs, model.seasonal_ma,
    ))
    return problem.filter(params)


def one_step_predictions(model: ArimaModel, history, new_values, history_exog=None, new_exog=None) -> np.ndarray:
    """Rolling one-step predictions over ``new_values`` with fixed coefficients.

    ``history`` must be the series the model was fitted on.
    """
    new = np.asarray(new_values, dtype=float)
    full = np.concatenate((np.asarray(history, dtype=float), new))
    full_exog = None
    if model.has_exog:
        if history_exog is None or new_exog is None:
            raise ValueError("model has exogenous terms; exog for history and new values is required")
        full_exog = np.vstack((np.asarray(history_exog, float), np.asarray(new_exog, float)))
    e, _ = _refilter(model, full, full_exog)
    # monic AR and differencing polynomials: y_t - e_t is the one-step prediction
    return new - e[len(e) - len(new):]


def update_state(model: ArimaModel, full_series, full_exog=None) -> ArimaModel:
    """Same coefficients, forecast origin moved to the end of ``full_series``."""
    y = np.asarray(full_series, dtype=float)
    e, v = _refilter(model, y, full_exog)
    o = model.order
    return replace(
        model,
        raw_tail=y[len(y) - o.diff_lags:].copy(),
        level_tail=v[len(v) - o.ar_lags:].copy(),
        resid_tail=e[len(e) - o.ma_lags:].copy(),
        residuals=e,
    )


@dataclass
class BoxJenkinsResult:
    model: ArimaModel
    d: int
    adf: list
    tried: list
    diagnostic: LjungBoxResult


def box_jenkins(y, max_d: int = 2, candidates: Sequence[tuple[int, int]] | None = None,
                lags: int = 10, exog=None) -> BoxJenkinsResult:
    """Identify d by repeated ADF tests, then fit (p, q) candidates in order until
    the residuals pass Ljung-Box. Falls back to the last candidate tried.
    """
    y = np.asarray(y, dtype=float)
    adf = []
    d = 0
    series = y
    while True:
        res = adf_test(series)
        adf.append(res)
        if res.reject or d >= max_d:
            break
        d += 1
        series = np.diff(series)
    if candidates is None:
        candidates = sorted(((p, q) for p in range(4) for q in range(4)), key=lambda pq: (sum(pq), pq))
    tried = []
    model = diag = None
    for p, q in candidates:
        try:
            model = fit(y, ArimaOrder(p, d, q), exog)
        except (ModelError, ValueError) as exc:
            tried.append(((p, d, q), str(exc)))
            continue
        diag = ljung_box(model.residuals, lags, model_df=p + q)
        tried.append(((p, d, q), diag.white))
        if diag.white:
            break
    if model is None:
        raise ModelError("no candidate order could be fitted")
    return BoxJenkinsResult(model, d, adf, tried, diag)
