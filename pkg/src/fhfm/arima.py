"""Univariate ARIMA(p, d, q) by conditional sum of squares, BIC order search.

The likelihood is the Gaussian conditional-sum-of-squares (CSS) likelihood of
the ``d``-times differenced series: the first ``p`` differenced observations
are conditioned on and pre-sample innovations are zero. Coefficients are
optimised through the partial-autocorrelation (Monahan) reparameterisation,
which keeps the AR polynomial stationary and the MA polynomial invertible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np
from numba import njit
from scipy import optimize, signal

from .errors import ConvergenceError, InsufficientLengthError, SelectionError, ValidationError

MAX_ITER = 500
GTOL = 1e-8


@dataclass(frozen=True)
class ArimaGrid:
    """Search grid for :func:`auto_arima`. Drift is only offered when ``d <= 1``."""

    p_max: int = 3
    d_max: int = 2
    q_max: int = 3
    allow_drift: bool = True

    def __post_init__(self):
        if min(self.p_max, self.d_max, self.q_max) < 0:
            raise ValidationError("ARIMA grid maxima must be >= 0")

    def cells(self) -> Iterator[tuple[int, int, int, bool]]:
        for d in range(self.d_max + 1):
            for p in range(self.p_max + 1):
                for q in range(self.q_max + 1):
                    yield p, d, q, False
                    if self.allow_drift and d <= 1:
                        yield p, d, q, True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArimaGrid":
        return cls(**d)


@dataclass(frozen=True)
class ArimaModel:
    """A fitted ARIMA model.

    ``intercept`` is the mean of the differenced series when ``drift`` is
    set (a level for ``d = 0``, a per-step drift for ``d = 1``), else 0.
    """

    order: tuple
    ar_coeffs: tuple
    ma_coeffs: tuple
    drift: bool
    intercept: float
    sigma2: float
    loglik: float
    bic: float
    n_obs: int
    n_cond: int = 0

    @property
    def p(self) -> int:
        return self.order[0]

    @property
    def d(self) -> int:
        return self.order[1]

    @property
    def q(self) -> int:
        return self.order[2]

    @property
    def n_params(self) -> int:
        return self.p + self.q + int(self.drift) + 1

    def to_dict(self) -> dict:
        out = asdict(self)
        out["order"] = list(self.order)
        out["ar_coeffs"] = list(self.ar_coeffs)
        out["ma_coeffs"] = list(self.ma_coeffs)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ArimaModel":
        d = dict(d)
        d["order"] = tuple(d["order"])
        d["ar_coeffs"] = tuple(d["ar_coeffs"])
        d["ma_coeffs"] = tuple(d["ma_coeffs"])
        return cls(**d)


# --- differencing ---------------------------------------------------------


def difference(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.diff(x, n=d) if d > 0 else x.copy()


def integrate(w, d: int, initial) -> np.ndarray:
    """Invert :func:`difference` given the first ``d`` values of the original series."""
    w = np.asarray(w, dtype=float)
    initial = np.asarray(initial, dtype=float)
    if len(initial) != d:
        raise ValidationError(f"need {d} initial values, got {len(initial)}")
    out = w
    for j in reversed(range(d)):
        head = np.diff(initial, n=j)[0]
        out = np.concatenate([[head], head + np.cumsum(out)])
    return out


# --- reparameterisation ----------------------------------------------------


def _pacf_to_coef(r: np.ndarray) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to AR coefficients."""
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        phi = np.concatenate([phi - rk * phi[::-1], [rk]])
    return phi


def _coef_to_pacf(phi: np.ndarray) -> np.ndarray | None:
    """Inverse of :func:`_pacf_to_coef`; ``None`` when ``phi`` is not stationary."""
    phi = np.array(phi, dtype=float)
    p = len(phi)
    r = np.zeros(p)
    for k in range(p - 1, -1, -1):
        rk = phi[k]
        if not abs(rk) < 1:
            return None
        r[k] = rk
        if k:
            prev = phi[:k]
            phi = (prev + rk * prev[::-1]) / (1 - rk * rk)
    return r


def _ar_part(z: np.ndarray, phi: np.ndarray) -> np.ndarray:
    p = len(phi)
    a = z[p:].copy()
    for i, ph in enumerate(phi, start=1):
        a -= ph * z[p - i : len(z) - i]
    return a


def css_residuals(z: np.ndarray, phi, theta) -> np.ndarray:
    """Innovations ``e_t`` for ``t >= p`` of a zero-mean ARMA, pre-sample ``e = 0``."""
    a = _ar_part(np.asarray(z, dtype=float), np.asarray(phi, dtype=float))
    if len(theta):
        return signal.lfilter([1.0], np.concatenate([[1.0], theta]), a)
    return a


def is_stationary(phi, tol: float = 1e-6) -> bool:
    """True when all roots of ``1 - phi_1 z - ... - phi_p z^p`` lie outside the unit circle."""
    phi = np.asarray(phi, dtype=float)
    if len(phi) == 0 or np.all(phi == 0):
        return True
    roots = np.roots(np.concatenate([-phi[::-1], [1.0]]))
    return bool(np.all(np.abs(roots) > 1 + tol))


def is_invertible(theta, tol: float = 1e-6) -> bool:
    return is_stationary(-np.asarray(theta, dtype=float), tol)


@njit(cache=True)
def _nb_pacf_to_coef(r):
    p = r.shape[0]
    phi = np.zeros(p)
    tmp = np.zeros(p)
    for k in range(p):
        rk = r[k]
        for j in range(k):
            tmp[j] = phi[j] - rk * phi[k - 1 - j]
        for j in range(k):
            phi[j] = tmp[j]
        phi[k] = rk
    return phi


@njit(cache=True)
def _nb_objective(u, w, p, q, drift, w_mean, w_scale, floor, start):
    phi = _nb_pacf_to_coef(np.tanh(u[:p]))
    theta = -_nb_pacf_to_coef(np.tanh(u[p : p + q]))
    mu = w_mean + w_scale * u[p + q] if drift else 0.0
    n = w.shape[0]
    e = np.zeros(n)
    ssr = 0.0
    for t in range(p, n):
        a = w[t] - mu
        for i in range(1, p + 1):
            a -= phi[i - 1] * (w[t - i] - mu)
        for j in range(1, q + 1):
            if t - j >= p:
                a -= theta[j - 1] * e[t - j]
        e[t] = a
        if t >= start:
            ssr += a * a
    s = ssr / (n - start)
    if s < floor:
        s = floor
    return np.log(s)


@njit(cache=True)
def _nb_objective_grad(u, w, p, q, drift, w_mean, w_scale, floor, start):
    f = _nb_objective(u, w, p, q, drift, w_mean, w_scale, floor, start)
    k = u.shape[0]
    g = np.zeros(k)
    v = u.copy()
    for i in range(k):
        h = 1e-6 * (1.0 + abs(u[i]))
        v[i] = u[i] + h
        fp = _nb_objective(v, w, p, q, drift, w_mean, w_scale, floor, start)
        v[i] = u[i] - h
        fm = _nb_objective(v, w, p, q, drift, w_mean, w_scale, floor, start)
        v[i] = u[i]
        g[i] = (fp - fm) / (2.0 * h)
    return f, g


# --- fitting ---------------------------------------------------------------


def _sigma_floor(x: np.ndarray) -> float:
    # exact fits would otherwise send log(sigma2) to -inf; relative to the data scale
    return 1e-20 * float(np.mean(x * x)) + 1e-300


def _ols_ar(w: np.ndarray, p: int, drift: bool, start: int):
    """Unconstrained CSS fit of AR(p) (+ constant) by least squares on ``w[start:]``."""
    y = w[start:]
    cols = [w[start - i : len(w) - i] for i in range(1, p + 1)]
    if drift:
        cols.append(np.ones(len(y)))
    if not cols:
        return np.zeros(0), 0.0
    X = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    phi = beta[:p]
    if drift:
        denom = 1.0 - phi.sum()
        mu = beta[p] / denom if abs(denom) > 1e-12 else float(np.mean(w))
    else:
        mu = 0.0
    return phi, float(mu)


def fit_arima(series, p: int, d: int, q: int, drift: bool = False, n_cond: int | None = None) -> ArimaModel:
    """Fit ARIMA(p, d, q), optionally with a constant in the differenced series.

    The likelihood conditions on the first ``n_cond`` observations of the
    original series (default ``p + d``, the minimum) and scores the remaining
    ``T - n_cond``. Models fitted with the same ``n_cond`` describe the same
    observations, so their likelihoods and BICs are comparable across ``d``.

    Raises
    ------
    InsufficientLengthError
        when ``T - n_cond <= p + q + 2``.
    ConvergenceError
        when the quasi-Newton search hits its iteration cap or diverges.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValidationError("series must be a finite 1-d array")
    n = len(x)
    n_cond = p + d if n_cond is None else int(n_cond)
    if n_cond < p + d:
        raise ValidationError(f"n_cond must be >= p + d = {p + d}, got {n_cond}")
    m = n - n_cond
    if m <= p + q + 2:
        raise InsufficientLengthError(
            f"ARIMA({p},{d},{q}) needs T - {n_cond} > p + q + 2 scored points, got T={n}"
        )
    w = difference(x, d)
    start = n_cond - d
    floor = _sigma_floor(x)
    w_mean = float(w.mean())
    w_scale = float(w.std()) or 1.0

    phi0, mu0 = _ols_ar(w, p, drift, start)
    if not drift:
        mu0 = 0.0

    def unpack(u):
        phi = _pacf_to_coef(np.tanh(u[:p])) if p else np.zeros(0)
        theta = -_pacf_to_coef(np.tanh(u[p : p + q])) if q else np.zeros(0)
        mu = w_mean + w_scale * u[p + q] if drift else 0.0
        return phi, theta, mu

    def ssr_of(phi, theta, mu):
        e = css_residuals(w - mu, phi, theta)[start - p :]
        return float(e @ e)

    if q == 0 and is_stationary(phi0, tol=0.0) and _coef_to_pacf(phi0) is not None:
        phi, theta, mu = phi0, np.zeros(0), mu0
        ssr = ssr_of(phi, theta, mu)
    else:
        r0 = _coef_to_pacf(phi0) if p else np.zeros(0)
        if r0 is None:
            r0 = np.zeros(p)
        u0 = np.concatenate(
            [
                np.arctanh(np.clip(r0, -0.95, 0.95)),
                np.zeros(q),
                [(mu0 - w_mean) / w_scale] if drift else [],
            ]
        )

        args = (w, p, q, bool(drift), w_mean, w_scale, floor, start)

        if len(u0) == 0:
            phi, theta, mu = unpack(u0)
        else:
            res = optimize.minimize(
                _nb_objective_grad,
                u0,
                args=args,
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": MAX_ITER, "gtol": GTOL},
            )
            if res.status == 1 or not np.isfinite(res.fun) or not np.all(np.isfinite(res.x)):
                raise ConvergenceError(f"ARIMA({p},{d},{q}) CSS optimisation failed: {res.message}")
            phi, theta, mu = unpack(res.x)
        ssr = ssr_of(phi, theta, mu)

    sigma2 = max(ssr / m, floor)
    loglik = -0.5 * m * (math.log(2 * math.pi * sigma2) + 1.0)
    k = p + q + int(drift) + 1
    bic = -2.0 * loglik + k * math.log(m)
    return ArimaModel(
        order=(p, d, q),
        ar_coeffs=tuple(float(v) for v in phi),
        ma_coeffs=tuple(float(v) for v in theta),
        drift=bool(drift),
        intercept=float(mu),
        sigma2=float(sigma2),
        loglik=float(loglik),
        bic=float(bic),
        n_obs=n,
        n_cond=n_cond,
    )


def auto_arima(series, grid: ArimaGrid | None = None) -> ArimaModel:
    """Minimum-BIC model over ``grid``.

    Every cell conditions on the same ``p_max + d_max`` leading observations
    so all BICs score the same data. Cells that fail to fit are skipped. Ties go to the smaller ``p + q``,
    then the smaller ``d``, then the smaller ``p``, then no drift.
    """
    grid = grid or ArimaGrid()
    best, best_key = None, None
    errors = []
    n_cond = grid.p_max + grid.d_max
    for p, d, q, drift in grid.cells():
        try:
            model = fit_arima(series, p, d, q, drift, n_cond=n_cond)
        except (ConvergenceError, InsufficientLengthError) as exc:
            errors.append(exc)
            continue
        key = (round(model.bic, 9), p + q, d, p, int(drift))
        if best_key is None or key < best_key:
            best, best_key = model, key
    if best is None:
        raise SelectionError(f"no ARIMA grid cell could be fitted ({len(errors)} failures)")
    return best


def forecast_arima(model: ArimaModel, series, h: int) -> np.ndarray:
    """Point forecasts ``h`` steps past the end of ``series``; future shocks are zero."""
    if int(h) < 1:
        raise ValidationError("forecast horizon must be >= 1")
    h = int(h)
    x = np.asarray(series, dtype=float)
    p, d, q = model.order
    phi = np.asarray(model.ar_coeffs)
    theta = np.asarray(model.ma_coeffs)
    z = difference(x, d) - model.intercept
    e = np.concatenate([np.zeros(p), css_residuals(z, phi, theta)])
    zz = list(z)
    ee = list(e)
    n = len(z)
    for k in range(h):
        t = n + k
        val = 0.0
        for i in range(1, p + 1):
            val += phi[i - 1] * zz[t - i]
        for j in range(1, q + 1):
            if t - j >= 0:
                val += theta[j - 1] * ee[t - j]
        zz.append(val)
        ee.append(0.0)
    fc = np.asarray(zz[n:]) + model.intercept
    for j in reversed(range(d)):
        fc = np.diff(x, n=j)[-1] + np.cumsum(fc)
    return fc
