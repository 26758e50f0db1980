"""Comparison methods: static PCA, dynamic PCA, Lee-Carter and per-series ARIMA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arima import ArimaGrid, fit_arima, forecast_arima
from .errors import DegenerateSpectrumError, FhfmError, InvalidLagError, InsufficientLengthError
from .hierarchical import (
    AUTO,
    MIN_FACTOR_LENGTH,
    ForecastResult,
    Rank,
    _check_signal,
    forecast_factors,
    forecast_series,
    leading_loadings,
)
from .panel import Panel, autocov_product, difference_panel, sample_mean, sym_eigen_desc


@dataclass(frozen=True)
class OneStagePcaFit:
    mean: np.ndarray
    loadings: np.ndarray
    factors: np.ndarray
    residual: np.ndarray
    method: str
    eigenvalues: np.ndarray
    ell0: int = 0
    include_lag0: bool = True
    difference: bool = False
    row_labels: tuple = ()
    col_labels: tuple = ()

    def fitted_values(self) -> np.ndarray:
        return self.mean[:, None] + self.loadings @ self.factors

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "ell0": self.ell0,
            "include_lag0": self.include_lag0,
            "difference": self.difference,
            "row_labels": list(self.row_labels),
            "col_labels": list(self.col_labels),
            "mean": self.mean.tolist(),
            "loadings": self.loadings.tolist(),
            "factors": self.factors.tolist(),
            "residual": self.residual.tolist(),
            "residual_summary": {"rmse": float(np.sqrt(np.mean(self.residual**2)))},
            "eigenvalues": self.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OneStagePcaFit":
        P, T = len(d["mean"]), len(d["col_labels"])
        return cls(
            mean=np.asarray(d["mean"], float),
            loadings=np.asarray(d["loadings"], float).reshape(P, -1),
            factors=np.asarray(d["factors"], float).reshape(-1, T),
            residual=np.asarray(d["residual"], float),
            method=d["method"],
            eigenvalues=np.asarray(d["eigenvalues"], float),
            ell0=d["ell0"],
            include_lag0=d["include_lag0"],
            difference=d["difference"],
            row_labels=tuple(d["row_labels"]),
            col_labels=tuple(d["col_labels"]),
        )


def _dpca_matrix(panel: Panel, ell0: int, include_lag0: bool) -> np.ndarray:
    first = 0 if include_lag0 else 1
    if ell0 < first:
        raise InvalidLagError("the lag set is empty: ell0 must be >= 1 when lag 0 is excluded")
    if ell0 >= panel.T:
        raise InvalidLagError(f"ell0 must be < T={panel.T}, got {ell0}")
    total = np.zeros((panel.P, panel.P))
    for lag in range(first, ell0 + 1):
        total = total + autocov_product(panel, lag).matrix
    return total


def fit_dpca(
    panel: Panel,
    r: Rank = 1,
    ell0: int = 1,
    include_lag0: bool = True,
    difference: bool = False,
    R: int | None = None,
) -> OneStagePcaFit:
    """One-stage PCA on ``sum_l Sigma(l) Sigma(l)^T`` over the chosen lag set, equal weights."""
    source = difference_panel(panel) if difference else panel
    _check_signal(source.values, "input panel")
    L = _dpca_matrix(source, int(ell0), include_lag0)
    loadings, spectrum, r = leading_loadings(L, r, R, panel.P, source.T)
    mean = sample_mean(panel)
    centred = panel.values - mean[:, None]
    factors = loadings.T @ centred
    if ell0 == 0:
        tag = "CPCA"
    else:
        tag = f"DPCA({ell0})" if include_lag0 else f"DPCA-nolag0({ell0})"
    return OneStagePcaFit(
        mean, loadings, factors, centred - loadings @ factors, tag, spectrum,
        int(ell0), include_lag0, difference, panel.row_labels, panel.col_labels,
    )


def fit_cpca(panel: Panel, r: Rank = 1, difference: bool = False, R: int | None = None) -> OneStagePcaFit:
    """Static PCA: eigenvectors of ``Sigma(0) Sigma(0)^T`` (same vectors as ``Sigma(0)``)."""
    return fit_dpca(panel, r, ell0=0, include_lag0=True, difference=difference, R=R)


@dataclass(frozen=True)
class LeeCarterFit:
    a: np.ndarray
    b: np.ndarray
    k: np.ndarray
    residual: np.ndarray
    row_labels: tuple = ()
    col_labels: tuple = ()

    @property
    def loadings(self) -> np.ndarray:
        return self.b[:, None]

    @property
    def factors(self) -> np.ndarray:
        return self.k[None, :]

    def fitted_values(self) -> np.ndarray:
        return self.a[:, None] + np.outer(self.b, self.k)

    def to_dict(self) -> dict:
        return {
            "method": "LeeCarter",
            "row_labels": list(self.row_labels),
            "col_labels": list(self.col_labels),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "k": self.k.tolist(),
            "residual": self.residual.tolist(),
            "residual_summary": {"rmse": float(np.sqrt(np.mean(self.residual**2)))},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LeeCarterFit":
        return cls(
            np.asarray(d["a"], float), np.asarray(d["b"], float), np.asarray(d["k"], float),
            np.asarray(d["residual"], float), tuple(d["row_labels"]), tuple(d["col_labels"]),
        )


def fit_lee_carter(panel: Panel) -> LeeCarterFit:
    """``ln m = a_x + b_x k_t`` with ``sum b = 1`` and ``sum k = 0``; no death-count refit."""
    a = sample_mean(panel)
    centred = panel.values - a[:, None]
    _check_signal(panel.values, "log-rate panel")
    eig = sym_eigen_desc(autocov_product(panel, 0).matrix)
    if not eig.eigenvalues[0] > 0:
        raise DegenerateSpectrumError("centred log-rate matrix is zero")
    b_hat = eig.eigenvectors[:, 0]
    scale = b_hat.sum()
    if abs(scale) <= 1e-12 * np.abs(b_hat).sum():
        raise DegenerateSpectrumError("leading loading sums to zero; Lee-Carter normalisation undefined")
    k_hat = b_hat @ centred
    b = b_hat / scale
    k = k_hat * scale
    return LeeCarterFit(a, b, k, centred - np.outer(b, k), panel.row_labels, panel.col_labels)


def forecast_baseline(fit, h: int, grid: ArimaGrid | None = None, factor_model: str = "auto_arima") -> ForecastResult:
    """Per-factor forecasts mapped back through the loadings and mean (or ``a_x``)."""
    kf, models = forecast_factors(fit.factors, h, grid, factor_model)
    base = fit.a if isinstance(fit, LeeCarterFit) else fit.mean
    fc = base[:, None] + fit.loadings @ kf
    return ForecastResult(int(h), fc, kf, tuple(models), fit.row_labels)


def fit_forecast_individual(
    panel: Panel, h: int, grid: ArimaGrid | None = None
) -> ForecastResult:
    """Auto-ARIMA on every row separately.

    A row whose model search fails falls back to a random walk (last value
    carried forward) and is listed in ``fallback_rows``.
    """
    if panel.T < MIN_FACTOR_LENGTH:
        raise InsufficientLengthError(f"series need T >= {MIN_FACTOR_LENGTH}, got {panel.T}")
    h = int(h)
    out = np.empty((panel.P, h))
    models, fallback = [], []
    for i, row in enumerate(panel.values):
        try:
            model, fc = forecast_series(row, h, grid)
        except FhfmError:
            model = fit_arima(row, 0, 1, 0, drift=False)
            fc = forecast_arima(model, row, h)
            fallback.append(panel.row_labels[i])
        out[i] = fc
        models.append(model)
    return ForecastResult(h, out, out.copy(), tuple(models), panel.row_labels, tuple(fallback))


__all__ = [
    "AUTO",
    "LeeCarterFit",
    "OneStagePcaFit",
    "fit_cpca",
    "fit_dpca",
    "fit_forecast_individual",
    "fit_lee_carter",
    "forecast_baseline",
]
