"""Two-step hierarchical factor estimation and factor-based forecasting.

Step 1 extracts the loadings ``B`` whose factors carry the most lag-1 serial
dependence: the leading eigenvectors of ``Sigma_y(1) Sigma_y(1)^T``. Step 2
runs a static PCA on what step 1 leaves behind: the leading eigenvectors
``A`` of ``Sigma_u(0) Sigma_u(0)^T``. With the stationarity modification the
step-1 loadings come from the first-differenced panel, while factors,
residuals and reconstruction always use levels.

Forecasts model each factor with its own BIC-selected ARIMA and map the
factor forecasts back through the loadings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .arima import ArimaGrid, ArimaModel, auto_arima, fit_arima, forecast_arima
from .errors import (
    DegenerateSpectrumError,
    FhfmError,
    ForecastError,
    InsufficientLengthError,
    RankError,
    ValidationError,
)
from .panel import Panel, autocov_product, difference_panel, sample_mean, sym_eigen_desc

AUTO = "auto"
Rank = Union[int, str]
MIN_FACTOR_LENGTH = 10


def default_R(P: int, T: int) -> int:
    return max(1, min(P, T) // 2)


def select_rank(eigenvalues, R: int) -> int:
    """Ratio criterion: the ``i`` in ``1..R`` minimising ``lambda_{i+1} / lambda_i``.

    Eigenvalues below ``1e-12 * lambda_1`` are raised to that floor first so
    numerically-zero tails do not produce 0/0.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    R = int(R)
    if R < 1 or R + 1 > len(lam):
        raise ValidationError(f"R={R} needs at least R+1={R + 1} eigenvalues, got {len(lam)}")
    if not lam[0] > 0:
        raise DegenerateSpectrumError("leading eigenvalue is not positive")
    floor = 1e-12 * lam[0]
    lam = np.maximum(lam[: R + 1], floor)
    ratios = lam[1:] / lam[:-1]
    return int(np.argmin(ratios)) + 1


def _check_signal(x: np.ndarray, what: str) -> None:
    # centred data that is zero up to rounding has no direction to extract
    scale = max(1.0, float(np.abs(x).max()) if x.size else 0.0)
    if x.size == 0 or float(np.abs(x - x.mean(axis=1, keepdims=True)).max()) <= 1e-12 * scale:
        raise DegenerateSpectrumError(f"{what} has no variation across time")


def leading_loadings(matrix: np.ndarray, r: Rank, R: int | None, P: int, T: int):
    """Top-``r`` eigenvectors of a symmetric PSD matrix; ``r="auto"`` uses :func:`select_rank`.

    Returns ``(loadings, spectrum, r)``.
    """
    eig = sym_eigen_desc(matrix)
    lam = eig.eigenvalues
    if not lam[0] > 0:
        raise DegenerateSpectrumError("leading eigenvalue is zero: no signal to extract")
    if r == AUTO:
        r = select_rank(lam, R if R is not None else default_R(P, T))
    r = int(r)
    if r < 1 or r >= P:
        raise RankError(f"rank must satisfy 1 <= r < P={P}, got {r}")
    return eig.top(r).copy(), lam.copy(), r


@dataclass(frozen=True)
class FhfmConfig:
    """Ranks, ratio-criterion bound and forecasting grid for a fit.

    ``r1``/``r2`` are positive integers or ``"auto"``. ``R`` defaults to
    ``floor(min(P, T) / 2)``. ``lag`` is the step-1 auto-covariance lag.
    """

    r1: Rank = AUTO
    r2: Rank = AUTO
    R: int | None = None
    difference_step1: bool = False
    lag: int = 1
    arima_grid: ArimaGrid = field(default_factory=ArimaGrid)

    def validate(self, P: int, T: int) -> None:
        for name in ("r1", "r2"):
            v = getattr(self, name)
            if v != AUTO and (not isinstance(v, (int, np.integer)) or v < 1):
                raise RankError(f"{name} must be a positive integer or 'auto', got {v!r}")
        if self.r1 != AUTO and self.r2 != AUTO and self.r1 + self.r2 >= P:
            raise RankError(f"r1 + r2 = {self.r1 + self.r2} must be < P = {P}")
        if self.R is not None and not 1 <= self.R <= min(P, T) - 1:
            raise ValidationError(f"R must lie in [1, min(P, T) - 1], got {self.R}")
        if self.lag < 1:
            raise ValidationError("step-1 lag must be >= 1")

    def resolved_R(self, P: int, T: int) -> int:
        return self.R if self.R is not None else default_R(P, T)

    def to_dict(self) -> dict:
        return {
            "r1": self.r1,
            "r2": self.r2,
            "R": self.R,
            "difference_step1": self.difference_step1,
            "lag": self.lag,
            "arima_grid": self.arima_grid.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FhfmConfig":
        d = dict(d)
        if "arima_grid" in d:
            d["arima_grid"] = ArimaGrid.from_dict(d["arima_grid"])
        return cls(**d)


@dataclass(frozen=True)
class StepResult:
    loadings: np.ndarray
    factors: np.ndarray
    residual: np.ndarray
    spectrum: np.ndarray
    rank: int


def fit_step1(
    panel: Panel, r1: Rank = AUTO, difference: bool = False, R: int | None = None, lag: int = 1
) -> StepResult:
    """Serial-dependence loadings and their level factors.

    Factors are ``b_i^T (y_t - ybar)`` on levels even when the loadings come
    from the differenced panel.
    """
    y = panel.values
    centred = y - sample_mean(panel)[:, None]
    source = difference_panel(panel) if difference else panel
    _check_signal(source.values, "step-1 input")
    L1 = autocov_product(source, lag).matrix
    B, spectrum, r = leading_loadings(L1, r1, R, panel.P, source.T)
    K1 = B.T @ centred
    U = centred - B @ K1
    return StepResult(B, K1, U, spectrum, r)


def fit_step2(residual, r2: Rank = AUTO, R: int | None = None) -> StepResult:
    """Static PCA on the step-1 residual ``U`` (already centred by construction)."""
    U = residual.values if isinstance(residual, Panel) else np.asarray(residual, dtype=float)
    P, T = U.shape
    _check_signal(U, "step-2 residual")
    S0 = U @ U.T / T
    S0 = (S0 + S0.T) / 2
    L2 = S0 @ S0.T
    A, spectrum, r = leading_loadings((L2 + L2.T) / 2, r2, R, P, T)
    K2 = A.T @ U
    E = U - A @ K2
    return StepResult(A, K2, E, spectrum, r)


@dataclass(frozen=True)
class FhfmFit:
    mean: np.ndarray
    B: np.ndarray
    K1: np.ndarray
    A: np.ndarray
    K2: np.ndarray
    residual: np.ndarray
    eigvals_step1: np.ndarray
    eigvals_step2: np.ndarray
    config: FhfmConfig
    row_labels: tuple = ()
    col_labels: tuple = ()

    @property
    def r1(self) -> int:
        return self.B.shape[1]

    @property
    def r2(self) -> int:
        return self.A.shape[1]

    @property
    def loadings(self) -> np.ndarray:
        return np.hstack([self.B, self.A])

    @property
    def factors(self) -> np.ndarray:
        return np.vstack([self.K1, self.K2])

    def fitted_values(self) -> np.ndarray:
        return self.mean[:, None] + self.B @ self.K1 + self.A @ self.K2

    def to_dict(self) -> dict:
        res = self.residual
        return {
            "method": "FHFM",
            "row_labels": list(self.row_labels),
            "col_labels": list(self.col_labels),
            "mean": self.mean.tolist(),
            "B": self.B.tolist(),
            "K1": self.K1.tolist(),
            "A": self.A.tolist(),
            "K2": self.K2.tolist(),
            "residual": res.tolist(),
            "residual_summary": {
                "rmse": float(np.sqrt(np.mean(res**2))),
                "max_abs": float(np.abs(res).max()),
            },
            "eigvals_step1": self.eigvals_step1.tolist(),
            "eigvals_step2": self.eigvals_step2.tolist(),
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FhfmFit":
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(
            mean=arr("mean"),
            B=arr("B").reshape(len(d["mean"]), -1),
            K1=arr("K1").reshape(-1, len(d["col_labels"])),
            A=arr("A").reshape(len(d["mean"]), -1),
            K2=arr("K2").reshape(-1, len(d["col_labels"])),
            residual=arr("residual"),
            eigvals_step1=arr("eigvals_step1"),
            eigvals_step2=arr("eigvals_step2"),
            config=FhfmConfig.from_dict(d["config"]),
            row_labels=tuple(d["row_labels"]),
            col_labels=tuple(d["col_labels"]),
        )


def fit_fhfm(panel: Panel, config: FhfmConfig | None = None) -> FhfmFit:
    """Step 1 followed by step 2 on the step-1 residual."""
    config = config or FhfmConfig()
    config.validate(panel.P, panel.T)
    R = config.resolved_R(panel.P, panel.T)
    s1 = fit_step1(panel, config.r1, config.difference_step1, R, config.lag)
    if config.r2 != AUTO and s1.rank + config.r2 >= panel.P:
        raise RankError(f"r1 + r2 = {s1.rank + config.r2} must be < P = {panel.P}")
    s2 = fit_step2(s1.residual, config.r2, R)
    if s1.rank + s2.rank >= panel.P:
        raise RankError(f"r1 + r2 = {s1.rank + s2.rank} must be < P = {panel.P}")
    return FhfmFit(
        mean=sample_mean(panel),
        B=s1.loadings,
        K1=s1.factors,
        A=s2.loadings,
        K2=s2.factors,
        residual=s2.residual,
        eigvals_step1=s1.spectrum,
        eigvals_step2=s2.spectrum,
        config=config,
        row_labels=panel.row_labels,
        col_labels=panel.col_labels,
    )


def reconstruct(fit) -> Panel:
    """Low-rank representation ``mean + loadings @ factors`` as a panel."""
    return Panel(fit.fitted_values(), fit.row_labels, fit.col_labels)


@dataclass(frozen=True)
class ForecastResult:
    """``forecasts[:, h-1]`` is the ``h``-step-ahead forecast of every series."""

    horizon: int
    forecasts: np.ndarray
    factor_forecasts: np.ndarray
    models: tuple
    row_labels: tuple = ()
    fallback_rows: tuple = ()

    def to_panel(self, first_label=None) -> Panel:
        cols = None
        if first_label is not None:
            cols = tuple(first_label + i for i in range(self.horizon))
        return Panel(self.forecasts, self.row_labels or None, cols)


FACTOR_MODELS = ("auto_arima", "rw_drift")


def forecast_series(series, h: int, grid: ArimaGrid | None = None, factor_model: str = "auto_arima"):
    """Fit one univariate model and forecast ``h`` steps. Returns ``(model, forecasts)``."""
    if factor_model == "auto_arima":
        model = auto_arima(series, grid)
    elif factor_model == "rw_drift":
        model = fit_arima(series, 0, 1, 0, drift=True)
    else:
        raise ValidationError(f"unknown factor model {factor_model!r}")
    return model, forecast_arima(model, series, h)


def forecast_factors(
    factors: np.ndarray, h: int, grid: ArimaGrid | None = None, factor_model: str = "auto_arima"
) -> tuple[np.ndarray, list[ArimaModel]]:
    """Independent univariate forecasts for each row of ``factors``."""
    factors = np.atleast_2d(factors)
    if int(h) < 1:
        raise ValidationError("forecast horizon must be >= 1")
    T = factors.shape[1]
    if T < MIN_FACTOR_LENGTH:
        raise InsufficientLengthError(f"factor series need T >= {MIN_FACTOR_LENGTH}, got {T}")
    out = np.empty((factors.shape[0], int(h)))
    models = []
    for i, series in enumerate(factors):
        try:
            model, fc = forecast_series(series, h, grid, factor_model)
        except FhfmError as exc:
            raise ForecastError(f"factor {i}: {exc}", factor_index=i) from exc
        out[i] = fc
        models.append(model)
    return out, models


def forecast_fhfm(
    fit: FhfmFit, h: int, grid: ArimaGrid | None = None, factor_model: str = "auto_arima"
) -> ForecastResult:
    """``ybar + B k1_{T+h} + A k2_{T+h}`` with per-factor ARIMA forecasts."""
    grid = grid or fit.config.arima_grid
    kf, models = forecast_factors(fit.factors, h, grid, factor_model)
    k1f, k2f = kf[: fit.r1], kf[fit.r1 :]
    fc = fit.mean[:, None] + fit.B @ k1f + fit.A @ k2f
    return ForecastResult(int(h), fc, kf, tuple(models), fit.row_labels)
