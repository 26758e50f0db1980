"""Factor and residual diagnostics, fit and forecast error measures, report rows."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientLengthError, ValidationError
from .panel import Panel


def _arr(x) -> np.ndarray:
    return x.values if isinstance(x, Panel) else np.asarray(x, dtype=float)


@dataclass(frozen=True)
class FactorDiag:
    time_variance: float
    time_dependence: float
    mix: float


@dataclass(frozen=True)
class ResidualDiag:
    time_variance: float
    time_dependence: float
    cross_variance: float
    cross_dependence: float


def factor_diag(series) -> FactorDiag:
    """Variance (divisor ``T-1``) and lag-1 dependence (``T-1`` products over ``T-2``)."""
    k = np.asarray(series, dtype=float).ravel()
    T = k.size
    if T < 3:
        raise InsufficientLengthError(f"factor diagnostics need T >= 3, got {T}")
    c = k - k.mean()
    var = float(c @ c / (T - 1))
    dep = float(c[:-1] @ c[1:] / (T - 2))
    return FactorDiag(var, dep, var + dep)


def _mean_abs_offdiag_cov(x: np.ndarray) -> float:
    # columns of x are the variables; covariance divides by the row count
    n, m = x.shape
    c = x - x.mean(axis=0)
    cov = c.T @ c / n
    total = np.abs(cov).sum() - np.abs(np.diag(cov)).sum()
    return float(total / (m * (m - 1)))


def residual_diag(residual) -> ResidualDiag:
    """Average variances and mean absolute pairwise covariances across time and series.

    Time dependence averages ``|cov(e_.t1, e_.t2)|`` over ordered pairs
    ``t1 != t2`` (each covariance taken over the ``P`` series, divisor ``P``);
    cross dependence does the same over series pairs with divisor ``T``.
    """
    e = _arr(residual)
    if e.ndim != 2:
        raise ValidationError("residual must be a P x T matrix")
    P, T = e.shape
    if P < 2 or T < 2:
        raise InsufficientLengthError(f"residual diagnostics need P >= 2 and T >= 2, got {P}x{T}")
    time_var = float(np.mean(e.var(axis=1, ddof=1)))
    cross_var = float(np.mean(e.var(axis=0, ddof=1)))
    time_dep = _mean_abs_offdiag_cov(e)
    cross_dep = _mean_abs_offdiag_cov(e.T)
    return ResidualDiag(time_var, time_dep, cross_var, cross_dep)


def fit_rmse(actual, fitted, rows=None, cols=None) -> float:
    """RMSE over all cells, or over positional ``rows`` / ``cols`` when given."""
    a, f = _arr(actual), _arr(fitted)
    if a.shape != f.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {f.shape}")
    d = a - f
    if rows is not None:
        d = d[np.asarray(rows, dtype=int), :]
    if cols is not None:
        d = d[:, np.asarray(cols, dtype=int)]
    if d.size == 0:
        raise ValidationError("selector picks no cells")
    return float(np.sqrt(np.mean(d**2)))


@dataclass(frozen=True)
class SplitFrmse:
    overall: float
    dependent: float
    independent: float


def frmse(actual, forecast, split=None):
    """``sqrt(sum ||yhat - y||^2 / (h P))``.

    With ``split=(dependent_rows, independent_rows)`` (a partition of the
    rows) each part is normalised by its own ``h * rows`` count.
    """
    a, f = np.atleast_2d(_arr(actual)), np.atleast_2d(_arr(forecast))
    if a.shape != f.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {f.shape}")
    sq = (f - a) ** 2
    overall = float(np.sqrt(sq.mean()))
    if split is None:
        return overall
    dep, ind = (np.asarray(s, dtype=int) for s in split)
    P = a.shape[0]
    together = np.concatenate([dep, ind])
    if len(dep) == 0 or len(ind) == 0 or sorted(together.tolist()) != list(range(P)):
        raise ValidationError("split row sets must partition the rows and both be non-empty")
    return SplitFrmse(overall, float(np.sqrt(sq[dep].mean())), float(np.sqrt(sq[ind].mean())))


def fmse_fmae(estimates, truths) -> tuple[float, float]:
    e = np.asarray(estimates, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if e.size != t.size:
        raise ValidationError(f"length mismatch: {e.size} vs {t.size}")
    if e.size == 0:
        raise ValidationError("need at least one estimate")
    d = e - t
    return float(np.mean(d**2)), float(np.mean(np.abs(d)))


@dataclass
class EvalReport:
    """Long-format metric table: one row per (method, horizon, metric)."""

    rows: list = field(default_factory=list)

    def add(self, method: str, horizon, metric: str, value: float) -> None:
        self.rows.append((str(method), horizon, str(metric), float(value)))

    def extend(self, other: "EvalReport") -> None:
        self.rows.extend(other.rows)

    def sorted_rows(self) -> list:
        # horizons may be ints or summary labels such as "mean"
        return sorted(self.rows, key=lambda r: (r[0], isinstance(r[1], str), str(r[1]).zfill(8), r[2]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "horizon", "metric", "value"])
        for m, h, k, v in self.sorted_rows():
            w.writerow([m, h, k, repr(v)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def value(self, method: str, horizon, metric: str) -> float:
        for m, h, k, v in self.rows:
            if m == method and h == horizon and k == metric:
                return v
        raise KeyError((method, horizon, metric))
