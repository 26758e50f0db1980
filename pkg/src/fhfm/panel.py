"""Labeled panel container and the shared numerical kernels.

A panel stores a P x T matrix: one row per series (an age, or a simulated
coordinate) and one column per time point. Everything else in the package
consumes panels through the functions defined here: means, lagged
auto-covariances and a symmetric eigendecomposition with a fixed ordering
and sign convention.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    InsufficientLengthError,
    InvalidLagError,
    NumericError,
    ParseError,
    ValidationError,
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Panel:
    """P x T real matrix with row (series) and column (time) labels.

    Column labels must be strictly increasing. Values must be finite; missing
    data is handled upstream (see :mod:`fhfm.hmd`).
    """

    values: np.ndarray
    row_labels: tuple = None
    col_labels: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise ValidationError("panel values must be a 2-d matrix")
        P, T = values.shape
        if P < 1 or T < 2:
            raise ValidationError(f"panel needs P >= 1 and T >= 2, got {P}x{T}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("panel values must all be finite")
        rows = tuple(range(P)) if self.row_labels is None else tuple(self.row_labels)
        cols = tuple(range(1, T + 1)) if self.col_labels is None else tuple(self.col_labels)
        if len(rows) != P:
            raise ValidationError(f"{len(rows)} row labels for {P} rows")
        if len(cols) != T:
            raise ValidationError(f"{len(cols)} column labels for {T} columns")
        if any(not (a < b) for a, b in zip(cols[:-1], cols[1:])):
            raise ValidationError("column labels must be strictly increasing")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def P(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "Panel":
        """Same labels, new matrix of identical shape."""
        return Panel(values, self.row_labels, self.col_labels)

    def select_columns(self, start: int, stop: int) -> "Panel":
        """Positional column slice ``[start, stop)``."""
        return Panel(self.values[:, start:stop], self.row_labels, self.col_labels[start:stop])

    def column_index(self, label) -> int:
        try:
            return self.col_labels.index(label)
        except ValueError:
            raise KeyError(f"time label {label!r} not in panel") from None

    def row_index(self, label) -> int:
        try:
            return self.row_labels.index(label)
        except ValueError:
            raise KeyError(f"series label {label!r} not in panel") from None

    # --- CSV ------------------------------------------------------------

    def to_csv(self, path=None) -> str:
        """Write header = time labels, first column = series labels.

        Returns the CSV text; also writes it to ``path`` when given.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["series", *self.col_labels])
        for label, row in zip(self.row_labels, self.values):
            w.writerow([label, *(repr(float(v)) for v in row)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, source) -> "Panel":
        """Parse a panel CSV from a path or from CSV text.

        Empty cells and ``.`` are rejected: a panel never has holes.
        """
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source
        rows = list(csv.reader(io.StringIO(text)))
        rows = [r for r in rows if r]
        if len(rows) < 2:
            raise ParseError("panel CSV needs a header and at least one data row")
        cols = tuple(_parse_label(c) for c in rows[0][1:])
        labels, data = [], []
        for lineno, r in enumerate(rows[1:], start=2):
            if len(r) != len(cols) + 1:
                raise ParseError(f"expected {len(cols) + 1} cells, got {len(r)}", lineno)
            vals = []
            for cell in r[1:]:
                cell = cell.strip()
                if cell in ("", "."):
                    raise ParseError("missing value in panel CSV", lineno)
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}", lineno) from None
            labels.append(_parse_label(r[0]))
            data.append(vals)
        try:
            return cls(np.array(data), tuple(labels), cols)
        except ValidationError as exc:
            raise ParseError(str(exc)) from exc


def _parse_label(s: str):
    s = s.strip()
    try:
        return int(s)
    except ValueError:
        return s


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenvalues in nonincreasing order with paired eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _frozen(self.eigenvectors))

    def top(self, r: int) -> np.ndarray:
        return self.eigenvectors[:, :r]


@dataclass(frozen=True)
class CovMatrix:
    """Sample (auto-)covariance matrix, or a product of them, tagged by lag."""

    matrix: np.ndarray
    lag: int = 0

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))


def sample_mean(panel: Panel) -> np.ndarray:
    """Row means ``(1/T) * sum_t y_t``."""
    return panel.values.mean(axis=1)


def sample_autocov(panel: Panel, lag: int) -> CovMatrix:
    """Lag-``lag`` sample auto-covariance centred at the full-sample mean.

    ``Sigma(l) = 1/(T-l) * sum_{t=1}^{T-l} (y_{t+l} - ybar)(y_t - ybar)^T`` for
    ``l >= 1`` and ``1/T * sum_t (y_t - ybar)(y_t - ybar)^T`` for ``l = 0``.
    """
    lag = int(lag)
    T = panel.T
    if lag < 0 or lag >= T:
        raise InvalidLagError(f"lag must satisfy 0 <= lag < T={T}, got {lag}")
    x = panel.values - sample_mean(panel)[:, None]
    if lag == 0:
        m = x @ x.T / T
        m = (m + m.T) / 2
    else:
        m = x[:, lag:] @ x[:, : T - lag].T / (T - lag)
    return CovMatrix(m, lag)


def autocov_product(panel: Panel, lag: int) -> CovMatrix:
    """``Sigma(l) Sigma(l)^T``, symmetrised; the matrix the factor steps decompose."""
    s = sample_autocov(panel, lag).matrix
    m = s @ s.T
    return CovMatrix((m + m.T) / 2, lag)


def _apply_sign_convention(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _jacobi_eigh(a: np.ndarray, max_sweeps: int) -> tuple[np.ndarray, np.ndarray]:
    # cyclic Jacobi; threshold relative to the Frobenius norm
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a**2) - np.sum(np.diag(a) ** 2))
        if off <= 1e-15 * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise ConvergenceError(f"Jacobi sweeps did not converge within {max_sweeps} sweeps")


def sym_eigen_desc(matrix, method: str = "lapack") -> EigenDecomp:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending.

    The input is symmetrised as ``(A + A^T)/2`` first. Each eigenvector is
    signed so that its entry of largest magnitude is nonnegative (the first
    such entry on ties).

    Parameters
    ----------
    matrix : array_like, shape (n, n)
    method : {"lapack", "jacobi"}
        ``"lapack"`` runs Householder tridiagonalisation followed by implicit
        QL/QR (LAPACK ``dsyev``). ``"jacobi"`` is a cyclic Jacobi solver,
        slower but dependency free; useful for small matrices and as a
        cross-check.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("eigendecomposition needs a square matrix")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    n = a.shape[0]
    norm = np.abs(a).max() if n else 0.0
    if norm > 0 and np.abs(a - a.T).max() > 1e-8 * norm:
        raise ValidationError("matrix is not symmetric within 1e-8 relative tolerance")
    a = (a + a.T) / 2
    if method == "lapack":
        try:
            w, v = scipy.linalg.eigh(a, driver="ev", check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"symmetric QL/QR iteration failed: {exc}") from exc
    elif method == "jacobi":
        w, v = _jacobi_eigh(a, max_sweeps=100 * max(n, 1))
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    order = np.argsort(-w, kind="stable")
    return EigenDecomp(w[order], _apply_sign_convention(v[:, order]))


def difference_panel(panel: Panel) -> Panel:
    """First differences ``y_{t+1} - y_t``, labelled by the later time point."""
    if panel.T < 3:
        raise InsufficientLengthError(f"differencing needs T >= 3, got T={panel.T}")
    return Panel(np.diff(panel.values, axis=1), panel.row_labels, panel.col_labels[1:])
