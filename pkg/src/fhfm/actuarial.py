"""Survival probabilities, life expectancy and deferred life-annuity values.

One-year death probabilities are taken equal to the central death rate
(``q = m``), so every rate used must lie in ``[0, 1]``. Period quantities
walk down a single year's column; cohort quantities follow the diagonal,
using year ``T + j`` for age ``x + j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, NumericError, ValidationError
from .panel import Panel

PERIOD = "period"
COHORT = "cohort"
OBSERVED = "observed"
FORECAST = "forecast"


@dataclass(frozen=True)
class MortalitySurface:
    """Rates ``m[age, year]`` on a complete grid; ages ``0..max_age``, contiguous years.

    ``clip_rates`` caps rates above 1 at 1 instead of raising when they are used.
    """

    rates: np.ndarray
    first_year: int
    provenance: tuple = ()
    clip_rates: bool = False

    def __post_init__(self):
        m = np.array(self.rates, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValidationError("rates must be a non-empty ages x years matrix")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValidationError("rates must be finite and nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "rates", m)
        prov = tuple(self.provenance) or (OBSERVED,) * m.shape[1]
        if len(prov) != m.shape[1] or any(p not in (OBSERVED, FORECAST) for p in prov):
            raise ValidationError("one provenance flag ('observed' or 'forecast') per year")
        object.__setattr__(self, "provenance", prov)

    @property
    def max_age(self) -> int:
        return self.rates.shape[0] - 1

    @property
    def years(self) -> range:
        return range(self.first_year, self.first_year + self.rates.shape[1])

    @classmethod
    def from_log_panel(cls, panel: Panel, forecast=None, **kw) -> "MortalitySurface":
        """Exponentiate a log-rate panel (rows = ages in order, columns = consecutive years).

        ``forecast`` is an optional ``P x H`` log-rate matrix (or an object with
        a ``forecasts`` attribute) appended after the last observed year and
        flagged as forecast.
        """
        years = panel.col_labels
        if any(b - a != 1 for a, b in zip(years[:-1], years[1:])):
            raise ValidationError("year labels must be consecutive integers")
        logm = panel.values
        prov = [OBSERVED] * panel.T
        if forecast is not None:
            f = np.asarray(getattr(forecast, "forecasts", forecast), dtype=float)
            if f.ndim != 2 or f.shape[0] != panel.P:
                raise ValidationError("forecast block must have one row per age")
            logm = np.hstack([logm, f])
            prov += [FORECAST] * f.shape[1]
        return cls(np.exp(logm), int(years[0]), tuple(prov), **kw)

    def splice(self, forecast_log_rates, first_year: int) -> "MortalitySurface":
        """Replace/extend years from ``first_year`` on with forecast log rates."""
        f = np.asarray(getattr(forecast_log_rates, "forecasts", forecast_log_rates), dtype=float)
        keep = first_year - self.first_year
        if keep < 0 or keep > self.rates.shape[1] or f.shape[0] != self.rates.shape[0]:
            raise ValidationError("forecast block must start inside or right after the surface")
        rates = np.hstack([self.rates[:, :keep], np.exp(f)])
        prov = self.provenance[:keep] + (FORECAST,) * f.shape[1]
        return MortalitySurface(rates, self.first_year, prov, self.clip_rates)

    def one_year_deaths(self, cells) -> np.ndarray:
        """``q`` for each ``(age, year)`` in ``cells``; raises listing every uncovered cell."""
        missing = [
            (a, y) for a, y in cells
            if not (0 <= a <= self.max_age and self.first_year <= y < self.first_year + self.rates.shape[1])
        ]
        if missing:
            years = sorted({y for _, y in missing})
            ages = sorted({a for a, _ in missing})
            raise CoverageError(
                f"surface lacks {len(missing)} cells: ages {ages[0]}..{ages[-1]}, years {years[0]}..{years[-1]}",
                missing,
            )
        if not cells:
            return np.zeros(0)
        ai = np.fromiter((a for a, _ in cells), dtype=int, count=len(cells))
        yi = np.fromiter((y - self.first_year for _, y in cells), dtype=int, count=len(cells))
        q = self.rates[ai, yi]
        if np.any(q > 1):
            if not self.clip_rates:
                bad = [cells[i] for i in np.flatnonzero(q > 1)]
                raise NumericError(f"death rates above 1 at (age, year) cells {bad[:5]}")
            q = np.minimum(q, 1.0)
        return q


def _cells(x: int, year: int, n: int, basis: str) -> list:
    if basis == PERIOD:
        return [(x + j, year) for j in range(n)]
    if basis == COHORT:
        return [(x + j, year + j) for j in range(n)]
    raise ValidationError(f"basis must be 'period' or 'cohort', got {basis!r}")


def survival_curve(surface: MortalitySurface, x: int, year: int, n: int, basis: str = COHORT) -> np.ndarray:
    """``[1p, 2p, ..., np]`` for a life aged ``x`` in ``year``."""
    if n < 0:
        raise ValidationError("number of years must be nonnegative")
    if n > 0 and x + n > surface.max_age + 1:
        raise CoverageError(f"ages {x}..{x + n - 1} exceed the surface's last age {surface.max_age}")
    q = surface.one_year_deaths(_cells(x, year, n, basis))
    return np.cumprod(1.0 - q)


def survival_prob(surface: MortalitySurface, x: int, year: int, t: int, basis: str = PERIOD) -> float:
    """``tp_x = prod_{j<t} (1 - m_{x+j, year or year+j})``."""
    if t == 0:
        return 1.0
    return float(survival_curve(surface, x, year, t, basis)[-1])


def life_expectancy(surface: MortalitySurface, x: int, year: int, basis: str = COHORT, w: int = 91) -> float:
    """Curtate ``sum_{t=1}^{w-x-1} tp_x``; ``w`` is the limiting age."""
    n = w - x - 1
    if n <= 0:
        return 0.0
    return float(survival_curve(surface, x, year, n, basis).sum())


@dataclass(frozen=True)
class AnnuityTerms:
    interest: float = 0.02
    retirement_age: int = 66
    end_age: int = 90
    payment: float = 1.0

    def __post_init__(self):
        if not self.interest > -1:
            raise ValidationError("interest rate must exceed -1")
        if self.retirement_age > self.end_age:
            raise ValidationError("retirement age must not exceed end age")


def annuity_pv(surface: MortalitySurface, x: int, year: int, terms: AnnuityTerms | None = None) -> float:
    """Present value of the deferred life annuity on a cohort basis.

    At or past retirement: ``sum_{t=1}^{end-x} tp_x v^t``. Before retirement the
    value at retirement, ``ret - x`` years later, is discounted to today with
    no survival factor to retirement.
    """
    terms = terms or AnnuityTerms()
    v = 1.0 / (1.0 + terms.interest)
    ret = terms.retirement_age
    if x < ret:
        return annuity_pv(surface, ret, year + (ret - x), terms) * v ** (ret - x)
    n = terms.end_age - x
    if n <= 0:
        return 0.0
    p = survival_curve(surface, x, year, n, COHORT)
    disc = v ** np.arange(1, n + 1)
    return float(terms.payment * (p @ disc))


def annuity_certain(x: int, terms: AnnuityTerms | None = None) -> float:
    """Upper bound for :func:`annuity_pv` at ages past retirement: no mortality."""
    terms = terms or AnnuityTerms()
    n = terms.end_age - x
    v = 1.0 / (1.0 + terms.interest)
    return float(terms.payment * sum(v**t for t in range(1, n + 1)))
