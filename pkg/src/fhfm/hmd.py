"""Reader for HMD period 1x1 text files and the age-capped log-rate panel."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CoverageError, ParseError, PreprocessingError, ValidationError
from .panel import Panel

log = logging.getLogger(__name__)

AGE_LABELS = tuple(str(a) for a in range(110)) + ("110+",)
SEXES = ("Female", "Male", "Total")
KINDS = ("Mx", "Deaths", "Exposures")


@dataclass(frozen=True)
class HmdTable:
    """``values[sex]`` is an ``n_years x 111`` array; NaN marks a missing cell."""

    kind: str
    years: tuple
    values: dict

    def column(self, sex: str) -> np.ndarray:
        if sex not in self.values:
            raise ValidationError(f"unknown sex column {sex!r}; expected one of {SEXES}")
        return self.values[sex]

    def year_index(self, year: int) -> int:
        try:
            return self.years.index(year)
        except ValueError:
            raise KeyError(year) from None


def _parse_value(tok: str, lineno: int) -> float:
    if tok == ".":
        return np.nan
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"non-numeric value {tok!r}", lineno) from None
    if not np.isfinite(v) or v < 0:
        raise ParseError(f"value must be finite and nonnegative, got {tok!r}", lineno)
    return v


def parse_hmd(source, kind: str = "Mx") -> HmdTable:
    """Parse an HMD ``*_1x1.txt`` layout from text or a path.

    Everything up to and including the ``Year Age Female Male Total`` header
    row is skipped; every later non-blank line must be a data row.
    """
    if kind not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}, got {kind!r}")
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8", errors="strict")
    else:
        text = source
    lines = text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if line.split()[:2] == ["Year", "Age"]:
            if line.split() != ["Year", "Age", "Female", "Male", "Total"]:
                raise ParseError("header must read 'Year Age Female Male Total'", i + 1)
            start = i + 1
            break
    if start is None:
        raise ParseError("no 'Year Age Female Male Total' header found")

    rows: dict[int, dict[str, list]] = {}
    for i in range(start, len(lines)):
        lineno = i + 1
        toks = lines[i].split()
        if not toks:
            continue
        if len(toks) != 5:
            raise ParseError(f"expected 5 fields, got {len(toks)}", lineno)
        try:
            year = int(toks[0])
        except ValueError:
            raise ParseError(f"bad year {toks[0]!r}", lineno) from None
        age = toks[1]
        if age not in AGE_LABELS:
            raise ParseError(f"bad age label {age!r}", lineno)
        seen = len(rows.get(year, ()))
        if seen == len(AGE_LABELS):
            raise ParseError(f"year {year}: rows past the {AGE_LABELS[-1]} age", lineno)
        expected = AGE_LABELS[seen]
        if age != expected:
            raise ParseError(f"year {year}: expected age {expected!r}, got {age!r}", lineno)
        rows.setdefault(year, []).append([_parse_value(t, lineno) for t in toks[2:]])

    if not rows:
        raise ParseError("no data rows")
    years = tuple(sorted(rows))
    for y in years:
        if len(rows[y]) != len(AGE_LABELS):
            raise ParseError(f"year {y}: incomplete age ladder ({len(rows[y])} of {len(AGE_LABELS)} ages)")
    cube = np.array([rows[y] for y in years])  # years x ages x sexes
    values = {s: cube[:, :, j].copy() for j, s in enumerate(SEXES)}
    return HmdTable(kind, years, values)


def _year_block(table: HmdTable, sex: str, years: list) -> np.ndarray:
    missing = [y for y in years if y not in table.years]
    if missing:
        raise CoverageError(f"{table.kind} table lacks years {missing[0]}..{missing[-1]}", missing)
    idx = [table.year_index(y) for y in years]
    return table.column(sex)[idx].T  # ages x years


def build_log_panel(
    mx: HmdTable,
    deaths: HmdTable | None = None,
    exposures: HmdTable | None = None,
    sex: str = "Total",
    year_range: tuple | None = None,
    age_cap: int = 90,
    fill_policy: str = "error",
) -> Panel:
    """Log death rates for ages ``0..age_cap-1`` plus a pooled ``age_cap+`` row.

    The open row is ``sum D / sum E`` over the pooled ages when both count
    tables are supplied, otherwise the plain mean of the pooled rates (with a
    warning). ``fill_policy="min_positive"`` replaces zero or missing rates by
    the smallest positive rate of the same age over the selected years.
    """
    if fill_policy not in ("error", "min_positive"):
        raise ValidationError(f"unknown fill policy {fill_policy!r}")
    if not 1 <= age_cap <= 110:
        raise ValidationError("age_cap must lie in 1..110")
    if year_range is None:
        years = list(mx.years)
    else:
        years = list(range(int(year_range[0]), int(year_range[1]) + 1))
    m = _year_block(mx, sex, years)
    young = m[:age_cap]
    if (deaths is None) != (exposures is None):
        raise ValidationError("deaths and exposures must be supplied together")
    if deaths is not None:
        D = _year_block(deaths, sex, years)[age_cap:]
        E = _year_block(exposures, sex, years)[age_cap:]
        if np.isnan(D).any() or np.isnan(E).any():
            raise PreprocessingError(f"missing deaths or exposures at ages {age_cap}+")
        tot_e = E.sum(axis=0)
        if np.any(tot_e <= 0):
            raise PreprocessingError(f"zero exposure in the pooled {age_cap}+ group")
        pooled = D.sum(axis=0) / tot_e
    else:
        warnings.warn(
            f"no deaths/exposures supplied: the {age_cap}+ rate is an unweighted mean of rates",
            stacklevel=2,
        )
        pooled = np.nanmean(m[age_cap:], axis=0)
    rates = np.vstack([young, pooled[None, :]])

    bad = ~(rates > 0)  # zero or NaN
    if bad.any():
        if fill_policy == "error":
            r, c = np.argwhere(bad)[0]
            raise PreprocessingError(
                f"{int(bad.sum())} zero or missing rates; first at age row {r}, year {years[c]}"
            )
        for r in np.flatnonzero(bad.any(axis=1)):
            pos = rates[r][rates[r] > 0]
            if pos.size == 0:
                raise PreprocessingError(f"age row {r} has no positive rate to fill from")
            log.warning("filling %d cells of age row %d with %g", int(bad[r].sum()), r, pos.min())
            rates[r, bad[r]] = pos.min()

    labels = tuple(range(age_cap)) + (f"{age_cap}+",)
    return Panel(np.log(rates), labels, tuple(years))
