"""Method registry, rolling-window evaluation, simulation studies, annuity experiment.

These functions are what the command-line front end drives; they are
ordinary library calls so tests can run them directly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .actuarial import COHORT, PERIOD, AnnuityTerms, MortalitySurface, annuity_pv, life_expectancy
from .arima import ArimaGrid
from .baselines import fit_dpca, fit_forecast_individual, fit_lee_carter, forecast_baseline
from .errors import ConfigError, InsufficientLengthError
from .hierarchical import MIN_FACTOR_LENGTH, FhfmConfig, fit_fhfm, forecast_fhfm
from .metrics import EvalReport, factor_diag, fit_rmse, fmse_fmae, frmse, residual_diag
from .panel import Panel
from .simgen import DgpSpec, generate

METHODS = ("FHFM", "CPCA", "DPCA", "LeeCarter", "Individual")


@dataclass(frozen=True)
class MethodSpec:
    """One method with its settings.

    ``r`` is the one-stage rank (``r1``/``r2`` for FHFM); ``difference``
    estimates loadings on first differences; ``ell0``/``include_lag0`` pick
    the DPCA lag set; ``factor_model`` is ``auto_arima`` or ``rw_drift``.
    """

    name: str
    label: str = ""
    r: object = 1
    r1: object = 1
    r2: object = 1
    difference: bool = False
    ell0: int = 1
    include_lag0: bool = True
    factor_model: str = "auto_arima"

    def __post_init__(self):
        if self.name not in METHODS:
            raise ConfigError(f"unknown method {self.name!r}; expected one of {METHODS}")
        if not self.label:
            object.__setattr__(self, "label", self.name)

    @classmethod
    def from_dict(cls, d) -> "MethodSpec":
        if isinstance(d, str):
            return cls(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown method settings {sorted(unknown)}")
        return cls(**d)


def fit_method(panel: Panel, spec: MethodSpec):
    if spec.name == "FHFM":
        cfg = FhfmConfig(r1=spec.r1, r2=spec.r2, difference_step1=spec.difference)
        return fit_fhfm(panel, cfg)
    if spec.name == "CPCA":
        return fit_dpca(panel, spec.r, 0, True, spec.difference)
    if spec.name == "DPCA":
        return fit_dpca(panel, spec.r, spec.ell0, spec.include_lag0, spec.difference)
    if spec.name == "LeeCarter":
        return fit_lee_carter(panel)
    raise ConfigError("the individual method has no low-rank fit")


def forecast_method(panel: Panel, spec: MethodSpec, h: int, grid: ArimaGrid | None = None) -> np.ndarray:
    """``P x h`` forecast of the columns following ``panel``."""
    if spec.name == "Individual":
        return fit_forecast_individual(panel, h, grid).forecasts
    fit = fit_method(panel, spec)
    if spec.name == "FHFM":
        return forecast_fhfm(fit, h, grid, spec.factor_model).forecasts
    return forecast_baseline(fit, h, grid, spec.factor_model).forecasts


# --- rolling-window evaluation --------------------------------------------


ROLLING_SCHEMES = ("target", "origin")


def rolling_windows(panel: Panel, test_start, n_windows: int, H: int, scheme: str = "target"):
    """Yield ``(window, h, cut)``: train on columns ``[0, cut)``, score steps ``1..h``.

    ``target``: window ``w`` is test column ``t_w = test_start + w - 1`` and
    FRMSE(h) trains through ``t_w - h``, so the ``h`` scored columns end at
    ``t_w``. ``origin``: window ``w`` trains on everything before ``t_w`` and
    scores the ``h`` columns from ``t_w`` on; pairs running past the last
    column are skipped.
    """
    if scheme not in ROLLING_SCHEMES:
        raise ConfigError(f"rolling scheme must be one of {ROLLING_SCHEMES}, got {scheme!r}")
    if n_windows < 1 or H < 1:
        raise ConfigError("n_windows and horizons must be >= 1")
    first = panel.column_index(test_start)
    if first + n_windows > panel.T:
        raise InsufficientLengthError(f"{n_windows} test columns from {test_start!r} run past the data")
    for w in range(n_windows):
        t = first + w
        for h in range(1, H + 1):
            cut = t - h + 1 if scheme == "target" else t
            if cut + h > panel.T:
                continue
            if cut < MIN_FACTOR_LENGTH:
                raise InsufficientLengthError(
                    f"window {w + 1}, h={h}: only {cut} training columns (need {MIN_FACTOR_LENGTH})"
                )
            yield w, h, cut


def rolling_evaluation(
    panel: Panel,
    methods,
    H: int,
    test_start,
    n_windows: int = 10,
    grid: ArimaGrid | None = None,
    threads: int = 1,
    scheme: str = "target",
) -> EvalReport:
    """Per-method FRMSE(h), averaged over windows; mean/median over h appended.

    FRMSE(h) is cumulative over the ``h`` scored steps. Each distinct training
    cut is fitted once and forecast as far as any window needs.
    """
    specs = [m if isinstance(m, MethodSpec) else MethodSpec.from_dict(m) for m in methods]
    pairs = list(rolling_windows(panel, test_start, n_windows, H, scheme))
    reach = {}
    for _, h, cut in pairs:
        reach[cut] = max(reach.get(cut, 0), h)

    def job(args):
        spec, cut = args
        return (spec.label, cut), forecast_method(panel.select_columns(0, cut), spec, reach[cut], grid)

    tasks = [(s, cut) for s in specs for cut in sorted(reach)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            forecasts = dict(pool.map(job, tasks))
    else:
        forecasts = dict(job(t) for t in tasks)

    report = EvalReport()
    for spec in specs:
        per_h = []
        for h in range(1, H + 1):
            vals = [
                frmse(panel.values[:, cut : cut + h], forecasts[(spec.label, cut)][:, :h])
                for _, hh, cut in pairs if hh == h
            ]
            if not vals:
                continue
            v = float(np.mean(vals))
            per_h.append(v)
            report.add(spec.label, h, "FRMSE", v)
        report.add(spec.label, "mean", "FRMSE", float(np.mean(per_h)))
        report.add(spec.label, "median", "FRMSE", float(np.median(per_h)))
    return report


# --- simulation studies ----------------------------------------------------

SIM_METHODS = (
    MethodSpec("FHFM", r1=1, r2=1),
    MethodSpec("CPCA", r=1),
    MethodSpec("DPCA", r=1, ell0=1, include_lag0=True),
)


def replication_seed(base_seed: int, rep: int) -> int:
    return int(base_seed) * 100_003 + int(rep)


@dataclass
class ReplicationResult:
    factor: dict = field(default_factory=dict)
    residual: dict = field(default_factory=dict)
    frmse: dict = field(default_factory=dict)


def _first_factor(fit) -> np.ndarray:
    return fit.factors[0]


def simulate_replication(
    spec: DgpSpec,
    methods=SIM_METHODS,
    horizons=(1, 5),
    diagnostics: bool = True,
    grid: ArimaGrid | None = None,
) -> ReplicationResult:
    """Diagnostics on the full panel and hold-out FRMSE(h) for one simulated panel.

    ``frmse[(label, h)]`` is a float, or a ``SplitFrmse`` when the design has
    an independent block.
    """
    sim = generate(spec)
    y = sim.panel
    out = ReplicationResult()
    if diagnostics:
        for m in methods:
            fit = fit_method(y, m)
            out.factor[m.label] = factor_diag(_first_factor(fit))
            out.residual[m.label] = residual_diag(fit.residual)
    split = (sim.dependent_rows, sim.independent_rows) if sim.independent_rows else None
    for h in horizons:
        train = y.select_columns(0, y.T - h)
        actual = y.values[:, y.T - h :]
        for m in methods:
            fc = forecast_method(train, m, h, grid)
            out.frmse[(m.label, h)] = frmse(actual, fc, split)
    return out


def simulation_study(
    example_id: int,
    P: int,
    T: int,
    n_reps: int,
    base_seed: int = 0,
    methods=SIM_METHODS,
    horizons=(1, 5),
    diagnostics: bool = True,
    d: float | None = None,
    threads: int = 1,
) -> list[ReplicationResult]:
    specs = [DgpSpec(example_id, P, T, replication_seed(base_seed, r), d) for r in range(n_reps)]

    def job(s):
        return simulate_replication(s, methods, horizons, diagnostics)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(job, specs))
    return [job(s) for s in specs]


def summarize_study(results: list[ReplicationResult]) -> EvalReport:
    """Averages over replications in long format."""
    rep = EvalReport()
    if not results:
        return rep
    for label in results[0].factor:
        for fld in ("time_variance", "time_dependence", "mix"):
            rep.add(label, 0, f"factor_{fld}", np.mean([getattr(r.factor[label], fld) for r in results]))
        for fld in ("time_variance", "time_dependence", "cross_variance", "cross_dependence"):
            rep.add(label, 0, f"residual_{fld}", np.mean([getattr(r.residual[label], fld) for r in results]))
    for label, h in results[0].frmse:
        vals = [r.frmse[(label, h)] for r in results]
        if isinstance(vals[0], float):
            rep.add(label, h, "FRMSE", np.mean(vals))
        else:
            for part in ("overall", "dependent", "independent"):
                rep.add(label, h, f"FRMSE_{part}", np.mean([getattr(v, part) for v in vals]))
    return rep


# --- fit-quality tables ----------------------------------------------------


def fit_rmse_report(panel: Panel, fits: dict, rows=(), cols=()) -> EvalReport:
    """RMSE per method overall, for selected row labels and for selected column labels."""
    rep = EvalReport()
    for label, fit in fits.items():
        fitted = fit.fitted_values()
        rep.add(label, "all", "RMSE", fit_rmse(panel.values, fitted))
        for r in rows:
            rep.add(label, f"row:{r}", "RMSE", fit_rmse(panel.values, fitted, rows=[panel.row_index(r)]))
        for c in cols:
            rep.add(label, f"col:{c}", "RMSE", fit_rmse(panel.values, fitted, cols=[panel.column_index(c)]))
    return rep


# --- annuity experiment ----------------------------------------------------


@dataclass
class ActuarialOutcome:
    summary: EvalReport
    selected: list  # (year, age, quantity, basis, source, value)


def _last_year_used(quantity: str, basis: str, x: int, year: int, w: int, terms: AnnuityTerms) -> int:
    if basis == PERIOD:
        return year
    if quantity == "life_expectancy":
        return year + w - x - 2
    start_age = max(x, terms.retirement_age)
    start_year = year + (start_age - x)
    return start_year + terms.end_age - start_age - 1


_QUANTITIES = (("life_expectancy", PERIOD), ("life_expectancy", COHORT), ("annuity_pv", COHORT))


def _quantity(surface, q: str, basis: str, x: int, year: int, w: int, terms: AnnuityTerms) -> float:
    if q == "life_expectancy":
        return life_expectancy(surface, x, year, basis, w)
    return annuity_pv(surface, x, year, terms)


def actuarial_experiment(
    panel: Panel,
    methods,
    train_end: int = 1988,
    test_end: int = 2018,
    selections=((1990, 65),),
    terms: AnnuityTerms | None = None,
    w: int = 91,
    grid: ArimaGrid | None = None,
) -> ActuarialOutcome:
    """Compare life expectancies and annuity values from forecast and actual surfaces.

    Each method's surface keeps observed rates up to ``train_end`` and uses
    its forecast after that. Errors are averaged over every (age, year) whose
    calculation needs at least one forecast year and stays within
    ``test_end``; ``selections`` are also reported one by one.
    """
    terms = terms or AnnuityTerms()
    specs = [m if isinstance(m, MethodSpec) else MethodSpec.from_dict(m) for m in methods]
    cut = panel.column_index(train_end) + 1
    last = panel.column_index(test_end) + 1
    train = panel.select_columns(0, cut)
    surfaces = {"true": MortalitySurface.from_log_panel(panel.select_columns(0, last))}
    for s in specs:
        fc = forecast_method(train, s, last - cut, grid)
        surfaces[s.label] = MortalitySurface.from_log_panel(train, fc)

    years = panel.col_labels[:last]
    summary = EvalReport()
    for q, basis in _QUANTITIES:
        cells = [
            (x, y) for y in years for x in range(panel.P - 1)
            if train_end < _last_year_used(q, basis, x, y, w, terms) <= test_end
        ]
        truth = {c: _quantity(surfaces["true"], q, basis, *c, w, terms) for c in cells}
        for s in specs:
            est = [_quantity(surfaces[s.label], q, basis, *c, w, terms) for c in cells]
            mse, mae = fmse_fmae(est, [truth[c] for c in cells])
            summary.add(s.label, f"{q}_{basis}", "FMSE", mse)
            summary.add(s.label, f"{q}_{basis}", "FMAE", mae)
    selected = []
    for year, x in selections:
        for name, surface in surfaces.items():
            for q, basis in _QUANTITIES:
                v = _quantity(surface, q, basis, x, year, w, terms)
                selected.append((year, x, q, basis, name, v))
    return ActuarialOutcome(summary, selected)
