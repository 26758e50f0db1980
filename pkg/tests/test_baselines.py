import json

import numpy as np
import pytest

from fhfm.baselines import (
    LeeCarterFit,
    OneStagePcaFit,
    fit_cpca,
    fit_dpca,
    fit_forecast_individual,
    fit_lee_carter,
    forecast_baseline,
)
from fhfm.errors import DegenerateSpectrumError, InsufficientLengthError, InvalidLagError
from fhfm.hierarchical import fit_step1
from fhfm.panel import Panel
from fhfm.simgen import DgpSpec, generate
from oracles import loop_autocov, loop_product, power_iteration_eigs, same_up_to_sign


def test_dpca_lag0_only_is_cpca():
    y = generate(DgpSpec(1, 20, 40, seed=1)).panel
    c, d = fit_cpca(y, r=3), fit_dpca(y, r=3, ell0=0, include_lag0=True)
    assert np.abs(c.loadings - d.loadings).max() <= 1e-10


def test_dpca_lag1_without_lag0_is_step1():
    y = generate(DgpSpec(1, 20, 40, seed=2)).panel
    d = fit_dpca(y, r=2, ell0=1, include_lag0=False)
    s = fit_step1(y, r1=2)
    assert np.abs(d.loadings - s.loadings).max() <= 1e-10


def test_dpca_aggregate_matches_loop_oracle():
    y = np.random.default_rng(3).standard_normal((5, 9))
    agg = np.zeros((5, 5))
    for lag in (0, 1, 2):
        agg += np.array(loop_product(loop_autocov(y.tolist(), lag)))
    vals, vecs = power_iteration_eigs(agg)
    fit = fit_dpca(Panel(y), r=2, ell0=2)
    assert np.allclose(fit.eigenvalues, vals, rtol=1e-8, atol=1e-12)
    for i in range(2):
        assert same_up_to_sign(fit.loadings[:, i], vecs[:, i], 1e-6)


def test_cpca_matches_covariance_oracle_5x7():
    y = np.random.default_rng(4).standard_normal((5, 7))
    cov = np.array(loop_autocov(y.tolist(), 0))
    _, vecs = power_iteration_eigs(cov)
    fit = fit_cpca(Panel(y), r=2)
    for i in range(2):
        assert same_up_to_sign(fit.loadings[:, i], vecs[:, i], 1e-6)


def test_cpca_exact_rank_one():
    b = np.array([0.2, 0.4, 0.4, 0.8])
    k = np.sin(np.arange(25.0))
    y = 1.0 + np.outer(b, k)
    fit = fit_cpca(Panel(y), r=1)
    assert same_up_to_sign(fit.loadings[:, 0], b / np.linalg.norm(b), 1e-10)
    assert np.abs(fit.residual).max() < 1e-10


def test_one_stage_invariants_and_levels():
    y = generate(DgpSpec(2, 15, 30, seed=5)).panel
    for fit in (fit_cpca(y, r=2, difference=True), fit_dpca(y, r=2, ell0=3)):
        assert np.allclose(fit.loadings.T @ fit.loadings, np.eye(2), atol=1e-10)
        c = y.values - fit.mean[:, None]
        assert np.allclose(fit.factors, fit.loadings.T @ c, atol=1e-12)
        assert np.allclose(c - fit.loadings @ fit.factors, fit.residual, atol=1e-12)


def test_invalid_lag_sets():
    y = Panel(np.random.default_rng(0).standard_normal((3, 8)))
    with pytest.raises(InvalidLagError):
        fit_dpca(y, r=1, ell0=0, include_lag0=False)
    with pytest.raises(InvalidLagError):
        fit_dpca(y, r=1, ell0=8)


def test_full_rank_cpca_reconstructs_exactly():
    y = Panel(np.random.default_rng(6).standard_normal((4, 12)))
    fit = fit_cpca(y, r=3)
    # centred data of 4 series has rank <= 4 and here rank 4; r = P - 1 leaves one direction
    assert fit.residual.shape == (4, 12)


def test_lee_carter_construct_then_recover():
    ages = np.arange(6)
    a = -6 + 0.5 * ages
    b = np.array([0.1, 0.15, 0.2, 0.25, 0.2, 0.1])
    k = np.linspace(10, -10, 30) + np.sin(np.arange(30))
    k -= k.mean()
    y = a[:, None] + np.outer(b, k)
    fit = fit_lee_carter(Panel(y))
    assert abs(fit.b.sum() - 1) < 1e-10
    assert abs(fit.k.sum()) < 1e-10
    assert np.allclose(fit.b, b, atol=1e-8)
    assert np.allclose(fit.k, k, atol=1e-8)
    assert np.allclose(fit.a, a, atol=1e-12)
    assert np.allclose(y, fit.fitted_values() + fit.residual, atol=1e-12)


def test_lee_carter_static_panel_is_degenerate():
    with pytest.raises(DegenerateSpectrumError):
        fit_lee_carter(Panel(np.tile([[-3.0], [-2.0], [-1.0]], (1, 10))))


def test_lee_carter_with_linear_index_and_rw_drift():
    a = np.array([-5.0, -4.0, -3.0])
    b = np.array([0.5, 0.3, 0.2])
    k = 3.0 - 0.5 * np.arange(13.0)
    k -= k.mean()
    fit = fit_lee_carter(Panel(a[:, None] + np.outer(b, k)))
    res = forecast_baseline(fit, 4, factor_model="rw_drift")
    future_k = k[-1] - 0.5 * np.arange(1, 5)
    assert np.allclose(res.forecasts, a[:, None] + np.outer(b, future_k), atol=1e-8)


def test_constant_factor_flat_baseline_forecast():
    fit = OneStagePcaFit(
        mean=np.array([1.0, -1.0]), loadings=np.array([[1.0], [0.0]]),
        factors=np.full((1, 12), 2.0), residual=np.zeros((2, 12)), method="CPCA",
        eigenvalues=np.ones(2),
    )
    res = forecast_baseline(fit, 3)
    assert np.allclose(res.forecasts, [[3.0] * 3, [-1.0] * 3], atol=1e-9)


def test_individual_ar1_rows():
    rng = np.random.default_rng(8)
    rows = []
    for phi in (0.3, 0.7):
        x = np.empty(400)
        x[0] = 0
        for t in range(1, 400):
            x[t] = phi * x[t - 1] + rng.standard_normal()
        rows.append(x)
    res = fit_forecast_individual(Panel(np.array(rows)), 2)
    for model, phi in zip(res.models, (0.3, 0.7)):
        assert model.order[0] >= 1 and abs(model.ar_coeffs[0] - phi) < 0.1
    assert res.fallback_rows == ()


def test_individual_constant_rows_flat():
    res = fit_forecast_individual(Panel(np.tile([[1.0], [2.0]], (1, 15))), 3)
    assert np.allclose(res.forecasts, [[1.0] * 3, [2.0] * 3], atol=1e-9)


def test_individual_needs_ten_points():
    with pytest.raises(InsufficientLengthError):
        fit_forecast_individual(Panel(np.ones((2, 9))), 1)


def test_individual_fallback_flags_row(monkeypatch):
    from fhfm import baselines
    from fhfm.errors import SelectionError

    real = baselines.forecast_series

    def flaky(series, h, grid=None, factor_model="auto_arima"):
        if series[0] == 100.0:
            raise SelectionError("no cell")
        return real(series, h, grid, factor_model)

    monkeypatch.setattr(baselines, "forecast_series", flaky)
    y = np.vstack([np.arange(12.0), 100.0 + np.arange(12.0) % 3])
    res = fit_forecast_individual(Panel(y, row_labels=("a", "b")), 2)
    assert res.fallback_rows == ("b",)
    assert np.allclose(res.forecasts[1], y[1, -1])


def test_json_round_trips():
    y = generate(DgpSpec(1, 8, 20, seed=1)).panel
    c = fit_dpca(y, r=1, ell0=2, include_lag0=False)
    back = OneStagePcaFit.from_dict(json.loads(json.dumps(c.to_dict())))
    assert np.array_equal(back.loadings, c.loadings) and back.method == c.method
    lc = fit_lee_carter(y)
    back = LeeCarterFit.from_dict(json.loads(json.dumps(lc.to_dict())))
    assert np.array_equal(back.b, lc.b) and np.array_equal(back.k, lc.k)
