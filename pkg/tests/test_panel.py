import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fhfm.errors import (
    InsufficientLengthError,
    InvalidLagError,
    NumericError,
    ParseError,
    ValidationError,
)
from fhfm.panel import (
    Panel,
    autocov_product,
    difference_panel,
    sample_autocov,
    sample_mean,
    sym_eigen_desc,
)
from oracles import loop_autocov, loop_mean, loop_product, power_iteration_eigs, same_up_to_sign


def test_default_labels_and_shape():
    p = Panel(np.arange(6.0).reshape(2, 3))
    assert p.shape == (2, 3)
    assert p.row_labels == (0, 1)
    assert p.col_labels == (1, 2, 3)


def test_values_are_read_only_copy():
    a = np.ones((2, 3))
    p = Panel(a)
    a[0, 0] = 5
    assert p.values[0, 0] == 1
    with pytest.raises(ValueError):
        p.values[0, 0] = 2


@pytest.mark.parametrize(
    "values, kw",
    [
        (np.ones((2, 1)), {}),
        (np.array([[1.0, np.nan]]), {}),
        (np.array([[1.0, np.inf]]), {}),
        (np.ones((2, 3)), {"row_labels": ("a",)}),
        (np.ones((1, 3)), {"col_labels": (1, 1, 2)}),
        (np.ones((1, 3)), {"col_labels": (3, 2, 1)}),
    ],
)
def test_invalid_panels(values, kw):
    with pytest.raises(ValidationError):
        Panel(values, **kw)


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    p = Panel(rng.standard_normal((4, 5)), ("a", "b", "c", "90+"), (2001, 2002, 2003, 2004, 2005))
    path = tmp_path / "p.csv"
    p.to_csv(path)
    q = Panel.from_csv(path)
    assert np.array_equal(p.values, q.values)
    assert q.row_labels == p.row_labels and q.col_labels == p.col_labels


def test_csv_rejects_missing_cell_with_line_number():
    text = "series,1,2\n0,1.0,2.0\n1,.,3.0\n"
    with pytest.raises(ParseError, match="line 3"):
        Panel.from_csv(text)


def test_sample_mean():
    p = Panel([[1.0, 2.0, 3.0], [4.0, 4.0, 7.0]])
    assert np.allclose(sample_mean(p), [2.0, 5.0])


def test_autocov_small_hand_cases():
    assert np.allclose(sample_autocov(Panel([[1.0, 2.0, 3.0]]), 1).matrix, [[0.0]])
    # centred [-.5,.5,-.5,.5]; lag-1 products sum to -0.75 over 3 terms
    assert np.allclose(sample_autocov(Panel([[1.0, 2.0, 1.0, 2.0]]), 1).matrix, [[-0.25]])
    assert np.allclose(sample_autocov(Panel([[1.0, 2.0, 1.0, 2.0]]), 0).matrix, [[0.25]])


def test_autocov_matches_loop_oracle():
    rng = np.random.default_rng(11)
    y = rng.standard_normal((5, 9))
    for lag in range(0, 4):
        got = sample_autocov(Panel(y), lag).matrix
        assert np.allclose(got, loop_autocov(y.tolist(), lag), atol=1e-13)
        prod = autocov_product(Panel(y), lag).matrix
        assert np.allclose(prod, loop_product(loop_autocov(y.tolist(), lag)), atol=1e-13)


def test_loop_mean_oracle_agrees():
    y = np.random.default_rng(2).standard_normal((3, 7))
    assert np.allclose(sample_mean(Panel(y)), loop_mean(y.tolist()))


@pytest.mark.parametrize("lag", [-1, 4, 10])
def test_invalid_lag(lag):
    with pytest.raises(InvalidLagError):
        sample_autocov(Panel(np.ones((2, 4))), lag)


def test_lag0_is_symmetric_and_psd():
    y = np.random.default_rng(5).standard_normal((6, 20))
    s = sample_autocov(Panel(y), 0).matrix
    assert np.array_equal(s, s.T)
    assert np.linalg.eigvalsh(s).min() > -1e-12


def test_eigen_trivial_cases():
    e = sym_eigen_desc(np.diag([1.0, 3.0, 2.0]))
    assert np.allclose(e.eigenvalues, [3, 2, 1])
    assert np.allclose(np.abs(e.eigenvectors), np.eye(3)[:, [1, 2, 0]])
    e = sym_eigen_desc(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(e.eigenvalues, [3, 1])
    assert same_up_to_sign(e.eigenvectors[:, 0], np.array([1, 1]) / np.sqrt(2), 1e-12)


def test_eigen_sign_convention():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((6, 6))
    e = sym_eigen_desc(a + a.T)
    v = e.eigenvectors
    idx = np.argmax(np.abs(v), axis=0)
    assert np.all(v[idx, np.arange(6)] >= 0)


def test_eigen_errors():
    with pytest.raises(NumericError):
        sym_eigen_desc(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    with pytest.raises(ValidationError):
        sym_eigen_desc(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        sym_eigen_desc(np.ones((2, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_jacobi_matches_lapack_and_power_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 3 + seed
    a = rng.standard_normal((n, n))
    a = a + a.T
    lap = sym_eigen_desc(a)
    jac = sym_eigen_desc(a, method="jacobi")
    vals, vecs = power_iteration_eigs(a)
    assert np.allclose(lap.eigenvalues, vals, rtol=1e-8, atol=1e-10)
    assert np.allclose(jac.eigenvalues, vals, rtol=1e-8, atol=1e-10)
    for k in range(n):
        assert same_up_to_sign(lap.eigenvectors[:, k], vecs[:, k], 1e-6)
        assert same_up_to_sign(jac.eigenvectors[:, k], lap.eigenvectors[:, k], 1e-8)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)))
def test_eigen_reconstructs_matrix(a):
    s = a + a.T
    e = sym_eigen_desc(s)
    v, w = e.eigenvectors, e.eigenvalues
    assert np.all(np.diff(w) <= 1e-12)
    assert np.allclose(v.T @ v, np.eye(5), atol=1e-10)
    assert np.allclose(v @ np.diag(w) @ v.T, s, atol=1e-9 * max(1.0, np.abs(s).max()))


def test_difference_panel():
    p = Panel([[1.0, 3.0, 6.0]], col_labels=(2000, 2001, 2002))
    d = difference_panel(p)
    assert np.array_equal(d.values, [[2.0, 3.0]])
    assert d.col_labels == (2001, 2002)
    with pytest.raises(InsufficientLengthError):
        difference_panel(Panel([[1.0, 2.0]]))


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (3, 8), elements=st.floats(-100, 100)),
    st.floats(0.1, 10.0),
    st.floats(-50, 50),
)
def test_autocov_shift_invariant_and_scale_quadratic(y, c, shift):
    base = sample_autocov(Panel(y), 1).matrix
    scaled = sample_autocov(Panel(c * y + shift), 1).matrix
    assert np.allclose(scaled, c * c * base, atol=1e-7 * (1 + np.abs(c * c * base).max()))
