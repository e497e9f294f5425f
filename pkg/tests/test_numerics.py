import numpy as np
import pytest

from subalign.errors import ParameterError
from subalign.numerics import frobenius_norm, make_rng, softmax_rows, thin_svd


def test_thin_svd_identity():
    u, s, v = thin_svd(np.eye(3))
    np.testing.assert_allclose(s, [1.0, 1.0, 1.0])


def test_thin_svd_diagonal_exact_sign_convention():
    u, s, v = thin_svd(np.diag([3.0, 2.0, 1.0]))
    np.testing.assert_allclose(s, [3.0, 2.0, 1.0])
    # sign fixing pins the otherwise arbitrary +-1 factors
    np.testing.assert_allclose(u, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(v, np.eye(3), atol=1e-12)


def test_thin_svd_reconstructs_random_8x5():
    rng = make_rng(11)
    m = rng.standard_normal((8, 5))
    u, s, v = thin_svd(m)
    err = frobenius_norm(u @ np.diag(s) @ v.T - m)
    assert err <= 1e-8 * frobenius_norm(m)


@pytest.mark.parametrize("rows,cols", [(3, 3), (17, 5), (5, 17), (64, 64), (1, 4)])
def test_thin_svd_roundtrip_and_orthonormality(rows, cols):
    rng = make_rng(7, rows, cols)
    m = rng.standard_normal((rows, cols)) * rng.uniform(0.1, 10)
    u, s, v = thin_svd(m)
    rel = frobenius_norm(u @ np.diag(s) @ v.T - m) / max(1.0, frobenius_norm(m))
    assert rel <= 1e-8
    k = min(rows, cols)
    assert frobenius_norm(u.T @ u - np.eye(k)) <= 1e-10
    assert frobenius_norm(v.T @ v - np.eye(k)) <= 1e-10
    assert np.all(s >= 0)
    assert np.all(np.diff(s) <= 1e-12)


def test_thin_svd_rejects_nan():
    with pytest.raises(ParameterError):
        thin_svd(np.array([[1.0, np.nan]]))


def test_softmax_symmetry():
    np.testing.assert_allclose(softmax_rows([[0.0, 0.0]]), [[0.5, 0.5]])


def test_softmax_analytic():
    np.testing.assert_allclose(
        softmax_rows([[np.log(2.0), 0.0]]), [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15
    )


def test_softmax_extreme_logits_no_overflow():
    out = softmax_rows([[1000.0, 0.0]])
    # exp(-1000) underflows below the smallest subnormal, so this is exact
    np.testing.assert_allclose(out, [[1.0, 0.0]])
    assert np.isfinite(out).all()


def test_softmax_rows_sum_to_one_and_shift_invariant():
    rng = make_rng(21)
    logits = rng.standard_normal((40, 7)) * 10
    p = softmax_rows(logits)
    assert np.abs(p.sum(axis=1) - 1.0).max() <= 1e-12
    shifted = softmax_rows(logits + rng.standard_normal((40, 1)) * 5)
    assert np.abs(p - shifted).max() <= 1e-12


def test_frobenius_norm_values():
    assert frobenius_norm(np.zeros((4, 6))) == 0.0
    assert frobenius_norm(np.eye(9)) == pytest.approx(3.0)
    assert frobenius_norm([[1.0, 2.0], [3.0, 4.0]]) == pytest.approx(
        5.477225575051661
    )


def test_rng_reproducible_streams():
    a = make_rng(42).standard_normal(10_000)
    b = make_rng(42).standard_normal(10_000)
    assert np.array_equal(a, b)
    c = make_rng(43).standard_normal(10_000)
    assert not np.array_equal(a, c)


def test_rng_substreams_are_independent():
    a = make_rng(5, 1).standard_normal(100)
    b = make_rng(5, 2).standard_normal(100)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, make_rng(5, 1).standard_normal(100))
