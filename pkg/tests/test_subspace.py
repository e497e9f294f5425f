import numpy as np
import pytest
import scipy.linalg

from oracles import quadratic_alignment_descent, random_orthonormal
from subalign.errors import DimensionMismatchError, ParameterError
from subalign.numerics import frobenius_norm, make_rng
from subalign.subspace import (
    AlignmentMatrix,
    SubspaceBasis,
    aligned_target_basis,
    alignment_cost,
    closed_form_alignment,
    default_subspace_dim,
    fit_subspace,
    reproject,
)


def _basis(cols):
    cols = np.asarray(cols, dtype=np.float64)
    return SubspaceBasis(basis=cols, mean=np.zeros(cols.shape[0]))


def _rotated_pair():
    # D=2, d=1: source along e1, target rotated by 60 degrees
    ws = _basis([[1.0], [0.0]])
    wt = _basis([[0.5], [np.sqrt(3.0) / 2.0]])
    return ws, wt


def test_fit_subspace_axis_aligned_sign_fixed():
    z = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [-3.0, 0.0, 0.0], [4.0, 0.0, 0.0]])
    fitted = fit_subspace(z, 1)
    np.testing.assert_allclose(fitted.basis, [[1.0], [0.0], [0.0]], atol=1e-12)


def test_fit_subspace_identity_rows_uncentered_spans_everything():
    fitted = fit_subspace(np.eye(3), 3, center=False)
    projector = fitted.basis @ fitted.basis.T
    np.testing.assert_allclose(projector, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(fitted.mean, np.zeros(3))


def test_fit_subspace_recovers_planted_subspace():
    rng = make_rng(99)
    planted = random_orthonormal(rng, 20, 5)
    coords = rng.standard_normal((200, 5))
    z = coords @ planted.T + 1e-6 * rng.standard_normal((200, 20))
    fitted = fit_subspace(z, 5, center=False)
    angles = scipy.linalg.subspace_angles(fitted.basis, planted)
    assert np.max(angles) <= 1e-4


def test_fit_subspace_orthonormal_bases():
    rng = make_rng(3)
    for trial in range(5):
        z = rng.standard_normal((30, 12)) * rng.uniform(0.5, 5)
        fitted = fit_subspace(z, 6)
        gram = fitted.basis.T @ fitted.basis
        assert frobenius_norm(gram - np.eye(6)) <= 1e-10


def test_fit_subspace_dim_validation():
    rng = make_rng(4)
    z = rng.standard_normal((10, 6))
    with pytest.raises(ParameterError):
        fit_subspace(z, 0)
    with pytest.raises(ParameterError):
        fit_subspace(z, 7)
    # centering consumes a rank: 10 rows allow at most d=9
    with pytest.raises(ParameterError):
        fit_subspace(rng.standard_normal((5, 20)), 5, center=True)


def test_fit_subspace_rejects_rank_deficient_request():
    z = np.zeros((10, 4))
    z[:, 0] = np.arange(10)
    with pytest.raises(ParameterError):
        fit_subspace(z, 3)


def test_closed_form_identical_subspaces_is_identity():
    rng = make_rng(5)
    w = _basis(random_orthonormal(rng, 8, 3))
    align = closed_form_alignment(w, w)
    np.testing.assert_allclose(align.matrix, np.eye(3), atol=1e-12)


def test_closed_form_orthogonal_subspaces_is_zero():
    ws = _basis([[1.0], [0.0]])
    wt = _basis([[0.0], [1.0]])
    align = closed_form_alignment(ws, wt)
    np.testing.assert_allclose(align.matrix, [[0.0]], atol=1e-15)


def test_closed_form_rotated_pair_matches_grid_search():
    ws, wt = _rotated_pair()
    align = closed_form_alignment(ws, wt)
    assert align.matrix[0, 0] == pytest.approx(0.5, abs=1e-12)
    cost = alignment_cost(ws, wt, align)
    assert cost == pytest.approx(0.75, abs=1e-12)
    # brute-force oracle over the 1-d transform value
    grid = np.linspace(-2.0, 2.0, 40_001)
    costs = [float(np.sum((wt.basis * g - ws.basis) ** 2)) for g in grid]
    best = int(np.argmin(costs))
    assert grid[best] == pytest.approx(0.5, abs=1e-4)
    assert costs[best] >= cost - 1e-12


def test_alignment_cost_examples():
    rng = make_rng(6)
    w = _basis(random_orthonormal(rng, 6, 2))
    assert alignment_cost(w, w, AlignmentMatrix.identity(2)) == pytest.approx(0.0, abs=1e-20)
    ws = _basis([[1.0], [0.0]])
    wt = _basis([[0.0], [1.0]])
    assert alignment_cost(ws, wt, AlignmentMatrix(np.zeros((1, 1)))) == pytest.approx(1.0)


def test_alignment_cost_residual_identity_over_random_pairs():
    rng = make_rng(7)
    for trial in range(100):
        ws = _basis(random_orthonormal(rng, 20, 5))
        wt = _basis(random_orthonormal(rng, 20, 5))
        align = closed_form_alignment(ws, wt)
        cost = alignment_cost(ws, wt, align)
        overlap = wt.basis.T @ ws.basis
        expected = 5.0 - float(np.sum(overlap * overlap))
        assert cost == pytest.approx(expected, abs=1e-8)


def test_closed_form_is_global_minimum_under_perturbations():
    rng = make_rng(8)
    for trial in range(100):
        ws = _basis(random_orthonormal(rng, 20, 5))
        wt = _basis(random_orthonormal(rng, 20, 5))
        align = closed_form_alignment(ws, wt)
        base = alignment_cost(ws, wt, align)
        for _ in range(50):
            bump = AlignmentMatrix(
                align.matrix + 1e-3 * rng.standard_normal((5, 5))
            )
            assert alignment_cost(ws, wt, bump) >= base - 1e-12


def test_gradient_descent_reaches_closed_form_cost():
    rng = make_rng(9)
    for trial in range(10):
        ws = random_orthonormal(rng, 20, 5)
        wt = random_orthonormal(rng, 20, 5)
        closed = wt.T @ ws
        closed_cost = float(np.sum((wt @ closed - ws) ** 2))
        start = rng.standard_normal((5, 5))
        _, descended = quadratic_alignment_descent(ws, wt, start)
        assert abs(descended - closed_cost) <= 1e-6


def test_aligned_target_basis_cases():
    rng = make_rng(10)
    ws = _basis(random_orthonormal(rng, 9, 4))
    wt = _basis(random_orthonormal(rng, 9, 4))
    np.testing.assert_allclose(
        aligned_target_basis(wt, AlignmentMatrix.identity(4)), wt.basis
    )
    np.testing.assert_allclose(
        aligned_target_basis(wt, AlignmentMatrix(np.zeros((4, 4)))), np.zeros((9, 4))
    )
    closed = closed_form_alignment(ws, wt)
    np.testing.assert_allclose(
        aligned_target_basis(wt, closed),
        wt.basis @ wt.basis.T @ ws.basis,
        atol=1e-12,
    )


def test_reproject_projection_case():
    basis = _basis([[1.0], [0.0]])
    out = reproject([[3.0, 4.0]], basis, AlignmentMatrix.identity(1), basis)
    np.testing.assert_allclose(out, [[3.0, 0.0]])


def test_reproject_zero_alignment_maps_to_source_mean():
    rng = make_rng(11)
    ws = SubspaceBasis(random_orthonormal(rng, 5, 2), rng.standard_normal(5))
    wt = SubspaceBasis(random_orthonormal(rng, 5, 2), rng.standard_normal(5))
    z = rng.standard_normal((7, 5))
    out = reproject(z, wt, AlignmentMatrix(np.zeros((2, 2))), ws)
    np.testing.assert_allclose(out, np.tile(ws.mean, (7, 1)), atol=1e-12)


def test_reproject_rotated_hand_chain():
    ws, wt = _rotated_pair()
    align = closed_form_alignment(ws, wt)
    out = reproject([[3.0, 4.0]], wt, align, ws)
    # (z . wt) * 0.5 expanded along e1
    expected = (3.0 * 0.5 + 4.0 * np.sqrt(3.0) / 2.0) * 0.5
    np.testing.assert_allclose(out, [[expected, 0.0]], atol=1e-12)
    assert out[0, 0] == pytest.approx(2.482050807568877, abs=1e-12)


def test_identity_fixpoint_reproject_is_orthogonal_projection():
    rng = make_rng(12)
    w = _basis(random_orthonormal(rng, 10, 3))
    align = closed_form_alignment(w, w)
    z = rng.standard_normal((6, 10))
    np.testing.assert_allclose(
        reproject(z, w, align, w), z @ w.basis @ w.basis.T, atol=1e-12
    )


def test_dimension_mismatch_errors():
    rng = make_rng(13)
    ws = _basis(random_orthonormal(rng, 8, 3))
    wt = _basis(random_orthonormal(rng, 8, 2))
    with pytest.raises(DimensionMismatchError):
        closed_form_alignment(ws, wt)
    other = _basis(random_orthonormal(rng, 6, 3))
    with pytest.raises(DimensionMismatchError):
        closed_form_alignment(ws, other)
    with pytest.raises(DimensionMismatchError):
        reproject(rng.standard_normal((4, 5)), ws, AlignmentMatrix.identity(3), ws)


def test_default_subspace_dim_rules():
    assert default_subspace_dim(10_000, 2048) == 800
    assert default_subspace_dim(2000, 50) == 20
    assert default_subspace_dim(11, 50) == 10
    assert default_subspace_dim(2, 3) == 1
