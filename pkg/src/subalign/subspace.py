"""Per-domain linear subspaces, closed-form alignment, and re-projection.

A domain is summarised by an orthonormal basis of its top principal
directions. The alignment between two such bases is a small square matrix
that maps target-subspace coordinates onto the source basis; its quadratic
cost has a closed-form global minimiser, and target features are carried
into the source frame by projecting onto the target basis, applying the
alignment, and expanding along the source basis.

The direction is fixed: the target is aligned onto the source. The same
machinery with the roles swapped would align source onto target; that
symmetry is intentional and not exposed as a separate mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ParameterError
from .numerics import thin_svd
from .validation import check_matrix


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of a fitted subspace plus the centering mean.

    ``basis`` is ambient_dim x subspace_dim with orthonormal columns;
    ``mean`` is the row mean subtracted before fitting (all zeros when
    centering was disabled, which keeps re-projection purely linear).
    """

    basis: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        basis = np.ascontiguousarray(np.asarray(self.basis, dtype=np.float64))
        mean = np.ascontiguousarray(np.asarray(self.mean, dtype=np.float64).ravel())
        if basis.ndim != 2:
            raise ParameterError("basis must be 2-dimensional")
        if mean.shape[0] != basis.shape[0]:
            raise DimensionMismatchError(
                f"mean length {mean.shape[0]} does not match ambient dim {basis.shape[0]}"
            )
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "mean", mean)

    @property
    def dim_ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim_subspace(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class AlignmentMatrix:
    """Learnable square transform between two equal-dimension subspaces."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.float64))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError("alignment matrix must be square")
        if m.size and not np.isfinite(m).all():
            raise ParameterError("alignment matrix contains non-finite entries")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "AlignmentMatrix":
        return cls(np.eye(int(dim)))


def default_subspace_dim(n_rows: int, ambient_dim: int) -> int:
    """Default subspace dimension: 800 for 2048-wide features, else a 0.4 ratio."""
    if ambient_dim == 2048:
        return 800
    return max(1, min(int(0.4 * ambient_dim), n_rows - 1))


def fit_subspace(features, dim: int, center: bool = True) -> SubspaceBasis:
    """Fit an orthonormal basis to the top-`dim` principal directions.

    With ``center`` the row mean is removed first and stored on the result;
    otherwise the raw features are decomposed and a zero mean is stored.
    Requesting more directions than the numerical rank of the (centered)
    features is an error rather than silent padding.
    """
    z = check_matrix(features, "features")
    n, d_ambient = z.shape
    if n < 2:
        raise ParameterError(f"need at least 2 rows to fit a subspace, got {n}")
    dim = int(dim)
    # centering consumes one degree of freedom, so the rank cap drops to n-1
    cap = min(n - 1, d_ambient) if center else min(n, d_ambient)
    if dim < 1 or dim > cap:
        raise ParameterError(
            f"subspace dim {dim} outside [1, {cap}] for {n} rows x {d_ambient} cols"
        )
    if center:
        mean = z.mean(axis=0)
        z = z - mean
    else:
        mean = np.zeros(d_ambient)
    _, s, v = thin_svd(z)
    tol = s[0] * max(n, d_ambient) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    if dim > rank:
        raise ParameterError(
            f"requested subspace dim {dim} exceeds numerical rank {rank}"
        )
    return SubspaceBasis(basis=v[:, :dim], mean=mean)


def _check_pair(source: SubspaceBasis, target: SubspaceBasis):
    if source.dim_ambient != target.dim_ambient:
        raise DimensionMismatchError(
            f"ambient dims differ: {source.dim_ambient} vs {target.dim_ambient}"
        )
    if source.dim_subspace != target.dim_subspace:
        raise DimensionMismatchError(
            f"subspace dims differ: {source.dim_subspace} vs {target.dim_subspace}"
        )


def closed_form_alignment(
    source: SubspaceBasis, target: SubspaceBasis
) -> AlignmentMatrix:
    """Global minimiser of the quadratic alignment cost: target_basisᵀ @ source_basis."""
    _check_pair(source, target)
    return AlignmentMatrix(target.basis.T @ source.basis)


def alignment_cost(
    source: SubspaceBasis, target: SubspaceBasis, align: AlignmentMatrix
) -> float:
    """Squared Frobenius distance between the mapped target basis and the source basis."""
    _check_pair(source, target)
    if align.dim != source.dim_subspace:
        raise DimensionMismatchError(
            f"alignment dim {align.dim} does not match subspace dim {source.dim_subspace}"
        )
    r = target.basis @ align.matrix - source.basis
    return float(np.sum(r * r))


def aligned_target_basis(target: SubspaceBasis, align: AlignmentMatrix) -> np.ndarray:
    """Target basis carried through the alignment transform."""
    if align.dim != target.dim_subspace:
        raise DimensionMismatchError(
            f"alignment dim {align.dim} does not match subspace dim {target.dim_subspace}"
        )
    return target.basis @ align.matrix


def reproject(
    features,
    target: SubspaceBasis,
    align: AlignmentMatrix,
    source: SubspaceBasis,
) -> np.ndarray:
    """Carry target-domain rows into the source coordinate frame.

    Each row is centered by the target mean, projected onto the target
    basis, mapped by the alignment matrix, expanded along the source basis,
    and shifted by the source mean. When both bases were fitted without
    centering the means are zero and this is the plain linear chain.
    """
    z = check_matrix(features, "features")
    _check_pair(source, target)
    if z.shape[1] != target.dim_ambient:
        raise DimensionMismatchError(
            f"features have {z.shape[1]} columns, bases expect {target.dim_ambient}"
        )
    if align.dim != target.dim_subspace:
        raise DimensionMismatchError(
            f"alignment dim {align.dim} does not match subspace dim {target.dim_subspace}"
        )
    carried = (z - target.mean) @ target.basis @ align.matrix @ source.basis.T
    return carried + source.mean
