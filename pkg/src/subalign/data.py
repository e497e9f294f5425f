"""Datasets, synthetic domain-shift benchmarks, splits, and metrics."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatchError, ParameterError
from .numerics import make_rng
from .validation import check_labels, check_matrix


@dataclass
class DomainDataset:
    """Feature rows from one domain, with optional labels.

    Features are float64 in memory (the feature-file format narrows to
    float32 on disk). ``row_tags`` records per-row provenance for merged
    pools and is `None` for ordinary single-domain data.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    domain_tag: str = ""
    class_count: int = 0
    row_tags: np.ndarray | None = None

    def __post_init__(self):
        self.features = check_matrix(self.features, "features")
        if self.labels is not None:
            self.labels = check_labels(
                self.labels,
                self.features.shape[0],
                "labels",
                n_classes=self.class_count if self.class_count else None,
            )
            if not self.class_count:
                self.class_count = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.row_tags is not None:
            self.row_tags = np.asarray(self.row_tags)
            if self.row_tags.shape[0] != self.features.shape[0]:
                raise DimensionMismatchError("row_tags length must match row count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "DomainDataset":
        """Row subset with the same tags and class count."""
        indices = np.asarray(indices, dtype=np.int64)
        return DomainDataset(
            features=self.features[indices],
            labels=None if self.labels is None else self.labels[indices],
            domain_tag=self.domain_tag,
            class_count=self.class_count,
            row_tags=None if self.row_tags is None else self.row_tags[indices],
        )


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a seeded multi-domain benchmark.

    Class means live in an ``intrinsic_dim``-dimensional subspace of the
    ambient space; every sample gets isotropic Gaussian noise of scale
    ``sigma``. Each target domain applies a rotation (degrees, rotating the
    intrinsic subspace toward its orthogonal complement), a translation of
    the given norm, and a scaling to the source generating distribution.
    """

    classes: int = 10
    ambient_dim: int = 50
    intrinsic_dim: int = 8
    per_class: int = 200
    thetas: tuple = (45.0, 60.0)
    translations: tuple = (10.0, 14.0)
    scalings: tuple = (1.0, 1.0)
    sigma: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ParameterError("need at least 2 classes")
        if self.intrinsic_dim > self.ambient_dim:
            raise ParameterError("intrinsic_dim cannot exceed ambient_dim")
        if 2 * self.intrinsic_dim > self.ambient_dim:
            raise ParameterError(
                "rotations need ambient_dim >= 2 * intrinsic_dim"
            )
        if self.per_class < 1:
            raise ParameterError("per_class must be positive")
        if self.sigma < 0:
            raise ParameterError("sigma must be non-negative")
        n_targets = len(self.thetas)
        if len(self.translations) != n_targets or len(self.scalings) != n_targets:
            raise ParameterError(
                "thetas, translations and scalings must have equal lengths"
            )
        for theta in self.thetas:
            if not 0.0 <= theta < 180.0:
                raise ParameterError("rotation angles must lie in [0, 180) degrees")

    @property
    def n_targets(self) -> int:
        return len(self.thetas)


def _center_spread_profile(k: int) -> np.ndarray:
    """Per-direction spread of the class means inside the intrinsic subspace.

    The leading half of the directions carries most of the class separation
    and the tail decays geometrically, giving the fitted subspaces a smoothly
    falling spectrum. Calibrated (together with the default shift and noise
    scales) so the ablation-mode ordering resolves at 5 seeds and accuracy
    stays stable across subspace dimensions.
    """
    lead = k // 2
    profile = np.empty(k)
    profile[:lead] = 2.0
    profile[lead:] = 0.8 * 0.75 ** np.arange(k - lead)
    return profile


def generate_synthetic(spec: SyntheticSpec):
    """Generate (source, [targets...]) datasets from a seeded spec.

    Pure function of the spec: the same spec yields bit-identical arrays.
    """
    rng = make_rng(spec.seed, 90)
    d, k = spec.ambient_dim, spec.intrinsic_dim

    # Orthonormal frame: first k columns span the mean subspace, the next k
    # give the rotation partners in its complement.
    gauss = rng.standard_normal((d, 2 * k))
    frame, _ = np.linalg.qr(gauss)
    basis, partner = frame[:, :k], frame[:, k : 2 * k]

    centers_low = rng.standard_normal((spec.classes, k)) * _center_spread_profile(k)
    centers = centers_low @ basis.T  # (K, D)

    def sample_domain(tag, transform=None, translation=None, scale=1.0):
        rows, labels = [], []
        for c in range(spec.classes):
            noise = rng.standard_normal((spec.per_class, d)) * spec.sigma
            block = centers[c] + noise
            if transform is not None:
                block = block @ transform.T
            block = block * scale
            if translation is not None:
                block = block + translation
            rows.append(block)
            labels.append(np.full(spec.per_class, c, dtype=np.int64))
        features = np.vstack(rows)
        labels = np.concatenate(labels)
        order = rng.permutation(features.shape[0])
        return DomainDataset(
            features=features[order],
            labels=labels[order],
            domain_tag=tag,
            class_count=spec.classes,
        )

    source = sample_domain("source")
    targets = []
    for idx in range(spec.n_targets):
        theta = np.deg2rad(spec.thetas[idx])
        rot = _plane_rotation(basis, partner, theta)
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        translation = direction * spec.translations[idx]
        tag = f"target_{chr(ord('a') + idx)}"
        targets.append(
            sample_domain(tag, transform=rot, translation=translation,
                          scale=spec.scalings[idx])
        )
    return source, targets


def _plane_rotation(basis, partner, theta):
    """Rotation by `theta` in each (basis_i, partner_i) coordinate plane."""
    d = basis.shape[0]
    c, s = np.cos(theta), np.sin(theta)
    rot = np.eye(d)
    for j in range(basis.shape[1]):
        b = basis[:, j : j + 1]
        p = partner[:, j : j + 1]
        rot += (c - 1.0) * (b @ b.T + p @ p.T) + s * (p @ b.T - b @ p.T)
    return rot


def split_indices(n: int, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive index split with round-half-up sizing toward part a."""
    if not 0.0 < fraction < 1.0:
        raise ParameterError("split fraction must lie strictly between 0 and 1")
    if n < 2:
        raise ParameterError("need at least 2 rows to split")
    n_a = int(np.floor(fraction * n + 0.5))
    n_a = min(max(n_a, 1), n - 1)
    perm = rng.permutation(n)
    return np.sort(perm[:n_a]), np.sort(perm[n_a:])


def split(dataset: DomainDataset, fraction: float, rng):
    """Seeded random split of a dataset into two disjoint, exhaustive parts."""
    idx_a, idx_b = split_indices(dataset.n, fraction, rng)
    return dataset.take(idx_a), dataset.take(idx_b)


def subsample(dataset: DomainDataset, fraction: float, rng) -> DomainDataset:
    """Keep a seeded random fraction of rows (at least one)."""
    if not 0.0 < fraction <= 1.0:
        raise ParameterError("subsample fraction must lie in (0, 1]")
    if fraction == 1.0:
        return dataset
    keep = max(1, int(np.floor(fraction * dataset.n + 0.5)))
    idx = np.sort(rng.permutation(dataset.n)[:keep])
    return dataset.take(idx)


def restrict_classes(dataset: DomainDataset, keep_classes) -> DomainDataset:
    """Rows whose label is in `keep_classes`; labels keep their original indices."""
    if dataset.labels is None:
        raise ParameterError("cannot restrict an unlabeled dataset by class")
    keep = np.asarray(sorted(set(int(c) for c in keep_classes)), dtype=np.int64)
    mask = np.isin(dataset.labels, keep)
    if not mask.any():
        raise ParameterError("class restriction removed every row")
    return replace(
        dataset,
        features=dataset.features[mask],
        labels=dataset.labels[mask],
        row_tags=None if dataset.row_tags is None else dataset.row_tags[mask],
    )


def accuracy(predicted, truth) -> float:
    """Fraction of matching entries."""
    p = np.asarray(predicted).ravel()
    t = np.asarray(truth).ravel()
    if p.shape[0] != t.shape[0]:
        raise DimensionMismatchError(
            f"prediction length {p.shape[0]} does not match truth length {t.shape[0]}"
        )
    if p.shape[0] == 0:
        raise ParameterError("cannot score empty predictions")
    return float(np.mean(p == t))


def per_class_accuracy(predicted, truth, n_classes: int) -> np.ndarray:
    """Accuracy within each true class; NaN for classes absent from `truth`."""
    p = np.asarray(predicted).ravel()
    t = np.asarray(truth).ravel()
    if p.shape[0] != t.shape[0]:
        raise DimensionMismatchError("prediction and truth lengths differ")
    out = np.full(int(n_classes), np.nan)
    for c in range(int(n_classes)):
        mask = t == c
        if mask.any():
            out[c] = float(np.mean(p[mask] == c))
    return out


def read_features_csv(path, domain_tag: str | None = None) -> DomainDataset:
    """Read a small hand-written CSV: header row, optional `label` column."""
    path = os.fspath(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ParameterError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    label_col = header.index("label") if "label" in header else None
    feats, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            values = [float(v) for i, v in enumerate(row) if i != label_col]
        except ValueError as exc:
            raise ParameterError(f"{path}:{lineno}: non-numeric feature value") from exc
        feats.append(values)
        if label_col is not None:
            labels.append(int(float(row[label_col])))
    if domain_tag is None:
        domain_tag = os.path.splitext(os.path.basename(path))[0]
    return DomainDataset(
        features=np.asarray(feats, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64) if label_col is not None else None,
        domain_tag=domain_tag,
    )
