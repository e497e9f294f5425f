"""Test-time adaptation to a further target domain.

A deployed adaptation run (source -> domain A) is extended to a new domain B
without touching the feature extractor: domain A's features are carried into
the source frame with the deployed alignment, pseudo-labeled by the deployed
head, merged with the labeled source pool, and a fresh adaptation run maps
the pool onto domain B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DomainDataset
from .engine import AdaptConfig, AdaptResult, adapt, predict_target
from .errors import ParameterError
from .models import ClassifierParams, classifier_forward
from .subspace import AlignmentMatrix, SubspaceBasis, reproject
from .validation import check_matrix


@dataclass
class DeployedModel:
    """Everything a shipped adaptation run needs at test time.

    ``extractor_digest`` is the hash of the frozen extractor (or `None` when
    the run consumed externally supplied features); progressive adaptation
    never changes it.
    """

    classifier: ClassifierParams
    alignment: AlignmentMatrix
    source_basis: SubspaceBasis
    target_basis: SubspaceBasis
    class_count: int
    seed: int
    config_digest: str
    extractor_digest: str | None = None

    @classmethod
    def from_adapt_result(cls, result: AdaptResult,
                          extractor_digest: str | None = None) -> "DeployedModel":
        if result.alignment is None:
            raise ParameterError(
                "progressive adaptation needs a run with a learned alignment "
                f"(mode was {result.mode!r})"
            )
        return cls(
            classifier=result.classifier.copy(),
            alignment=result.alignment,
            source_basis=result.source_basis,
            target_basis=result.target_basis,
            class_count=result.class_count,
            seed=result.config.seed,
            config_digest=result.config.digest(),
            extractor_digest=extractor_digest,
        )


def pseudo_label(probs) -> np.ndarray:
    """Row-wise argmax with ties broken toward the lowest class index."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2:
        raise ParameterError("probabilities must be 2-dimensional")
    return np.argmax(p, axis=1)


def progressive_adapt(
    model: DeployedModel,
    features_a,
    features_b,
    source: DomainDataset,
    cfg: AdaptConfig,
):
    """Adapt a deployed model to a new domain B.

    Returns ``(result, pool)`` where `result` is the fresh adaptation from
    the merged pool onto B (new alignment + refined head) and `pool` is the
    merged labeled dataset with per-row provenance tags. The source rows are
    passed explicitly because the deployed checkpoint stores only parameters.
    """
    za = check_matrix(features_a, "features_a")
    zb = check_matrix(features_b, "features_b")
    if zb.shape[0] == 0:
        raise ParameterError("domain B is empty")
    if source.labels is None:
        raise ParameterError("source dataset must be labeled")
    dim = model.source_basis.dim_ambient
    for name, z in (("features_a", za), ("features_b", zb), ("source", source.features)):
        if z.shape[1] != dim:
            raise ParameterError(
                f"{name} has {z.shape[1]} columns, deployed bases expect {dim}"
            )

    carried_a = reproject(za, model.target_basis, model.alignment, model.source_basis)
    probs_a = classifier_forward(model.classifier, carried_a)
    labels_a = pseudo_label(probs_a)
    if cfg.min_pseudo_confidence > 0.0:
        keep = probs_a.max(axis=1) >= cfg.min_pseudo_confidence
        if not keep.any():
            raise ParameterError(
                "confidence filter removed every pseudo-labeled row"
            )
        carried_a, labels_a = carried_a[keep], labels_a[keep]

    pool = DomainDataset(
        features=np.vstack([source.features, carried_a]),
        labels=np.concatenate([source.labels, labels_a]),
        domain_tag="pool",
        class_count=model.class_count,
        row_tags=np.concatenate([
            np.full(source.n, "source"),
            np.full(carried_a.shape[0], "target_a"),
        ]),
    )

    result = adapt(
        pool.features,
        pool.labels,
        zb,
        cfg,
        init_head=model.classifier if cfg.progressive_warm_start else None,
        source_basis_override=None if cfg.progressive_refit_pool else model.source_basis,
    )
    return result, pool


def predict_deployed(model: DeployedModel, features):
    """Predictions of the deployed model on its own target domain (A)."""
    return predict_target(
        features, model.alignment, model.source_basis, model.target_basis,
        model.classifier,
    )
