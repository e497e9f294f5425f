"""Feature-space unsupervised domain adaptation via task-tuned subspace alignment."""

from .data import (
    DomainDataset,
    SyntheticSpec,
    accuracy,
    generate_synthetic,
    per_class_accuracy,
    split,
)
from .engine import AdaptConfig, AdaptResult, adapt, estimate_class_priors, predict_target
from .estimators import SubspaceAlignmentUDA, TargetAwarePretrainer
from .losses import (
    LossWeights,
    alignment_loss,
    class_balance,
    classifier_loss,
    conditional_entropy,
    cross_entropy,
    tafe_loss,
)
from .models import Adam, ClassifierParams, ExtractorParams, SgdMomentum
from .numerics import frobenius_norm, make_rng, softmax_rows, thin_svd
from .pretrain import ExtractorModel, extract_features, pretrain_extractor
from .progressive import DeployedModel, progressive_adapt, pseudo_label
from .saf import read_checkpoint, read_features, write_checkpoint, write_features
from .subspace import (
    AlignmentMatrix,
    SubspaceBasis,
    aligned_target_basis,
    alignment_cost,
    closed_form_alignment,
    fit_subspace,
    reproject,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig",
    "AdaptResult",
    "Adam",
    "AlignmentMatrix",
    "ClassifierParams",
    "DeployedModel",
    "DomainDataset",
    "ExtractorModel",
    "ExtractorParams",
    "LossWeights",
    "SgdMomentum",
    "SubspaceAlignmentUDA",
    "SubspaceBasis",
    "SyntheticSpec",
    "TargetAwarePretrainer",
    "accuracy",
    "adapt",
    "aligned_target_basis",
    "alignment_cost",
    "alignment_loss",
    "class_balance",
    "classifier_loss",
    "closed_form_alignment",
    "conditional_entropy",
    "cross_entropy",
    "estimate_class_priors",
    "extract_features",
    "fit_subspace",
    "frobenius_norm",
    "generate_synthetic",
    "make_rng",
    "per_class_accuracy",
    "predict_target",
    "pretrain_extractor",
    "progressive_adapt",
    "pseudo_label",
    "read_checkpoint",
    "read_features",
    "reproject",
    "softmax_rows",
    "split",
    "tafe_loss",
    "thin_svd",
    "write_checkpoint",
    "write_features",
    "__version__",
]
