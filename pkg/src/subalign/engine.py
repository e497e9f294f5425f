"""Bi-level adaptation engine: classifier refinement alternating with
task-tuned subspace alignment, plus the ablation modes and partial-domain
support.

One call to :func:`adapt` performs a complete run on feature matrices:
seeded 80/20 splits per domain, one-time subspace fits, closed-form
alignment init, then `n_iter` outer iterations of `t1` classifier steps on
the train split followed by `t2` alignment steps on the held-out split with
the classifier frozen. Everything is a pure function of (inputs, config,
seed).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import accuracy, split_indices
from .errors import NumericalError, ParameterError
from .losses import LossWeights, alignment_loss, cross_entropy
from .models import (
    Adam,
    ClassifierParams,
    classifier_forward,
    classifier_loss_grads,
    init_classifier,
    make_optimizer,
)
from .numerics import frobenius_norm, make_rng
from .subspace import (
    AlignmentMatrix,
    SubspaceBasis,
    closed_form_alignment,
    default_subspace_dim,
    fit_subspace,
    reproject,
)
from .validation import check_labels, check_matrix, check_probabilities, check_same_columns
from . import saf

MODES = ("none", "primary-only", "independent", "joint", "alternating")

TRACE_COLUMNS = (
    "iteration",
    "drift_from_init",
    "step_change",
    "classifier_loss",
    "alignment_loss",
    "target_accuracy",
)


@dataclass(frozen=True)
class AdaptConfig:
    """Every knob of the pipeline; field names double as config-file keys."""

    subspace_dim: int | None = None
    lambda_c: float = 0.1
    lambda_cb: float = 0.1
    gamma_c: float = 0.1
    gamma_cb: float = 0.1
    n_iter: int = 10
    t1: int = 50
    t2: int = 50
    pretrain_epochs: int = 200
    pretrain_lr: float = 1e-3
    pretrain_optimizer: str = "adam"
    pretrain_batch_size: int = 256
    hidden_widths: tuple = (64, 64)
    feature_dim: int = 32
    classifier_lr: float = 1e-4
    classifier_momentum: float = 0.9
    classifier_optimizer: str = "sgd"
    alignment_lr: float = 1e-3
    alignment_optimizer: str = "adam"
    alignment_lr_decay: float = 0.5
    head_init_steps: int = 400
    head_init_lr: float = 0.05
    split_fraction: float = 0.8
    seed: int = 0
    centering: bool = True
    mode: str = "alternating"
    partial_da: bool = False
    class_prior_tau: float = 0.1
    target_fraction: float = 1.0
    min_pseudo_confidence: float = 0.0
    progressive_refit_pool: bool = True
    progressive_warm_start: bool = True
    early_stop_tol: float = 1e-4

    def validate(self) -> "AdaptConfig":
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ParameterError("split_fraction must lie strictly between 0 and 1")
        if not 0.0 < self.target_fraction <= 1.0:
            raise ParameterError("target_fraction must lie in (0, 1]")
        for name in ("n_iter", "t1", "t2", "pretrain_epochs", "head_init_steps",
                     "pretrain_batch_size", "feature_dim"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be at least 1")
        for name in ("lambda_c", "lambda_cb", "gamma_c", "gamma_cb",
                     "class_prior_tau", "min_pseudo_confidence", "early_stop_tol",
                     "alignment_lr_decay"):
            if float(getattr(self, name)) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if self.subspace_dim is not None and int(self.subspace_dim) < 1:
            raise ParameterError("subspace_dim must be positive or None for automatic")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")
        return self

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda_c=self.lambda_c, lambda_cb=self.lambda_cb,
            gamma_c=self.gamma_c, gamma_cb=self.gamma_cb,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden_widths"] = list(self.hidden_widths)
        return out

    @classmethod
    def from_dict(cls, mapping: dict) -> "AdaptConfig":
        kwargs = dict(mapping)
        if "hidden_widths" in kwargs and kwargs["hidden_widths"] is not None:
            kwargs["hidden_widths"] = tuple(int(w) for w in kwargs["hidden_widths"])
        unknown = set(kwargs) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs).validate()

    def digest(self) -> str:
        canon = "\n".join(f"{k}={self.to_dict()[k]!r}" for k in sorted(self.to_dict()))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class IterationRecord:
    """One row of the per-outer-iteration trace."""

    iteration: int
    drift_from_init: float
    step_change: float
    classifier_loss: float
    alignment_loss: float
    target_accuracy: float

    def as_tuple(self):
        return (self.iteration, self.drift_from_init, self.step_change,
                self.classifier_loss, self.alignment_loss, self.target_accuracy)


@dataclass
class AdaptResult:
    """Outcome of one adaptation run: refined head, learned alignment, trace."""

    mode: str
    classifier: ClassifierParams
    alignment: AlignmentMatrix | None
    source_basis: SubspaceBasis | None
    target_basis: SubspaceBasis | None
    trace: list
    class_count: int
    config: AdaptConfig
    alignment_rank: int | None = None
    alignment_cond: float | None = None
    class_priors: np.ndarray | None = None

    def predict(self, features):
        """Class indices and probabilities for target-domain feature rows."""
        return predict_target(
            features, self.alignment, self.source_basis, self.target_basis,
            self.classifier,
        )

    def trace_array(self) -> np.ndarray:
        return np.asarray([r.as_tuple() for r in self.trace], dtype=np.float64)

    def save(self, path, extra_meta: dict | None = None):
        meta = {
            "kind": "adapt_result",
            "mode": self.mode,
            "class_count": int(self.class_count),
            "alignment_rank": None if self.alignment_rank is None else int(self.alignment_rank),
            "alignment_cond": _json_float(self.alignment_cond),
            "config": self.config.to_dict(),
            "trace_columns": list(TRACE_COLUMNS),
        }
        if extra_meta:
            meta.update(extra_meta)
        arrays = {
            "classifier_weight": self.classifier.weight,
            "classifier_bias": self.classifier.bias,
            "trace": self.trace_array(),
        }
        if self.alignment is not None:
            arrays["alignment"] = self.alignment.matrix
            arrays["source_basis"] = self.source_basis.basis
            arrays["source_mean"] = self.source_basis.mean
            arrays["target_basis"] = self.target_basis.basis
            arrays["target_mean"] = self.target_basis.mean
        if self.class_priors is not None:
            arrays["class_priors"] = self.class_priors
        saf.write_checkpoint(path, meta, arrays, nan_ok=("trace",))

    @classmethod
    def load(cls, path) -> "AdaptResult":
        meta, arrays = saf.read_checkpoint(path)
        if meta.get("kind") != "adapt_result":
            raise ParameterError(f"checkpoint {path} is not an adaptation result")
        alignment = source_basis = target_basis = None
        if "alignment" in arrays:
            alignment = AlignmentMatrix(arrays["alignment"])
            source_basis = SubspaceBasis(arrays["source_basis"], arrays["source_mean"])
            target_basis = SubspaceBasis(arrays["target_basis"], arrays["target_mean"])
        trace = [
            IterationRecord(int(row[0]), *[float(v) for v in row[1:]])
            for row in arrays.get("trace", np.zeros((0, 6)))
        ]
        cond = meta.get("alignment_cond")
        return cls(
            mode=meta["mode"],
            classifier=ClassifierParams(arrays["classifier_weight"], arrays["classifier_bias"]),
            alignment=alignment,
            source_basis=source_basis,
            target_basis=target_basis,
            trace=trace,
            class_count=int(meta["class_count"]),
            config=AdaptConfig.from_dict(meta["config"]),
            alignment_rank=meta.get("alignment_rank"),
            alignment_cond=math.inf if cond == "inf" else cond,
            class_priors=arrays.get("class_priors"),
        )


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else "inf"


def estimate_class_priors(target_probs, tau: float) -> np.ndarray:
    """Soft class-prior weights from mean target predictions.

    Classes whose mean predicted mass falls below `tau` times the largest
    mean mass are zeroed; the rest keep their relative mass, rescaled so the
    largest weight is 1. A uniform mean prediction yields all-ones weights,
    recovering the standard (non-partial) objective.
    """
    p = check_probabilities(target_probs, "target_probs")
    if tau < 0:
        raise ParameterError("tau must be non-negative")
    pbar = p.mean(axis=0)
    w = np.where(pbar >= tau * pbar.max(), pbar, 0.0)
    return w / w.max()


def fit_source_classifier(features, labels, n_classes: int, cfg: AdaptConfig) -> ClassifierParams:
    """Supervised softmax fit on source features (full-batch Adam from zeros).

    Used both as the no-adaptation baseline and as the head initialisation
    when no pre-trained head is supplied.
    """
    z = check_matrix(features, "features")
    y = check_labels(labels, z.shape[0], "labels", n_classes=n_classes)
    head = init_classifier(z.shape[1], n_classes)
    opt = Adam(cfg.head_init_lr)
    for step in range(int(cfg.head_init_steps)):
        probs = classifier_forward(head, z)
        ce = cross_entropy(probs, y)
        if not np.isfinite(ce.value):
            raise NumericalError(f"non-finite source fit loss at step {step}")
        grad_w = z.T @ ce.grad
        grad_b = ce.grad.sum(axis=0)
        new_w, new_b = opt.step([head.weight, head.bias], [grad_w, grad_b])
        head = ClassifierParams(new_w, new_b)
    return head


def predict_target(features, align, source_basis, target_basis, classifier):
    """Predict class indices (+ probabilities) for target feature rows.

    With an alignment present the rows are first carried into the source
    frame; `align=None` classifies the raw rows (no-adaptation and
    identity-alignment modes). Ties in the argmax break to the lowest index.
    """
    z = check_matrix(features, "features")
    if align is not None:
        z = reproject(z, target_basis, align, source_basis)
    probs = classifier_forward(classifier, z)
    return np.argmax(probs, axis=1), probs


def adapt(
    source_features,
    source_labels,
    target_features,
    cfg: AdaptConfig,
    eval_labels=None,
    init_head: ClassifierParams | None = None,
    source_basis_override: SubspaceBasis | None = None,
) -> AdaptResult:
    """Run one full adaptation on feature matrices.

    Parameters
    ----------
    source_features, source_labels : labeled source rows (n_s x D).
    target_features : unlabeled target rows (n_t x D).
    cfg : AdaptConfig controlling mode, budgets, and seeds.
    eval_labels : optional target labels used *only* to report held-out
        accuracy in the trace; they never influence the optimisation.
    init_head : optional pre-trained classifier to warm-start from (for
        example the head of the pre-training stage). Without it a supervised
        source fit provides the initial head.
    source_basis_override : reuse an existing source basis instead of
        fitting one (progressive adaptation's reuse path).
    """
    cfg = cfg.validate()
    zs = check_matrix(source_features, "source_features")
    zt = check_matrix(target_features, "target_features")
    check_same_columns(zs, zt, "source_features", "target_features")
    ys = check_labels(source_labels, zs.shape[0], "source_labels")
    if init_head is not None:
        n_classes = init_head.n_classes
        ys = check_labels(ys, zs.shape[0], "source_labels", n_classes=n_classes)
    else:
        n_classes = int(ys.max()) + 1
    if eval_labels is not None:
        eval_labels = check_labels(eval_labels, zt.shape[0], "eval_labels")

    if cfg.target_fraction < 1.0:
        keep = max(2, int(np.floor(cfg.target_fraction * zt.shape[0] + 0.5)))
        idx = np.sort(make_rng(cfg.seed, 5).permutation(zt.shape[0])[:keep])
        zt = zt[idx]
        if eval_labels is not None:
            eval_labels = eval_labels[idx]

    n_source, n_target = zs.shape[0], zt.shape[0]
    if n_source < 2 or n_target < 2:
        raise ParameterError("both domains need at least 2 rows")
    weights = cfg.loss_weights()
    s_train, _s_hold = split_indices(n_source, cfg.split_fraction, make_rng(cfg.seed, 1))
    t_train, t_hold = split_indices(n_target, cfg.split_fraction, make_rng(cfg.seed, 2))
    zs_train, ys_train = zs[s_train], ys[s_train]
    zt_train, zt_hold = zt[t_train], zt[t_hold]

    uses_alignment = cfg.mode in ("independent", "joint", "alternating")
    source_basis = target_basis = None
    align_mat = None
    init_norm = 1.0
    if uses_alignment:
        if source_basis_override is not None:
            dim = source_basis_override.dim_subspace
        elif cfg.subspace_dim is not None:
            dim = int(cfg.subspace_dim)
        else:
            dim = default_subspace_dim(min(n_source, n_target), zs.shape[1])
        source_basis = (
            source_basis_override
            if source_basis_override is not None
            else fit_subspace(zs, dim, cfg.centering)
        )
        target_basis = fit_subspace(zt, dim, cfg.centering)
        init_alignment = closed_form_alignment(source_basis, target_basis)
        align_mat = init_alignment.matrix.copy()
        init_norm = frobenius_norm(align_mat)

    head = (
        init_head.copy()
        if init_head is not None
        else fit_source_classifier(zs_train, ys_train, n_classes, cfg)
    )
    clf_opt = make_optimizer(cfg.classifier_optimizer, cfg.classifier_lr,
                             cfg.classifier_momentum)
    align_opt = make_optimizer(cfg.alignment_optimizer, cfg.alignment_lr) if uses_alignment else None
    # Source-only refinement: target terms are switched off entirely.
    clf_weights = (
        replace(weights, gamma_c=0.0, gamma_cb=0.0) if cfg.mode == "none" else weights
    )

    def carried(features, matrix):
        if not uses_alignment:
            return features
        return reproject(features, target_basis, AlignmentMatrix(matrix), source_basis)

    trace: list[IterationRecord] = []
    prev_mat = None if align_mat is None else align_mat.copy()
    class_priors = None

    for iteration in range(1, cfg.n_iter + 1):
        if cfg.partial_da and cfg.mode != "none":
            probs_full = classifier_forward(head, carried(zt, align_mat))
            class_priors = estimate_class_priors(probs_full, cfg.class_prior_tau)

        if uses_alignment:
            align_opt.lr = cfg.alignment_lr * cfg.alignment_lr_decay ** (iteration - 1)

        if cfg.mode == "joint":
            last_clf = last_align = math.nan
            for _ in range(max(cfg.t1, cfg.t2)):
                comp, grad_w, grad_b = classifier_loss_grads(
                    head, zs_train, ys_train, carried(zt_train, align_mat),
                    clf_weights, class_priors,
                )
                align_res = alignment_loss(
                    source_basis, target_basis, AlignmentMatrix(align_mat),
                    zt_hold, head, weights, class_priors,
                )
                _require_finite(comp.value, "classifier", iteration)
                _require_finite(align_res.value, "alignment", iteration)
                new_w, new_b = clf_opt.step([head.weight, head.bias], [grad_w, grad_b])
                head = ClassifierParams(new_w, new_b)
                (align_mat,) = align_opt.step([align_mat], [align_res.grad])
                last_clf, last_align = comp.value, align_res.value
        else:
            frozen_input = carried(zt_train, align_mat)
            last_clf = math.nan
            for _ in range(cfg.t1):
                comp, grad_w, grad_b = classifier_loss_grads(
                    head, zs_train, ys_train, frozen_input, clf_weights, class_priors,
                )
                _require_finite(comp.value, "classifier", iteration)
                new_w, new_b = clf_opt.step([head.weight, head.bias], [grad_w, grad_b])
                head = ClassifierParams(new_w, new_b)
                last_clf = comp.value
            last_align = math.nan
            if cfg.mode == "alternating":
                for _ in range(cfg.t2):
                    align_res = alignment_loss(
                        source_basis, target_basis, AlignmentMatrix(align_mat),
                        zt_hold, head, weights, class_priors,
                    )
                    _require_finite(align_res.value, "alignment", iteration)
                    (align_mat,) = align_opt.step([align_mat], [align_res.grad])
                    last_align = align_res.value
            elif cfg.mode == "independent":
                last_align = alignment_loss(
                    source_basis, target_basis, AlignmentMatrix(align_mat),
                    zt_hold, head, weights, class_priors,
                ).value

        if uses_alignment:
            drift = frobenius_norm(align_mat - init_alignment.matrix)
            step_change = frobenius_norm(align_mat - prev_mat)
            prev_mat = align_mat.copy()
        else:
            drift = step_change = math.nan
        acc = math.nan
        if eval_labels is not None:
            pred, _ = predict_target(
                zt_hold,
                AlignmentMatrix(align_mat) if uses_alignment else None,
                source_basis, target_basis, head,
            )
            acc = accuracy(pred, eval_labels[t_hold])
        trace.append(IterationRecord(iteration, drift, step_change, last_clf,
                                     last_align, acc))
        if (
            cfg.mode in ("joint", "alternating")
            and step_change < cfg.early_stop_tol * max(1.0, init_norm)
        ):
            break

    alignment = AlignmentMatrix(align_mat) if uses_alignment else None
    rank = cond = None
    if alignment is not None:
        rank = int(np.linalg.matrix_rank(alignment.matrix))
        cond = float(np.linalg.cond(alignment.matrix))
    return AdaptResult(
        mode=cfg.mode,
        classifier=head,
        alignment=alignment,
        source_basis=source_basis,
        target_basis=target_basis,
        trace=trace,
        class_count=n_classes,
        config=cfg,
        alignment_rank=rank,
        alignment_cond=cond,
        class_priors=class_priors,
    )


def _require_finite(value: float, stage: str, iteration: int):
    if not np.isfinite(value):
        raise NumericalError(
            f"non-finite {stage} loss at outer iteration {iteration}"
        )
