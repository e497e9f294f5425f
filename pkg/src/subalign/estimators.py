"""Scikit-learn style estimator facades over the adaptation pipeline.

These wrap the functional engine so the toolkit composes with pipelines,
`clone`, and hyper-parameter search: constructor arguments are stored
verbatim, state learned in `fit` lands in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .data import DomainDataset
from .engine import AdaptConfig, adapt
from .errors import ParameterError
from .pretrain import extract_features, pretrain_extractor


class SubspaceAlignmentUDA(BaseEstimator, ClassifierMixin):
    """Unsupervised domain adaptation via task-tuned subspace alignment.

    Fits on labeled source features plus unlabeled target features, learning
    a linear softmax head together with a subspace alignment that carries
    target rows into the source coordinate frame. ``mode`` selects the
    optimisation strategy: ``"none"`` (source-only baseline),
    ``"primary-only"`` (entropy-refined head, identity alignment),
    ``"independent"`` (closed-form alignment, then head refinement),
    ``"joint"`` (simultaneous updates), or ``"alternating"`` (the full
    bi-level scheme, default).

    Parameters mirror :class:`subalign.engine.AdaptConfig`; see its docs for
    semantics and defaults.

    Examples
    --------
    >>> est = SubspaceAlignmentUDA(subspace_dim=8, seed=0)
    >>> est.fit(source_X, source_y, target_X)      # doctest: +SKIP
    >>> target_pred = est.predict(target_X)        # doctest: +SKIP
    """

    def __init__(self, subspace_dim=None, mode="alternating", n_iter=10, t1=50,
                 t2=50, gamma_c=0.1, gamma_cb=0.1, classifier_lr=1e-4,
                 classifier_momentum=0.9, classifier_optimizer="sgd",
                 alignment_lr=1e-3, alignment_optimizer="adam",
                 alignment_lr_decay=0.5, head_init_steps=400, head_init_lr=0.05,
                 split_fraction=0.8, centering=True, partial_da=False,
                 class_prior_tau=0.1, early_stop_tol=1e-4, seed=0):
        self.subspace_dim = subspace_dim
        self.mode = mode
        self.n_iter = n_iter
        self.t1 = t1
        self.t2 = t2
        self.gamma_c = gamma_c
        self.gamma_cb = gamma_cb
        self.classifier_lr = classifier_lr
        self.classifier_momentum = classifier_momentum
        self.classifier_optimizer = classifier_optimizer
        self.alignment_lr = alignment_lr
        self.alignment_optimizer = alignment_optimizer
        self.alignment_lr_decay = alignment_lr_decay
        self.head_init_steps = head_init_steps
        self.head_init_lr = head_init_lr
        self.split_fraction = split_fraction
        self.centering = centering
        self.partial_da = partial_da
        self.class_prior_tau = class_prior_tau
        self.early_stop_tol = early_stop_tol
        self.seed = seed

    def _config(self) -> AdaptConfig:
        return AdaptConfig(
            subspace_dim=self.subspace_dim, mode=self.mode, n_iter=self.n_iter,
            t1=self.t1, t2=self.t2, gamma_c=self.gamma_c, gamma_cb=self.gamma_cb,
            classifier_lr=self.classifier_lr,
            classifier_momentum=self.classifier_momentum,
            classifier_optimizer=self.classifier_optimizer,
            alignment_lr=self.alignment_lr,
            alignment_optimizer=self.alignment_optimizer,
            alignment_lr_decay=self.alignment_lr_decay,
            head_init_steps=self.head_init_steps, head_init_lr=self.head_init_lr,
            split_fraction=self.split_fraction, centering=self.centering,
            partial_da=self.partial_da, class_prior_tau=self.class_prior_tau,
            early_stop_tol=self.early_stop_tol, seed=self.seed,
        ).validate()

    def fit(self, X, y, X_target=None, init_head=None):
        """Fit on labeled source (X, y) and unlabeled target X_target."""
        if X_target is None:
            raise ParameterError("X_target (unlabeled target features) is required")
        self.result_ = adapt(X, np.asarray(y), X_target, self._config(),
                             init_head=init_head)
        self.classes_ = np.arange(self.result_.class_count)
        return self

    def predict(self, X):
        self._check_fitted()
        labels, _ = self.result_.predict(X)
        return labels

    def predict_proba(self, X):
        self._check_fitted()
        _, probs = self.result_.predict(X)
        return probs

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit before predict")


class TargetAwarePretrainer(BaseEstimator, TransformerMixin):
    """Feature extractor pre-trained on labeled source plus unlabeled target.

    `fit` trains a small MLP jointly with a linear head (source
    cross-entropy plus weighted target entropy and class-balance terms) and
    freezes the extractor; `transform` maps raw rows to feature rows.
    """

    def __init__(self, feature_dim=32, hidden_widths=(64, 64), epochs=200,
                 lr=1e-3, optimizer="adam", batch_size=256, lambda_c=0.1,
                 lambda_cb=0.1, seed=0):
        self.feature_dim = feature_dim
        self.hidden_widths = hidden_widths
        self.epochs = epochs
        self.lr = lr
        self.optimizer = optimizer
        self.batch_size = batch_size
        self.lambda_c = lambda_c
        self.lambda_cb = lambda_cb
        self.seed = seed

    def fit(self, X, y, X_target=None):
        if X_target is None:
            raise ParameterError("X_target (unlabeled target rows) is required")
        cfg = AdaptConfig(
            feature_dim=self.feature_dim, hidden_widths=tuple(self.hidden_widths),
            pretrain_epochs=self.epochs, pretrain_lr=self.lr,
            pretrain_optimizer=self.optimizer, pretrain_batch_size=self.batch_size,
            lambda_c=self.lambda_c, lambda_cb=self.lambda_cb, seed=self.seed,
        ).validate()
        source = DomainDataset(features=np.asarray(X, dtype=np.float64),
                               labels=np.asarray(y), domain_tag="source")
        target = DomainDataset(features=np.asarray(X_target, dtype=np.float64),
                               domain_tag="target")
        self.model_ = pretrain_extractor(source, target, cfg)
        self.head_ = self.model_.head
        return self

    def transform(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before transform")
        return extract_features(self.model_, X)
