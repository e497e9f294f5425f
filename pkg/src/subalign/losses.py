"""Loss functions with analytic gradients.

Three primitives (source cross-entropy, target prediction entropy, and a
class-balance penalty on the batch-mean prediction) plus the weighted
composites used by the pre-training, classifier-refinement, and subspace
alignment stages. Every primitive returns its value together with the
gradient with respect to the *logits* that produced the probabilities, so
callers can chain into parameter gradients with one matrix product. All
per-sample losses use mean reduction, which keeps the weights independent
of batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import DimensionMismatchError, ParameterError
from .subspace import AlignmentMatrix, SubspaceBasis, reproject
from .validation import check_labels, check_probabilities

_PBAR_CLAMP = 1e-12
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class LossValueGrad:
    """A scalar loss value and its gradient w.r.t. the differentiated input."""

    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights for the composite objectives."""

    lambda_c: float = 0.1
    lambda_cb: float = 0.1
    gamma_c: float = 0.1
    gamma_cb: float = 0.1

    def __post_init__(self):
        for name in ("lambda_c", "lambda_cb", "gamma_c", "gamma_cb"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class CompositeLoss:
    """Weighted sum of the three primitives over a source and a target batch."""

    value: float
    source_ce: float
    target_entropy: float
    class_balance: float
    grad_source: np.ndarray
    grad_target: np.ndarray


@dataclass(frozen=True)
class AlignmentLoss:
    """Task-tuned alignment objective and its gradient w.r.t. the alignment matrix."""

    value: float
    subspace_cost: float
    target_entropy: float
    class_balance: float
    grad: np.ndarray


def cross_entropy(probs, labels) -> LossValueGrad:
    """Mean negative log-likelihood of the true classes.

    The gradient is taken with respect to the logits: (probs - onehot) / n.
    """
    p = check_probabilities(probs, "probs")
    n, k = p.shape
    y = check_labels(labels, n, "labels", n_classes=k)
    picked = p[np.arange(n), y]
    value = float(-np.mean(np.log(np.maximum(picked, _LOG_FLOOR))))
    grad = p.copy()
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return LossValueGrad(value=value, grad=grad)


def conditional_entropy(probs, class_weights=None) -> LossValueGrad:
    """Mean Shannon entropy of the per-row predicted distributions.

    Optional per-class weights rescale each class's contribution (used for
    partial-domain adaptation); `None` means all ones. Gradient w.r.t. the
    logits.
    """
    p = check_probabilities(probs, "probs")
    n, k = p.shape
    w = _as_class_weights(class_weights, k)
    plogp = xlogy(p, p)  # 0 log 0 -> 0
    wplogp = plogp * w
    value = float(-np.sum(wplogp) / n)
    # d/dlogit_ij = -(1/n) [ w_j p log p + w_j p - p * rowsum(w p log p + w p) ]
    pw = p * w
    row = (wplogp + pw).sum(axis=1, keepdims=True)
    grad = -(wplogp + pw - p * row) / n
    return LossValueGrad(value=value, grad=grad)


def class_balance(probs, class_weights=None) -> LossValueGrad:
    """Binary cross-entropy of the batch-mean prediction against uniform.

    Each class k contributes -[u_k log pbar_k + (1-u_k) log(1-pbar_k)] with
    u the uniform distribution, so the minimum sits exactly at a uniform
    mean prediction. Per-class weights mask the targets: u becomes uniform
    over the positive-weight classes and zero elsewhere, so masked classes
    are pushed toward zero mean mass. All-positive weights reduce to the
    standard loss. The mean prediction is clamped to [1e-12, 1-1e-12]
    before the logs.
    """
    p = check_probabilities(probs, "probs")
    n, k = p.shape
    w = _as_class_weights(class_weights, k)
    active = w > 0
    if not np.any(active):
        raise ParameterError("class_weights must have at least one positive entry")
    u = np.where(active, 1.0 / active.sum(), 0.0)
    pbar = np.clip(p.mean(axis=0), _PBAR_CLAMP, 1.0 - _PBAR_CLAMP)
    terms = u * np.log(pbar) + (1.0 - u) * np.log(1.0 - pbar)
    value = float(-np.sum(terms))
    coeff = -u / pbar + (1.0 - u) / (1.0 - pbar)
    dlogits_per_prob = coeff / n
    row = (p * dlogits_per_prob).sum(axis=1, keepdims=True)
    grad = p * (dlogits_per_prob - row)
    return LossValueGrad(value=value, grad=grad)


def tafe_loss(src_probs, src_labels, tgt_probs, weights: LossWeights,
              class_weights=None) -> CompositeLoss:
    """Pre-training objective: source CE + lambda_c entropy + lambda_cb balance."""
    return _composite(src_probs, src_labels, tgt_probs,
                      weights.lambda_c, weights.lambda_cb, class_weights)


def classifier_loss(src_probs, src_labels, aligned_tgt_probs, weights: LossWeights,
                    class_weights=None) -> CompositeLoss:
    """Classifier-refinement objective: source CE + gamma-weighted target terms.

    The target probabilities are expected to come from source-aligned target
    features; the alignment is applied upstream.
    """
    return _composite(src_probs, src_labels, aligned_tgt_probs,
                      weights.gamma_c, weights.gamma_cb, class_weights)


def alignment_loss(
    source: SubspaceBasis,
    target: SubspaceBasis,
    align: AlignmentMatrix,
    target_features,
    classifier,
    weights: LossWeights,
    class_weights=None,
) -> AlignmentLoss:
    """Task-tuned alignment cost and its gradient w.r.t. the alignment matrix.

    value = ||target_basis @ A - source_basis||_F^2
            + gamma_c * entropy + gamma_cb * balance,
    where the entropy terms are evaluated on the frozen classifier's
    predictions for the re-projected target features. The gradient combines
    the analytic quadratic term 2 Wtᵀ (Wt A - Ws) with the chain rule
    through the re-projection and the (constant) classifier parameters.

    `classifier` only needs `.weight` (D x K) and `.bias` (K,) attributes.
    """
    residual = target.basis @ align.matrix - source.basis
    subspace_cost = float(np.sum(residual * residual))
    grad = 2.0 * target.basis.T @ residual

    entropy_value = 0.0
    balance_value = 0.0
    if weights.gamma_c > 0 or weights.gamma_cb > 0:
        z = np.asarray(target_features, dtype=np.float64)
        if z.ndim != 2:
            raise ParameterError("target_features must be 2-dimensional")
        carried = reproject(z, target, align, source)
        logits = carried @ classifier.weight + classifier.bias
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
        grad_logits = np.zeros_like(probs)
        if weights.gamma_c > 0:
            ent = conditional_entropy(probs, class_weights)
            entropy_value = ent.value
            grad_logits += weights.gamma_c * ent.grad
        if weights.gamma_cb > 0:
            bal = class_balance(probs, class_weights)
            balance_value = bal.value
            grad_logits += weights.gamma_cb * bal.grad
        # logits = ((z - mu_t) Wt A Ws^T + mu_s) W + b
        grad_carried = grad_logits @ classifier.weight.T
        projected = (z - target.mean) @ target.basis
        grad += projected.T @ grad_carried @ source.basis
    value = (subspace_cost
             + weights.gamma_c * entropy_value
             + weights.gamma_cb * balance_value)
    return AlignmentLoss(
        value=float(value),
        subspace_cost=subspace_cost,
        target_entropy=entropy_value,
        class_balance=balance_value,
        grad=grad,
    )


def _composite(src_probs, src_labels, tgt_probs, w_ent, w_bal, class_weights):
    ce = cross_entropy(src_probs, src_labels)
    ent = conditional_entropy(tgt_probs, class_weights)
    bal = class_balance(tgt_probs, class_weights)
    value = ce.value + w_ent * ent.value + w_bal * bal.value
    return CompositeLoss(
        value=float(value),
        source_ce=ce.value,
        target_entropy=ent.value,
        class_balance=bal.value,
        grad_source=ce.grad,
        grad_target=w_ent * ent.grad + w_bal * bal.grad,
    )


def _as_class_weights(class_weights, n_classes) -> np.ndarray:
    if class_weights is None:
        return np.ones(n_classes)
    w = np.asarray(class_weights, dtype=np.float64).ravel()
    if w.shape[0] != n_classes:
        raise DimensionMismatchError(
            f"class_weights has length {w.shape[0]}, expected {n_classes}"
        )
    if w.min() < 0 or not np.isfinite(w).all():
        raise ParameterError("class_weights must be finite and non-negative")
    return w
