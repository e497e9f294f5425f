"""Trainable pieces: linear softmax head, small MLP extractor, optimizers.

The backward passes are written out by hand; there is no autograd anywhere
in the toolkit. Parameters are plain float64 arrays owned by whoever is
training them, and optimizers return fresh arrays instead of mutating
their inputs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ParameterError
from .losses import CompositeLoss, LossWeights, classifier_loss
from .numerics import softmax_rows
from .validation import check_matrix


@dataclass
class ClassifierParams:
    """Weights and bias of the linear softmax head."""

    weight: np.ndarray  # (input_dim, n_classes)
    bias: np.ndarray  # (n_classes,)

    def __post_init__(self):
        self.weight = np.ascontiguousarray(np.asarray(self.weight, dtype=np.float64))
        self.bias = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64).ravel())
        if self.weight.ndim != 2:
            raise ParameterError("classifier weight must be 2-dimensional")
        if self.bias.shape[0] != self.weight.shape[1]:
            raise DimensionMismatchError("bias length must equal the class count")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ParameterError("classifier parameters contain non-finite entries")

    @property
    def input_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.weight.copy(), self.bias.copy())


@dataclass
class ExtractorParams:
    """Per-layer weights/biases of an MLP with ReLU hidden layers and a linear top."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ParameterError("weights and biases must have the same length")
        if not self.weights:
            raise ParameterError("extractor needs at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.ascontiguousarray(np.asarray(w, dtype=np.float64))
            b = np.ascontiguousarray(np.asarray(b, dtype=np.float64).ravel())
            if w.ndim != 2 or b.shape[0] != w.shape[1]:
                raise DimensionMismatchError(f"layer {i} weight/bias shapes disagree")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DimensionMismatchError(
                    f"layer {i} input width {w.shape[0]} does not match previous output"
                )
            self.weights[i] = w
            self.biases[i] = b

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "ExtractorParams":
        return ExtractorParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    def flat(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def init_classifier(input_dim: int, n_classes: int, rng=None) -> ClassifierParams:
    """Zero-initialised head (uniform predictions), or fan-in scaled uniform with an rng."""
    if rng is None:
        return ClassifierParams(np.zeros((input_dim, n_classes)), np.zeros(n_classes))
    bound = 1.0 / np.sqrt(input_dim)
    return ClassifierParams(
        rng.uniform(-bound, bound, size=(input_dim, n_classes)), np.zeros(n_classes)
    )


def init_extractor(input_dim: int, hidden_widths, output_dim: int, rng) -> ExtractorParams:
    """Fan-in scaled-uniform init for every layer, drawn from the supplied rng."""
    widths = [int(input_dim)] + [int(w) for w in hidden_widths] + [int(output_dim)]
    weights, biases = [], []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return ExtractorParams(weights, biases)


def classifier_logits(params: ClassifierParams, features) -> np.ndarray:
    z = check_matrix(features, "features")
    if z.shape[1] != params.input_dim:
        raise DimensionMismatchError(
            f"features have {z.shape[1]} columns, classifier expects {params.input_dim}"
        )
    return z @ params.weight + params.bias


def classifier_forward(params: ClassifierParams, features) -> np.ndarray:
    """Class probabilities for each feature row."""
    return softmax_rows(classifier_logits(params, features))


def alignment_forward(align, features, source_basis, target_basis) -> np.ndarray:
    """Forward pass of the alignment layer: carry target rows into the source frame.

    The learnable transform acts as a single linear layer (no bias, no
    activation) between the two subspace projections; this is exactly
    :func:`subalign.subspace.reproject` with the current matrix.
    """
    from .subspace import reproject

    return reproject(features, target_basis, align, source_basis)


def extractor_forward(params: ExtractorParams, x) -> np.ndarray:
    """Deterministic forward pass; ReLU after every layer except the last."""
    h = check_matrix(x, "inputs")
    if h.shape[1] != params.input_dim:
        raise DimensionMismatchError(
            f"inputs have {h.shape[1]} columns, extractor expects {params.input_dim}"
        )
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def extractor_forward_cached(params: ExtractorParams, x):
    """Forward pass that also returns the activations needed for backprop."""
    h = check_matrix(x, "inputs")
    if h.shape[1] != params.input_dim:
        raise DimensionMismatchError(
            f"inputs have {h.shape[1]} columns, extractor expects {params.input_dim}"
        )
    inputs = []  # input to each layer
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h, inputs


def extractor_backward(params: ExtractorParams, inputs, grad_output):
    """Gradients of a scalar loss w.r.t. every layer, given dLoss/dOutput.

    Returns a flat list interleaved as [dW_0, db_0, dW_1, db_1, ...] matching
    ``ExtractorParams.flat()``.
    """
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    g = np.asarray(grad_output, dtype=np.float64)
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        h_in = inputs[i]
        if i < last:
            # ReLU was applied to this layer's pre-activation; recompute mask
            pre = h_in @ params.weights[i] + params.biases[i]
            g = g * (pre > 0.0)
        grads_w[i] = h_in.T @ g
        grads_b[i] = g.sum(axis=0)
        if i > 0:
            g = g @ params.weights[i].T
    out = []
    for gw, gb in zip(grads_w, grads_b):
        out.extend([gw, gb])
    return out


def classifier_loss_grads(
    params: ClassifierParams,
    source_features,
    source_labels,
    aligned_target_features,
    weights: LossWeights,
    class_weights=None,
):
    """Classifier-refinement loss and its gradients w.r.t. weight and bias.

    Returns ``(composite, grad_weight, grad_bias)`` where the composite also
    carries the per-term values for tracing.
    """
    zs = check_matrix(source_features, "source_features")
    zt = check_matrix(aligned_target_features, "aligned_target_features")
    probs_s = classifier_forward(params, zs)
    probs_t = classifier_forward(params, zt)
    comp: CompositeLoss = classifier_loss(
        probs_s, source_labels, probs_t, weights, class_weights
    )
    grad_w = zs.T @ comp.grad_source + zt.T @ comp.grad_target
    grad_b = comp.grad_source.sum(axis=0) + comp.grad_target.sum(axis=0)
    return comp, grad_w, grad_b


class SgdMomentum:
    """SGD with classical momentum: v <- m v + g; p <- p - lr v."""

    def __init__(self, lr: float, momentum: float = 0.9):
        if lr < 0:
            raise ParameterError("learning rate must be non-negative")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity = None
        self.step_count = 0

    def step(self, params, grads):
        _check_step_shapes(params, grads)
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        self.step_count += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self._velocity[i] = self.momentum * self._velocity[i] + g
            out.append(p - self.lr * self._velocity[i])
        return out


class Adam:
    """Adam with the standard bias-corrected first and second moments."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr < 0:
            raise ParameterError("learning rate must be non-negative")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self._m = None
        self._v = None
        self.step_count = 0

    def step(self, params, grads):
        _check_step_shapes(params, grads)
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self._m[i] = self.beta1 * self._m[i] + (1 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1 - self.beta2) * (g * g)
            m_hat = self._m[i] / (1 - self.beta1 ** t)
            v_hat = self._v[i] / (1 - self.beta2 ** t)
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def make_optimizer(kind: str, lr: float, momentum: float = 0.9):
    if kind == "sgd":
        return SgdMomentum(lr, momentum)
    if kind == "adam":
        return Adam(lr)
    raise ParameterError(f"unknown optimizer kind {kind!r} (expected 'sgd' or 'adam')")


def backward_and_step(params, grads, optimizer):
    """Apply one optimizer update; returns the new parameter arrays."""
    return optimizer.step(params, grads)


def params_digest(arrays) -> str:
    """SHA-256 digest of a sequence of arrays (shape-aware, order-sensitive)."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _check_step_shapes(params, grads):
    if len(params) != len(grads):
        raise DimensionMismatchError("params and grads lists differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionMismatchError(
                f"gradient shape {g.shape} does not match parameter shape {p.shape}"
            )
