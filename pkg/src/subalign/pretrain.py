"""Target-aware pre-training of the feature extractor.

Jointly trains a small MLP extractor and a linear head on labeled source
data plus unlabeled target data (source cross-entropy + weighted target
entropy and class-balance terms), then freezes the extractor. Downstream
stages only ever see the extracted feature matrices, so pipelines that
start from externally computed features skip this module entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError
from .losses import LossWeights, tafe_loss
from . import saf
from .models import (
    ClassifierParams,
    ExtractorParams,
    classifier_forward,
    extractor_backward,
    extractor_forward,
    extractor_forward_cached,
    init_classifier,
    init_extractor,
    make_optimizer,
    params_digest,
)
from .numerics import make_rng, softmax_rows


@dataclass
class EpochRecord:
    epoch: int
    source_ce: float
    target_entropy: float
    class_balance: float
    total: float


@dataclass
class ExtractorModel:
    """Frozen extractor plus the trained head and its training trace."""

    extractor: ExtractorParams
    head: ClassifierParams
    class_count: int
    frozen: bool = False
    trace: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def digest(self) -> str:
        return params_digest(self.extractor.flat())


def pretrain_extractor(source, target, cfg) -> ExtractorModel:
    """Train the extractor and head, freeze the extractor, return the model.

    `source` must be labeled; `target` is used unlabeled. Batches for the
    two domains are drawn independently each step from seeded permutations.
    Emits one trace record per epoch with the averaged loss components.
    """
    if source.labels is None:
        raise ParameterError("source dataset must be labeled")
    if source.n == 0 or target.n == 0:
        raise ParameterError("source and target datasets must be non-empty")
    if source.dim != target.dim:
        raise ParameterError(
            f"source dim {source.dim} does not match target dim {target.dim}"
        )
    epochs = int(cfg.pretrain_epochs)
    if epochs < 1:
        raise ParameterError("pretrain_epochs must be at least 1")
    n_classes = source.class_count
    weights = LossWeights(
        lambda_c=cfg.lambda_c, lambda_cb=cfg.lambda_cb,
        gamma_c=cfg.gamma_c, gamma_cb=cfg.gamma_cb,
    )

    rng = make_rng(cfg.seed, 10)
    extractor = init_extractor(
        source.dim, cfg.hidden_widths, cfg.feature_dim, rng
    )
    head = init_classifier(cfg.feature_dim, n_classes, rng)
    optimizer = make_optimizer(cfg.pretrain_optimizer, cfg.pretrain_lr)
    batch = int(cfg.pretrain_batch_size)

    batch_rng = make_rng(cfg.seed, 11)
    src_sampler = _BatchSampler(source.n, batch, batch_rng)
    tgt_sampler = _BatchSampler(target.n, batch, batch_rng)
    steps_per_epoch = max(1, int(np.ceil(max(source.n, target.n) / min(batch, max(source.n, target.n)))))

    trace = []
    for epoch in range(epochs):
        for step in range(steps_per_epoch):
            idx_s = src_sampler.next()
            idx_t = tgt_sampler.next()
            xs, ys = source.features[idx_s], source.labels[idx_s]
            xt = target.features[idx_t]

            zs, cache_s = extractor_forward_cached(extractor, xs)
            zt, cache_t = extractor_forward_cached(extractor, xt)
            probs_s = softmax_rows(zs @ head.weight + head.bias)
            probs_t = softmax_rows(zt @ head.weight + head.bias)
            comp = tafe_loss(probs_s, ys, probs_t, weights)
            if not np.isfinite(comp.value):
                raise NumericalError(
                    f"non-finite pre-training loss at epoch {epoch}, step {step}"
                )

            grad_head_w = zs.T @ comp.grad_source + zt.T @ comp.grad_target
            grad_head_b = comp.grad_source.sum(axis=0) + comp.grad_target.sum(axis=0)
            grad_zs = comp.grad_source @ head.weight.T
            grad_zt = comp.grad_target @ head.weight.T
            grads_s = extractor_backward(extractor, cache_s, grad_zs)
            grads_t = extractor_backward(extractor, cache_t, grad_zt)
            grads_ext = [gs + gt for gs, gt in zip(grads_s, grads_t)]

            params = extractor.flat() + [head.weight, head.bias]
            grads = grads_ext + [grad_head_w, grad_head_b]
            updated = optimizer.step(params, grads)
            n_layers = len(extractor.weights)
            extractor = ExtractorParams(
                [updated[2 * i] for i in range(n_layers)],
                [updated[2 * i + 1] for i in range(n_layers)],
            )
            head = ClassifierParams(updated[-2], updated[-1])
        # End-of-epoch loss over the full datasets with the current
        # parameters, so the final row is exactly reproducible from the
        # saved model.
        epoch_comp = evaluate_pretrain_loss(extractor, head, source, target, weights)
        trace.append(EpochRecord(epoch, epoch_comp.source_ce,
                                 epoch_comp.target_entropy,
                                 epoch_comp.class_balance, epoch_comp.value))

    return ExtractorModel(
        extractor=extractor,
        head=head,
        class_count=n_classes,
        frozen=True,
        trace=trace,
        config={"seed": int(cfg.seed), "feature_dim": int(cfg.feature_dim)},
    )


def evaluate_pretrain_loss(extractor, head, source, target, weights):
    """Full-dataset pre-training loss at the given parameters."""
    zs = extractor_forward(extractor, source.features)
    zt = extractor_forward(extractor, target.features)
    probs_s = softmax_rows(zs @ head.weight + head.bias)
    probs_t = softmax_rows(zt @ head.weight + head.bias)
    return tafe_loss(probs_s, source.labels, probs_t, weights)


def extract_features(model: ExtractorModel, x) -> np.ndarray:
    """Deterministic features from the frozen extractor."""
    if not model.frozen:
        raise ParameterError("extractor must be frozen before feature extraction")
    return extractor_forward(model.extractor, x)


def predict_with_head(model: ExtractorModel, x) -> np.ndarray:
    """Class probabilities from the frozen extractor plus its trained head."""
    return classifier_forward(model.head, extract_features(model, x))


def save_extractor(model: ExtractorModel, path):
    """Serialise a frozen extractor model to a SAC1 checkpoint."""
    meta = {
        "kind": "extractor_model",
        "class_count": int(model.class_count),
        "frozen": bool(model.frozen),
        "n_layers": len(model.extractor.weights),
        "config": model.config,
        "extractor_digest": model.digest(),
    }
    arrays = {"head_weight": model.head.weight, "head_bias": model.head.bias}
    for i, (w, b) in enumerate(zip(model.extractor.weights, model.extractor.biases)):
        arrays[f"layer_{i}_weight"] = w
        arrays[f"layer_{i}_bias"] = b
    if model.trace:
        arrays["loss_trace"] = np.asarray(
            [(r.epoch, r.source_ce, r.target_entropy, r.class_balance, r.total)
             for r in model.trace]
        )
    saf.write_checkpoint(path, meta, arrays)


def load_extractor(path) -> ExtractorModel:
    """Load a SAC1 extractor checkpoint written by :func:`save_extractor`."""
    meta, arrays = saf.read_checkpoint(path)
    if meta.get("kind") != "extractor_model":
        raise ParameterError(f"checkpoint {path} is not an extractor model")
    n_layers = int(meta["n_layers"])
    extractor = ExtractorParams(
        [arrays[f"layer_{i}_weight"] for i in range(n_layers)],
        [arrays[f"layer_{i}_bias"] for i in range(n_layers)],
    )
    trace = [
        EpochRecord(int(row[0]), *[float(v) for v in row[1:]])
        for row in arrays.get("loss_trace", np.zeros((0, 5)))
    ]
    return ExtractorModel(
        extractor=extractor,
        head=ClassifierParams(arrays["head_weight"], arrays["head_bias"]),
        class_count=int(meta["class_count"]),
        frozen=bool(meta["frozen"]),
        trace=trace,
        config=meta.get("config", {}),
    )


class _BatchSampler:
    """Seeded permutation cursor; reshuffles when exhausted.

    Full-batch configurations (batch >= n) always return all rows in order,
    which keeps the degenerate supervised case exactly deterministic.
    """

    def __init__(self, n: int, batch: int, rng):
        self.n = n
        self.batch = min(batch, n)
        self.rng = rng
        self._order = None
        self._pos = 0

    def next(self) -> np.ndarray:
        if self.batch == self.n:
            return np.arange(self.n)
        if self._order is None or self._pos + self.batch > self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        out = self._order[self._pos : self._pos + self.batch]
        self._pos += self.batch
        return out
