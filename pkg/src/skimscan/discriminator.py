"""Class discriminator: annotated-vs-unannotated clip classifier.

Architecture: a 1-wide, kernel-1 convolution (one shared scale and shift
applied elementwise) over the concatenated ``[feature; one_hot(label)]``
vector, adaptive average pooling down to ``pool_width`` values, and a
fully connected layer to two logits.  Class 1 means "annotated / keep".
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .core import (
    ConfigError,
    Dataset,
    DatasetMeta,
    FeatureRequiredError,
    LinearHead,
    UnsupportedDatasetError,
    VideoRecord,
)
from .infotheory import softmax
from .learning import CrossEntropyLoss, SgdConfig, TrainingDivergedError, sgd_step, sgd_train


def pool_boundaries(length: int, width: int) -> np.ndarray:
    """Segment edges ``round(i * length / width)`` for i = 0..width (half rounds up)."""
    if not 1 <= width <= length:
        raise ConfigError(f"pool width {width} must lie in [1, {length}]")
    i = np.arange(width + 1)
    return np.floor(i * length / width + 0.5).astype(int)


def pooling_matrix(length: int, width: int) -> np.ndarray:
    """(length, width) matrix whose column j averages segment j."""
    edges = pool_boundaries(length, width)
    P = np.zeros((length, width))
    for j in range(width):
        lo, hi = edges[j], edges[j + 1]
        P[lo:hi, j] = 1.0 / (hi - lo)
    return P


@dataclass(frozen=True, eq=False)
class DiscriminatorModel:
    num_classes: int
    feature_dim: int
    scale: float
    shift: float
    pool_width: int
    head_weight: np.ndarray  # (2, pool_width)
    head_bias: np.ndarray  # (2,)
    conditional: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "shift", float(self.shift))
        object.__setattr__(self, "head_weight", np.asarray(self.head_weight, dtype=float).reshape(2, self.pool_width))
        object.__setattr__(self, "head_bias", np.asarray(self.head_bias, dtype=float).reshape(2))
        if self.pool_width > self.input_dim:
            raise ConfigError(f"pool_width {self.pool_width} exceeds input length {self.input_dim}")

    @classmethod
    def init(cls, meta: DatasetMeta, pool_width: Optional[int] = None, conditional=True, seed=0, init_std=0.01):
        n = meta.feature_dim + meta.num_classes
        width = n if pool_width is None else pool_width
        rng = np.random.default_rng(seed)
        return cls(
            meta.num_classes, meta.feature_dim, 1.0, 0.0, width,
            rng.normal(0.0, init_std, size=(2, width)), np.zeros(2), conditional,
        )

    @property
    def input_dim(self) -> int:
        return self.feature_dim + self.num_classes

    @cached_property
    def _pool(self):
        return pooling_matrix(self.input_dim, self.pool_width)

    def forward(self, inputs):
        x = np.asarray(inputs, dtype=float)
        pooled = self.scale * (x @ self._pool) + self.shift
        return pooled @ self.head_weight.T + self.head_bias

    def gradients(self, inputs, grad_logits):
        x = np.atleast_2d(np.asarray(inputs, dtype=float))
        g = np.atleast_2d(grad_logits)
        px = x @ self._pool
        pooled = self.scale * px + self.shift
        d_pooled = g @ self.head_weight
        return {
            "scale": np.array(np.sum(d_pooled * px)),
            "shift": np.array(np.sum(d_pooled)),
            "head_weight": g.T @ pooled,
            "head_bias": g.sum(axis=0),
        }

    def parameters(self):
        return {
            "scale": np.array(self.scale),
            "shift": np.array(self.shift),
            "head_weight": self.head_weight,
            "head_bias": self.head_bias,
        }

    def with_parameters(self, params):
        return DiscriminatorModel(
            self.num_classes, self.feature_dim, float(params["scale"]), float(params["shift"]),
            self.pool_width, params["head_weight"], params["head_bias"], self.conditional,
        )

    def to_flat(self) -> list[float]:
        """``[scale, shift, pool_width, head_weight row-major..., head_bias...]``."""
        return [self.scale, self.shift, float(self.pool_width), *self.head_weight.reshape(-1), *self.head_bias]

    @classmethod
    def from_flat(cls, values, num_classes, feature_dim, conditional=True):
        values = [float(v) for v in values]
        width = int(values[2])
        expected = 3 + 2 * width + 2
        if len(values) != expected or width != values[2]:
            raise ConfigError(f"flat parameter list has {len(values)} values, expected {expected}")
        w = np.array(values[3:3 + 2 * width]).reshape(2, width)
        b = np.array(values[3 + 2 * width:])
        return cls(num_classes, feature_dim, values[0], values[1], width, w, b, conditional)


@dataclass(frozen=True)
class DiscriminatorReport:
    binary_accuracy: float
    positive_drop_rate: float
    negative_drop_rate: float


def build_input(clip, class_label: Optional[int], meta: DatasetMeta) -> np.ndarray:
    """``[feature; one_hot(class_label)]``; ``class_label=None`` gives an all-zero one-hot."""
    if clip.feature is None:
        raise FeatureRequiredError(f"clip {clip.index} has no feature")
    return build_inputs(clip.feature[None, :], class_label, meta.num_classes)[0]


def build_inputs(features, class_label: Optional[int], num_classes: int) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    onehot = np.zeros((len(features), num_classes))
    if class_label is not None:
        if not 0 <= class_label < num_classes:
            raise ConfigError(f"class label {class_label} outside [0, {num_classes})")
        onehot[:, class_label] = 1.0
    return np.hstack([features, onehot])


def forward(model: DiscriminatorModel, inputs):
    return model.forward(inputs)


def _video_inputs(model, video: VideoRecord, label):
    label = label if model.conditional else None
    return build_inputs(video.features, label, model.num_classes)


def keep_logits(model: DiscriminatorModel, video: VideoRecord, conditioning_label):
    """(L, 2) discriminator logits for every clip of ``video``."""
    return model.forward(_video_inputs(model, video, conditioning_label))


def split_videos(n_videos: int, seed: int, train_fraction=0.8):
    """Deterministic train/held-out split of video positions."""
    order = np.random.default_rng(seed).permutation(n_videos)
    if n_videos < 2:
        return order, order
    n_train = min(max(int(round(train_fraction * n_videos)), 1), n_videos - 1)
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def dense_label(video: VideoRecord, source="light") -> int:
    """Argmax of the mean clip distribution over all clips (ties -> lowest class)."""
    return int(np.argmax(softmax(video.logits(source)).mean(axis=0)))


def train_supervised(
    ds: Dataset,
    cfg: SgdConfig = SgdConfig(),
    pool_width: Optional[int] = None,
    conditional=True,
    source="light",
):
    """Fit a discriminator on annotated clips.

    Trains on 80% of the videos (seeded split) with ground-truth label
    conditioning and returns ``(model, held_out_report, loss_trace)``.
    """
    if not ds.has_annotations:
        raise UnsupportedDatasetError("supervised discriminator training needs annotation flags on every clip")
    train_idx, test_idx = split_videos(len(ds), cfg.seed)
    data = []
    for i in train_idx:
        v = ds.videos[i]
        X = build_inputs(v.features, v.label if conditional else None, ds.meta.num_classes)
        data.extend((x, int(a)) for x, a in zip(X, v.annotations))
    labels = {t for _, t in data}
    if len(labels) < 2:
        warnings.warn("discriminator training data holds a single class", RuntimeWarning, stacklevel=2)
    model = DiscriminatorModel.init(ds.meta, pool_width, conditional, seed=cfg.seed)
    model, trace = sgd_train(model, data, CrossEntropyLoss(), cfg)
    report = evaluate_discriminator(model, [ds.videos[i] for i in test_idx], source)
    return model, report, trace


def evaluate_discriminator(model: DiscriminatorModel, videos, source="light") -> DiscriminatorReport:
    """Binary accuracy under ground-truth conditioning; drop rates under inference conditioning.

    A clip is positive when its own argmax class equals the video label.
    """
    correct = total = 0
    pos = pos_drop = neg = neg_drop = 0
    for v in videos:
        logits = keep_logits(model, v, v.label)
        pred = np.argmax(logits, axis=1)
        if v.has_annotations:
            correct += int(np.sum(pred == v.annotations.astype(int)))
            total += len(v)
        kept = filter_clips(model, v, dense_label(v, source), set(v.indices.tolist()))
        is_pos = np.argmax(v.logits(source), axis=1) == v.label
        dropped = np.array([c.index not in kept for c in v.clips])
        pos += int(is_pos.sum())
        pos_drop += int((dropped & is_pos).sum())
        neg += int((~is_pos).sum())
        neg_drop += int((dropped & ~is_pos).sum())
    return DiscriminatorReport(
        binary_accuracy=correct / total if total else float("nan"),
        positive_drop_rate=pos_drop / pos if pos else 0.0,
        negative_drop_rate=neg_drop / neg if neg else 0.0,
    )


def filter_clips(model: DiscriminatorModel, video: VideoRecord, conditioning_label, candidates) -> set:
    """Keep candidates whose discriminator argmax is class 1.

    If nothing survives, the single candidate with the highest class-1 logit
    is kept.  ``candidates`` and the result are clip indices.
    """
    candidates = set(int(i) for i in candidates)
    if not candidates:
        return set()
    pos = [p for p, c in enumerate(video.clips) if c.index in candidates]
    sub = [video.clips[p] for p in pos]
    if any(c.feature is None for c in sub):
        raise FeatureRequiredError(f"video {video.video_id!r}: candidate clips need features")
    X = build_inputs(np.stack([c.feature for c in sub]), conditioning_label if model.conditional else None,
                     model.num_classes)
    logits = model.forward(X)
    keep = {c.index for c, l in zip(sub, logits) if np.argmax(l) == 1}
    if not keep:
        keep = {sub[int(np.argmax(logits[:, 1]))].index}
    return keep


# ---- transfer finetuning -------------------------------------------------


def transfer_loss_and_grads(model: DiscriminatorModel, head: LinearHead, video: VideoRecord):
    """Video-level cross-entropy through soft keep-gates, and its gradient.

    gate_i = softmax(disc(x_i))[1]; video feature = sum gate_i f_i / sum gate_i;
    loss = CE(head(video feature), label).  The head is frozen.
    """
    F = video.features
    X = _video_inputs(model, video, video.label)
    logits = model.forward(X)
    g = softmax(logits)[:, 1]
    G = g.sum()
    v = (g[:, None] * F).sum(axis=0) / G
    values, dz = CrossEntropyLoss()(head.forward(v)[None, :], [video.label])
    dv = dz[0] @ head.weights
    dg = (F - v) @ dv / G
    dl1 = dg * g * (1.0 - g)
    grad_logits = np.stack([-dl1, dl1], axis=1)
    return float(values[0]), model.gradients(X, grad_logits)


def transfer_finetune(model: DiscriminatorModel, ds: Dataset, head: Optional[LinearHead] = None,
                      cfg: SgdConfig = SgdConfig(learning_rate=0.001, epochs=80)):
    """Finetune the discriminator with video labels only (no annotation flags).

    Returns (finetuned model, per-epoch mean loss trace).  Minibatches are
    groups of ``cfg.batch_size`` videos; gradients are averaged over videos.
    """
    head = head if head is not None else ds.head
    if head is None:
        raise UnsupportedDatasetError("transfer finetuning needs a LinearHead on the dataset")
    if not all(v.has_features for v in ds.videos):
        raise FeatureRequiredError("transfer finetuning needs clip features")
    rng = np.random.default_rng(cfg.seed)
    n = len(ds)
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            acc = None
            batch_total = 0.0
            for i in idx:
                value, grads = transfer_loss_and_grads(model, head, ds.videos[i])
                batch_total += value
                acc = grads if acc is None else {k: acc[k] + grads[k] for k in acc}
            if not np.isfinite(batch_total):
                raise TrainingDivergedError(epoch, b)
            total += batch_total
            if cfg.learning_rate != 0:
                model = sgd_step(model, {k: g / len(idx) for k, g in acc.items()}, cfg.learning_rate)
        trace.append(total / n)
    return model, trace
