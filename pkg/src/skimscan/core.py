"""Domain data model shared by every other module.

Records are frozen dataclasses holding numpy arrays.  Logits (not
probabilities) are the stored currency; distributions are always derived
with :func:`skimscan.infotheory.softmax`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np


class SkimScanError(Exception):
    """Base class for all errors raised by the package."""

    kind = "error"


class InvalidInputError(SkimScanError, ValueError):
    kind = "invalid-input"


class ConfigError(SkimScanError, ValueError):
    kind = "config"


class MissingLogitsError(SkimScanError):
    kind = "missing-logits"


class FeatureRequiredError(SkimScanError):
    kind = "feature-required"


class UnsupportedDatasetError(SkimScanError):
    kind = "unsupported-dataset"


@dataclass(frozen=True)
class CostParams:
    """Per-clip backbone cost and per-video selection overhead, in GFLOPs."""

    light_gflops_per_clip: float = 0.36
    heavy_gflops_per_clip: float = 19.1
    selection_gflops_per_video: float = 0.012

    def __post_init__(self):
        for name in ("light_gflops_per_clip", "heavy_gflops_per_clip", "selection_gflops_per_video"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v!r}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class DatasetMeta:
    num_classes: int
    feature_dim: int
    class_names: Optional[tuple[str, ...]] = None
    cost: CostParams = field(default_factory=CostParams)

    def __post_init__(self):
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))


@dataclass(frozen=True, eq=False)
class LinearHead:
    """Affine map ``logits = weights @ x + bias`` with ``weights`` of shape (C, D).

    Also usable as a differentiable model in :mod:`skimscan.learning`.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    def forward(self, inputs):
        return np.asarray(inputs, dtype=float) @ self.weights.T + self.bias

    def gradients(self, inputs, grad_logits):
        # summed over the batch
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        grad_logits = np.atleast_2d(grad_logits)
        return {"weights": grad_logits.T @ inputs, "bias": grad_logits.sum(axis=0)}

    def parameters(self):
        return {"weights": self.weights, "bias": self.bias}

    def with_parameters(self, params):
        return LinearHead(params["weights"], params["bias"])


@dataclass(frozen=True, eq=False)
class ClipRecord:
    index: int
    light_logits: np.ndarray
    heavy_logits: Optional[np.ndarray] = None
    feature: Optional[np.ndarray] = None
    annotated: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "light_logits", np.asarray(self.light_logits, dtype=float))
        if self.heavy_logits is not None:
            object.__setattr__(self, "heavy_logits", np.asarray(self.heavy_logits, dtype=float))
        if self.feature is not None:
            object.__setattr__(self, "feature", np.asarray(self.feature, dtype=float))


@dataclass(frozen=True, eq=False)
class VideoRecord:
    video_id: str
    label: int
    clips: tuple[ClipRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "clips", tuple(self.clips))

    def __len__(self):
        return len(self.clips)

    @cached_property
    def indices(self) -> np.ndarray:
        return np.array([c.index for c in self.clips], dtype=int)

    @property
    def has_heavy(self) -> bool:
        return all(c.heavy_logits is not None for c in self.clips)

    @property
    def has_features(self) -> bool:
        return all(c.feature is not None for c in self.clips)

    @property
    def has_annotations(self) -> bool:
        return all(c.annotated is not None for c in self.clips)

    def logits(self, source: str = "light") -> np.ndarray:
        """Stacked (L, C) logits for ``source`` in {"light", "heavy"}."""
        if source == "light":
            return self._light
        if source == "heavy":
            if not self.has_heavy:
                raise MissingLogitsError(f"video {self.video_id!r} lacks heavy logits")
            return self._heavy
        raise ConfigError(f"unknown logit source {source!r}")

    @cached_property
    def _light(self):
        return np.stack([c.light_logits for c in self.clips])

    @cached_property
    def _heavy(self):
        return np.stack([c.heavy_logits for c in self.clips])

    @cached_property
    def features(self) -> np.ndarray:
        if not self.has_features:
            raise FeatureRequiredError(f"video {self.video_id!r} has clips without features")
        return np.stack([c.feature for c in self.clips])

    @cached_property
    def annotations(self) -> np.ndarray:
        if not self.has_annotations:
            raise UnsupportedDatasetError(f"video {self.video_id!r} has clips without annotation flags")
        return np.array([bool(c.annotated) for c in self.clips])


@dataclass(frozen=True, eq=False)
class Dataset:
    meta: DatasetMeta
    videos: tuple[VideoRecord, ...]
    head: Optional[LinearHead] = None

    def __post_init__(self):
        object.__setattr__(self, "videos", tuple(self.videos))

    def __len__(self):
        return len(self.videos)

    @property
    def has_heavy(self):
        return all(v.has_heavy for v in self.videos)

    @property
    def has_annotations(self):
        return all(v.has_annotations for v in self.videos)

    @property
    def total_clips(self):
        return sum(len(v) for v in self.videos)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    video_id: str
    survivors_after_entropy: frozenset
    survivors_after_discriminator: frozenset
    selected: tuple[int, ...]
    video_distribution: np.ndarray
    predicted_label: int
    clips_evaluated_heavy: int
    gflops_backbone: float
    gflops_selection: float
    strategy: str = "skim_scan"

    def __post_init__(self):
        object.__setattr__(self, "survivors_after_entropy", frozenset(int(i) for i in self.survivors_after_entropy))
        object.__setattr__(
            self, "survivors_after_discriminator", frozenset(int(i) for i in self.survivors_after_discriminator)
        )
        object.__setattr__(self, "selected", tuple(int(i) for i in self.selected))
        object.__setattr__(self, "video_distribution", np.asarray(self.video_distribution, dtype=float))


def _finite(a) -> bool:
    return bool(np.all(np.isfinite(a)))


def validate_dataset(ds: Dataset) -> list[str]:
    """Return human-readable descriptions of every broken invariant (empty if valid)."""
    out = []
    meta = ds.meta
    C, D = meta.num_classes, meta.feature_dim
    if not isinstance(C, (int, np.integer)) or C < 2:
        out.append(f"meta: num_classes must be an integer >= 2, got {C!r}")
    if not isinstance(D, (int, np.integer)) or D < 1:
        out.append(f"meta: feature_dim must be an integer >= 1, got {D!r}")
    if meta.class_names is not None and len(meta.class_names) != C:
        out.append(f"meta: class_names has {len(meta.class_names)} entries, expected {C}")
    if ds.head is not None:
        w, b = ds.head.weights, ds.head.bias
        if w.shape != (C, D) or b.shape != (C,):
            out.append(f"head: weights {w.shape} / bias {b.shape} do not match (C={C}, D={D})")
        elif not (_finite(w) and _finite(b)):
            out.append("head: non-finite entries")
    for v in ds.videos:
        vid = v.video_id
        if not (0 <= v.label < C):
            out.append(f"video {vid}: label {v.label} outside [0, {C})")
        if not v.clips:
            out.append(f"video {vid}: has no clips")
        prev = None
        for c in v.clips:
            where = f"video {vid} clip {c.index}"
            if c.index < 0:
                out.append(f"{where}: negative index")
            if prev is not None and c.index <= prev:
                out.append(f"{where}: index not strictly increasing (previous {prev})")
            prev = c.index
            if c.light_logits.shape != (C,):
                out.append(f"{where}: light_logits length {c.light_logits.size}, expected {C}")
            elif not _finite(c.light_logits):
                out.append(f"{where}: light_logits non-finite")
            if c.heavy_logits is not None:
                if c.heavy_logits.shape != (C,):
                    out.append(f"{where}: heavy_logits length {c.heavy_logits.size}, expected {C}")
                elif not _finite(c.heavy_logits):
                    out.append(f"{where}: heavy_logits non-finite")
            if c.feature is not None:
                if c.feature.shape != (D,):
                    out.append(f"{where}: feature length {c.feature.size}, expected {D}")
                elif not _finite(c.feature):
                    out.append(f"{where}: feature non-finite")
    return out


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Structural equality with exact float comparison."""

    def arr_eq(x, y):
        if x is None or y is None:
            return x is None and y is None
        return x.shape == y.shape and bool(np.array_equal(x, y))

    if a.meta != b.meta or len(a.videos) != len(b.videos):
        return False
    if (a.head is None) != (b.head is None):
        return False
    if a.head is not None and not (arr_eq(a.head.weights, b.head.weights) and arr_eq(a.head.bias, b.head.bias)):
        return False
    for va, vb in zip(a.videos, b.videos):
        if (va.video_id, va.label, len(va.clips)) != (vb.video_id, vb.label, len(vb.clips)):
            return False
        for ca, cb in zip(va.clips, vb.clips):
            if ca.index != cb.index or ca.annotated != cb.annotated:
                return False
            if not (
                arr_eq(ca.light_logits, cb.light_logits)
                and arr_eq(ca.heavy_logits, cb.heavy_logits)
                and arr_eq(ca.feature, cb.feature)
            ):
                return False
    return True
