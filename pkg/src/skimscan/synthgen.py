"""Seeded generator of synthetic untrimmed-video datasets.

Every clip is drawn from one of four archetypes:

* ``positive_confident``   low entropy, peaked at the video class, annotated
* ``positive_uninformative`` near-flat with a weak tilt to the video class, annotated
* ``negative_misleading``  low entropy, peaked at a distractor class, unannotated
* ``noise_uninformative``   near-flat random logits, unannotated

Heavy logits are the reference classifier view; light logits are a noisy
copy.  Features live in a fixed geometry shared by all datasets with the
same ``(num_classes, feature_dim, geometry_seed)``: orthogonal class centres,
one annotation direction, and a per-class context offset along it.  A
classifier trained on one preset therefore transfers to another.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import ClipRecord, ConfigError, CostParams, Dataset, DatasetMeta, LinearHead, VideoRecord

ARCHETYPES = ("positive_confident", "positive_uninformative", "negative_misleading", "noise_uninformative")

# logit noise scales and the weak tilt of uninformative positives
_CONFIDENT_BASE_STD = 0.5
_FLAT_STD = 0.3
_UNINFORMATIVE_TILT = 0.3
_UNINFORMATIVE_CONTENT = 0.25
_DISTRACTOR_POOL = 3


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    num_videos: int = 40
    num_classes: int = 10
    feature_dim: int = 16
    clips_per_video: tuple[int, int] = (30, 80)
    fractions: tuple[float, float, float, float] = (0.3, 0.3, 0.25, 0.15)
    confident_margin: float = 4.0
    light_noise_sigma: float = 0.5
    cluster_separation: float = 5.0
    misleading_classes: tuple[int, int] = (1, 1)
    context_shift: float = 1.0
    domain_shift: float = 0.0
    class_radius: float = 3.0
    strip_annotations: bool = False
    geometry_seed: int = 0
    cost: CostParams = CostParams()

    def validate(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        if self.num_videos < 1:
            raise ConfigError("num_videos must be >= 1")
        lo, hi = self.clips_per_video
        if lo < 1 or hi < lo:
            raise ConfigError("clips_per_video must satisfy 1 <= min <= max")
        f = np.asarray(self.fractions, dtype=float)
        if f.shape != (4,) or np.any(f < 0) or abs(f.sum() - 1.0) > 1e-9:
            raise ConfigError("fractions must be 4 nonnegative numbers summing to 1")
        mlo, mhi = self.misleading_classes
        if mlo < 1 or mhi < mlo or mhi > self.num_classes - 1:
            raise ConfigError("misleading_classes must lie in [1, num_classes - 1]")
        if self.confident_margin <= 0 or self.cluster_separation <= 0 or self.light_noise_sigma < 0:
            raise ConfigError("margin and separation must be positive, light noise nonnegative")


@dataclass(frozen=True, eq=False)
class Geometry:
    annotation_direction: np.ndarray  # (D,) unit
    class_centres: np.ndarray  # (C, D)
    context: np.ndarray  # (C,) in [-1, 1]


def geometry(num_classes: int, feature_dim: int, class_radius=3.0, geometry_seed=0) -> Geometry:
    rng = np.random.default_rng([geometry_seed, num_classes, feature_dim])
    D, C = feature_dim, num_classes
    Q, _ = np.linalg.qr(rng.normal(size=(D, D)))
    u = Q[:, 0]
    if D >= C + 1:
        centres = Q[:, 1:C + 1].T.copy()
    else:
        centres = rng.normal(size=(C, D))
        centres -= np.outer(centres @ u, u)
        norms = np.linalg.norm(centres, axis=1, keepdims=True)
        centres /= np.where(norms > 0, norms, 1.0)
    context = rng.uniform(-1.0, 1.0, size=C)
    return Geometry(u, class_radius * centres, context)


def centroid_head(geo: Geometry) -> LinearHead:
    """Nearest-centroid (equal-covariance Gaussian) classifier for the class clusters."""
    m = geo.class_centres
    return LinearHead(m.copy(), -0.5 * np.sum(m * m, axis=1))


def _video(cfg: GeneratorConfig, geo: Geometry, index: int) -> tuple[VideoRecord, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, index])
    C, D = cfg.num_classes, cfg.feature_dim
    c = int(rng.integers(C))
    L = int(rng.integers(cfg.clips_per_video[0], cfg.clips_per_video[1] + 1))
    n_mis = int(rng.integers(cfg.misleading_classes[0], cfg.misleading_classes[1] + 1))
    # confusable classes share scene context: distractors come from the classes nearest in context
    others = np.array([k for k in range(C) if k != c])
    near = others[np.argsort(np.abs(geo.context[others] - geo.context[c]), kind="stable")]
    pool = near[:max(n_mis, min(_DISTRACTOR_POOL, C - 1))]
    distractors = rng.choice(pool, size=n_mis, replace=False)

    arche = rng.choice(4, size=L, p=np.asarray(cfg.fractions, dtype=float))
    confident = rng.normal(0.0, _CONFIDENT_BASE_STD, size=(L, C))
    flat = rng.normal(0.0, _FLAT_STD, size=(L, C))
    extra = np.abs(rng.normal(0.0, 1.0, size=L))
    mis_class = rng.choice(distractors, size=L)
    feat_noise = rng.normal(0.0, 1.0, size=(L, D))
    light_noise = rng.normal(0.0, cfg.light_noise_sigma, size=(L, C)) if cfg.light_noise_sigma > 0 else np.zeros((L, C))

    apparent = np.where(arche == 2, mis_class, c)
    heavy = np.where((arche == 0)[:, None] | (arche == 2)[:, None], confident, flat)
    rows = np.arange(L)
    peaked = (arche == 0) | (arche == 2)
    masked = heavy.copy()
    masked[rows, apparent] = -np.inf
    top_other = masked.max(axis=1)
    # distractor clips are a little less peaked than true positives
    boost = np.where(arche == 0, extra, 0.5 * extra)
    heavy[rows[peaked], apparent[peaked]] = top_other[peaked] + cfg.confident_margin + boost[peaked]
    tilt = arche == 1
    heavy[rows[tilt], c] += _UNINFORMATIVE_TILT
    light = heavy + light_noise

    annotated = arche <= 1
    content = np.select([peaked, arche == 1], [1.0, _UNINFORMATIVE_CONTENT], 0.0)
    a = 0.5 * cfg.cluster_separation
    along = np.where(annotated, a, -a) + cfg.context_shift * geo.context[c] + cfg.domain_shift
    features = content[:, None] * geo.class_centres[apparent] + along[:, None] * geo.annotation_direction + feat_noise

    clips = [
        ClipRecord(
            index=i,
            light_logits=light[i],
            heavy_logits=heavy[i],
            feature=features[i],
            annotated=None if cfg.strip_annotations else bool(annotated[i]),
        )
        for i in range(L)
    ]
    return VideoRecord(f"v{index:05d}", c, clips), arche


def generate_with_archetypes(cfg: GeneratorConfig):
    """Like :func:`generate` but also returns per-video archetype codes (indices into ARCHETYPES)."""
    cfg.validate()
    geo = geometry(cfg.num_classes, cfg.feature_dim, cfg.class_radius, cfg.geometry_seed)
    videos, archetypes = [], []
    for i in range(cfg.num_videos):
        v, a = _video(cfg, geo, i)
        videos.append(v)
        archetypes.append(a)
    meta = DatasetMeta(
        cfg.num_classes, cfg.feature_dim, tuple(f"class_{k:03d}" for k in range(cfg.num_classes)), cfg.cost
    )
    return Dataset(meta, videos, centroid_head(geo)), archetypes


def generate(cfg: GeneratorConfig) -> Dataset:
    return generate_with_archetypes(cfg)[0]


def presets(seed: int = 0) -> dict[str, GeneratorConfig]:
    # the annotation axis is offset so its origin sits inside the unannotated side
    base = GeneratorConfig(seed=seed, domain_shift=1.0)
    return {
        "adversarial": base,
        "separable": dataclasses.replace(base, cluster_separation=6.0),
        "uniform_content": dataclasses.replace(base, fractions=(0.9, 0.1, 0.0, 0.0)),
        "diverse_content": dataclasses.replace(base, misleading_classes=(2, 3)),
        "transfer": dataclasses.replace(base, strip_annotations=True, domain_shift=4.0),
    }


def preset(name: str, seed: int = 0) -> GeneratorConfig:
    table = presets(seed)
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(table)}")
    return table[name]
