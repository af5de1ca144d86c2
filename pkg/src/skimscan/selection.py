"""Skim-Scan clip selection.

Stages, each optional: entropy skimming, class-discriminator filtering and
greedy divergence scanning; followed by aggregation of the selected clips.
Slim-Scan runs the stages on light logits and aggregates heavy logits of the
selected clips only.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import infotheory as it
from .core import ConfigError, Dataset, DatasetMeta, SelectionResult, UnsupportedDatasetError, VideoRecord
from .costs import cost
from .discriminator import DiscriminatorModel, dense_label, filter_clips

ENTROPY_SCALES = ("normalized", "raw_nats")
DIVERGENCE_NAMES = {"js": "js", "kl": "kl", "wasserstein1": "wasserstein1", "w1": "wasserstein1"}
DISCRIMINATOR_MODES = ("conditional", "plain", "oracle", "none")
LOGIT_SOURCES = ("light", "heavy", "slim_scan")
STAGE_ORDERS = ("entropy_first", "discriminator_first")

# stop threshold presets: the method description and the experiments disagree
JS_THRESHOLD_METHOD = 0.4
JS_THRESHOLD_EXPERIMENTS = 0.5
DEFAULT_RETAIN = 0.6


@dataclass(frozen=True)
class SkimConfig:
    entropy_threshold: float = 1.0
    entropy_scale: str = "normalized"
    calibration_quantile: Optional[float] = DEFAULT_RETAIN

    def __post_init__(self):
        if self.entropy_scale not in ENTROPY_SCALES:
            raise ConfigError(f"entropy_scale must be one of {ENTROPY_SCALES}")
        if self.entropy_threshold < 0:
            raise ConfigError("entropy threshold must be >= 0")
        if self.entropy_scale == "normalized" and self.entropy_threshold > 1:
            raise ConfigError("normalized entropy threshold must be <= 1")
        q = self.calibration_quantile
        if q is not None and not 0 < q < 1:
            raise ConfigError("calibration_quantile must lie in (0, 1)")


@dataclass(frozen=True)
class ScanConfig:
    divergence: str = "js"
    stop_threshold: float = JS_THRESHOLD_EXPERIMENTS
    budget_cap: Optional[int] = None

    def __post_init__(self):
        if self.divergence not in DIVERGENCE_NAMES:
            raise ConfigError(f"unknown divergence {self.divergence!r}")
        object.__setattr__(self, "divergence", DIVERGENCE_NAMES[self.divergence])
        if self.stop_threshold < 0:
            raise ConfigError("stop threshold must be >= 0")
        if self.budget_cap is not None and self.budget_cap < 1:
            raise ConfigError("budget_cap must be a positive integer")


@dataclass(frozen=True)
class PipelineConfig:
    skim: SkimConfig = field(default_factory=SkimConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    use_entropy: bool = True
    use_discriminator: bool = True
    use_scan: bool = True
    discriminator_mode: str = "conditional"
    logit_source: str = "heavy"
    stage_order: str = "entropy_first"

    def __post_init__(self):
        if self.discriminator_mode not in DISCRIMINATOR_MODES:
            raise ConfigError(f"discriminator_mode must be one of {DISCRIMINATOR_MODES}")
        if self.logit_source not in LOGIT_SOURCES:
            raise ConfigError(f"logit_source must be one of {LOGIT_SOURCES}")
        if self.stage_order not in STAGE_ORDERS:
            raise ConfigError(f"stage_order must be one of {STAGE_ORDERS}")

    @property
    def stats_source(self) -> str:
        """Logits the skim/scan statistics are computed from."""
        return "light" if self.logit_source == "slim_scan" else self.logit_source

    @property
    def final_source(self) -> str:
        return "heavy" if self.logit_source == "slim_scan" else self.logit_source

    @property
    def discriminator_active(self) -> bool:
        return self.use_discriminator and self.discriminator_mode != "none"

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def clip_distributions(video: VideoRecord, source: str = "light") -> np.ndarray:
    """(L, C) softmax of each clip's logits from ``source``."""
    return it.softmax(video.logits(source))


def _entropies(dists, scale):
    return it.normalized_entropy(dists) if scale == "normalized" else it.entropy(dists)


def skim_entropy(dists, cfg: SkimConfig) -> set:
    """Positions i with entropy below the threshold; falls back to the min-entropy clip."""
    dists = np.atleast_2d(dists)
    if len(dists) == 0:
        raise ConfigError("skim_entropy needs at least one distribution")
    h = _entropies(dists, cfg.entropy_scale)
    keep = set(np.flatnonzero(h < cfg.entropy_threshold).tolist())
    if not keep:
        keep = {int(np.argmin(h))}
    return keep


def calibrate_entropy_threshold(ds: Dataset, retain_fraction: float = DEFAULT_RETAIN, scale="normalized",
                                source="light") -> float:
    """Linear-interpolation ``retain_fraction`` quantile of pooled clip entropies.

    When the rounded retained count is the whole pool, the threshold is moved
    just above the maximum so nothing is dropped.
    """
    if not 0 < retain_fraction < 1:
        raise ConfigError("retain_fraction must lie in (0, 1)")
    if len(ds) == 0:
        raise ConfigError("cannot calibrate on an empty dataset")
    h = np.concatenate([_entropies(clip_distributions(v, source), scale) for v in ds.videos])
    threshold = float(np.quantile(h, retain_fraction, method="linear"))
    if round(retain_fraction * len(h)) >= len(h):
        threshold = float(np.nextafter(h.max(), np.inf))
    if scale == "normalized":
        threshold = min(threshold, 1.0)
    return threshold


def scan_aggregate(selected_logits) -> np.ndarray:
    """Softmax of the mean logit vector of the selected clips."""
    z = np.atleast_2d(np.asarray(selected_logits, dtype=float))
    if len(z) == 0:
        raise ConfigError("scan_aggregate needs at least one clip")
    return it.softmax(z.mean(axis=0))


def scan(candidates, logits, dists, cfg: ScanConfig) -> list[int]:
    """Greedy divergence scan over candidate positions.

    Seeds with the minimum-entropy candidate, then repeatedly adds the
    candidate whose distribution diverges most from the aggregate of the
    selected set, until the largest divergence falls below the stop
    threshold, candidates run out, or the budget is met.  Ties go to the
    lowest position.  Returns positions in selection order.
    """
    cand = sorted(int(i) for i in candidates)
    if not cand:
        raise ConfigError("scan needs at least one candidate")
    logits = np.asarray(logits, dtype=float)
    dists = np.asarray(dists, dtype=float)
    divergence = it.DIVERGENCES[cfg.divergence]
    cap = cfg.budget_cap if cfg.budget_cap is not None else len(cand)

    h = it.entropy(dists[cand])
    first = cand[int(np.argmin(h))]
    selected = [first]
    remaining = [i for i in cand if i != first]
    while remaining and len(selected) < cap:
        agg = scan_aggregate(logits[selected])
        d = divergence(agg, dists[remaining])
        j = int(np.argmax(d))
        if d[j] < cfg.stop_threshold:
            break
        pick = remaining.pop(j)
        selected.append(pick)
    return selected


def _oracle_filter(video, candidates, dists):
    if not video.has_annotations:
        raise UnsupportedDatasetError("oracle discriminator mode needs annotation flags")
    keep = {p for p in candidates if video.clips[p].annotated}
    if not keep:
        cand = sorted(candidates)
        keep = {cand[int(np.argmin(it.entropy(dists[cand])))]}
    return keep


def _discriminator_stage(video, cfg, disc, candidates, dists):
    if cfg.discriminator_mode == "oracle":
        return _oracle_filter(video, candidates, dists)
    if disc is None:
        raise ConfigError("discriminator stage enabled but no discriminator model given")
    label = dense_label(video, cfg.stats_source) if cfg.discriminator_mode == "conditional" else None
    model = disc
    if cfg.discriminator_mode == "plain" and disc.conditional:
        model = dataclasses.replace(disc, conditional=False)
    by_index = {c.index: p for p, c in enumerate(video.clips)}
    kept = filter_clips(model, video, label, {video.clips[p].index for p in candidates})
    return {by_index[i] for i in kept}


def run_pipeline(video: VideoRecord, cfg: PipelineConfig, disc: Optional[DiscriminatorModel],
                 meta: DatasetMeta) -> SelectionResult:
    """Run the configured stages on one video.

    ``cfg.skim.entropy_threshold`` is used as given; resolve calibration
    first with :func:`resolve_config`.
    """
    logits = video.logits(cfg.stats_source)
    dists = it.softmax(logits)
    everything = set(range(len(video)))

    def entropy_stage(cands):
        if not cfg.use_entropy:
            return cands
        sub = sorted(cands)
        kept = skim_entropy(dists[sub], cfg.skim)
        return {sub[i] for i in kept}

    def disc_stage(cands):
        if not cfg.discriminator_active:
            return cands
        return _discriminator_stage(video, cfg, disc, cands, dists)

    if cfg.stage_order == "entropy_first":
        after_entropy = entropy_stage(everything)
        after_disc = disc_stage(after_entropy)
        last = after_disc
        assert after_disc <= after_entropy
    else:
        after_disc = disc_stage(everything)
        after_entropy = entropy_stage(after_disc)
        last = after_entropy
        assert after_entropy <= after_disc

    if cfg.use_scan:
        selected = scan(last, logits, dists, cfg.scan)
    else:
        selected = sorted(last)

    final = it.softmax(video.logits(cfg.final_source)[selected]).mean(axis=0)
    assert set(selected) <= last
    idx = video.indices
    # with every stage off the pipeline is plain dense aggregation and pays no selection overhead
    active = cfg.use_entropy or cfg.discriminator_active or cfg.use_scan
    kind = "skim_scan" if active or cfg.logit_source == "slim_scan" else "dense"
    backbone, selection_cost = cost(kind, meta.cost, len(video), len(selected), cfg.logit_source)
    n_heavy = len(selected) if cfg.logit_source == "slim_scan" else (len(video) if cfg.logit_source == "heavy" else 0)
    return SelectionResult(
        video_id=video.video_id,
        survivors_after_entropy=frozenset(int(idx[p]) for p in after_entropy),
        survivors_after_discriminator=frozenset(int(idx[p]) for p in after_disc),
        selected=tuple(int(idx[p]) for p in selected),
        video_distribution=final,
        predicted_label=int(np.argmax(final)),
        clips_evaluated_heavy=n_heavy,
        gflops_backbone=backbone,
        gflops_selection=selection_cost,
        strategy="skim_scan",
    )


def resolve_config(ds: Dataset, cfg: PipelineConfig) -> PipelineConfig:
    """Turn a calibration quantile into a concrete entropy threshold for ``ds``."""
    q = cfg.skim.calibration_quantile
    if q is None:
        return cfg
    thr = calibrate_entropy_threshold(ds, q, cfg.skim.entropy_scale, cfg.stats_source)
    return cfg.replace(skim=dataclasses.replace(cfg.skim, entropy_threshold=thr, calibration_quantile=None))


def run_dataset(ds: Dataset, cfg: PipelineConfig, disc: Optional[DiscriminatorModel] = None) -> list[SelectionResult]:
    cfg = resolve_config(ds, cfg)
    return [run_pipeline(v, cfg, disc, ds.meta) for v in ds.videos]
