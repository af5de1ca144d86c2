"""Baselines, evaluation metrics and experiment drivers.

Every driver returns plain data (dataclasses or lists of dict rows) that the
CLI writes as CSV and, where useful, renders as figures.
"""

from __future__ import annotations

import dataclasses
import time
import zlib
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Optional, Sequence

import numpy as np

from . import infotheory as it
from .core import ConfigError, Dataset, SelectionResult, SkimScanError, VideoRecord
from .costs import cost
from .discriminator import DiscriminatorModel
from .selection import (
    DIVERGENCE_NAMES,
    PipelineConfig,
    ScanConfig,
    SkimConfig,
    clip_distributions,
    resolve_config,
    run_pipeline,
)

STRATEGY_KINDS = ("dense", "random_n", "uniform_n", "top_confidence_n", "skim_scan")


class IncompleteResultsError(SkimScanError):
    kind = "incomplete-results"


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    n: Optional[int] = None
    pipeline: Optional[PipelineConfig] = None
    seed: int = 0
    source: str = "heavy"

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"unknown strategy kind {self.kind!r}")
        if self.kind in ("random_n", "uniform_n", "top_confidence_n") and (self.n is None or self.n < 1):
            raise ConfigError(f"{self.kind} needs a positive n")

    @property
    def name(self) -> str:
        if self.kind == "skim_scan":
            cap = self.pipeline.scan.budget_cap if self.pipeline else None
            return "skim_scan" if cap is None else f"skim_scan_{cap}"
        if self.n is not None:
            return f"{self.kind[:-2]}_{self.n}"
        return self.kind


def parse_strategy(token: str, pipeline: Optional[PipelineConfig] = None, seed=0, source="heavy") -> StrategySpec:
    """``dense``, ``random_10``, ``uniform_10``, ``top_confidence_10``, ``skim_scan`` or ``skim_scan_10``."""
    token = token.strip()
    if token == "dense":
        return StrategySpec("dense", seed=seed, source=source)
    base = pipeline or PipelineConfig()
    if token == "skim_scan":
        return StrategySpec("skim_scan", pipeline=base, seed=seed)
    head, _, tail = token.rpartition("_")
    if not tail.isdigit() or not head:
        raise ConfigError(f"cannot parse strategy {token!r}")
    n = int(tail)
    if head == "skim_scan":
        return StrategySpec("skim_scan", pipeline=base.replace(scan=dataclasses.replace(base.scan, budget_cap=n)),
                            seed=seed)
    kind = f"{head}_n"
    if kind not in STRATEGY_KINDS:
        raise ConfigError(f"cannot parse strategy {token!r}")
    return StrategySpec(kind, n=n, seed=seed, source=source)


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(int)


def select_baseline(video: VideoRecord, spec: StrategySpec) -> list[int]:
    """Clip indices chosen by a fixed baseline."""
    L = len(video)
    idx = video.indices
    if spec.kind == "dense":
        return idx.tolist()
    n = spec.n
    if n >= L:
        return idx.tolist()
    if spec.kind == "random_n":
        rng = np.random.default_rng([spec.seed, zlib.crc32(video.video_id.encode("utf-8"))])
        pos = np.sort(rng.choice(L, size=n, replace=False))
    elif spec.kind == "uniform_n":
        pos = np.array([(L - 1) // 2]) if n == 1 else _round_half_up(np.arange(n) * (L - 1) / (n - 1))
    elif spec.kind == "top_confidence_n":
        src = "light" if spec.source == "slim_scan" else spec.source
        conf = clip_distributions(video, src).max(axis=1)
        # stable sort on -conf keeps the lowest index first among ties
        pos = np.sort(np.argsort(-conf, kind="stable")[:n])
    else:
        raise ConfigError(f"{spec.kind} is not a baseline")
    return idx[pos].tolist()


def baseline_result(video: VideoRecord, spec: StrategySpec, ds_meta) -> SelectionResult:
    chosen = select_baseline(video, spec)
    where = {c.index: p for p, c in enumerate(video.clips)}
    pos = [where[i] for i in chosen]
    final_src = "heavy" if spec.source == "slim_scan" else spec.source
    dist = clip_distributions(video, final_src)[pos].mean(axis=0)
    backbone, selection = cost(spec.kind, ds_meta.cost, len(video), len(chosen), spec.source)
    if spec.source == "slim_scan":
        heavy = len(chosen)
    elif spec.source == "heavy":
        heavy = len(video) if spec.kind in ("dense", "top_confidence_n") else len(chosen)
    else:
        heavy = 0
    every = frozenset(video.indices.tolist())
    return SelectionResult(
        video_id=video.video_id,
        survivors_after_entropy=every,
        survivors_after_discriminator=every,
        selected=tuple(chosen),
        video_distribution=dist,
        predicted_label=int(np.argmax(dist)),
        clips_evaluated_heavy=heavy,
        gflops_backbone=backbone,
        gflops_selection=selection,
        strategy=spec.name,
    )


def run_strategy(ds: Dataset, spec: StrategySpec, disc: Optional[DiscriminatorModel] = None) -> list[SelectionResult]:
    if spec.kind == "skim_scan":
        cfg = resolve_config(ds, spec.pipeline or PipelineConfig())
        return [run_pipeline(v, cfg, disc, ds.meta) for v in ds.videos]
    return [baseline_result(v, spec, ds.meta) for v in ds.videos]


# ---- metrics -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EvalReport:
    accuracy: float
    map: float
    mean_clips: float
    mean_backbone_gflops: float
    mean_selection_gflops: float
    per_class_accuracy: np.ndarray
    per_class_mean_clips: np.ndarray

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "map": self.map,
            "mean_clips": self.mean_clips,
            "mean_backbone_gflops": self.mean_backbone_gflops,
            "mean_selection_gflops": self.mean_selection_gflops,
        }

    def same_as(self, other: "EvalReport") -> bool:
        return self.summary() == other.summary() and all(
            np.array_equal(a, b, equal_nan=True)
            for a, b in [(self.per_class_accuracy, other.per_class_accuracy),
                         (self.per_class_mean_clips, other.per_class_mean_clips)]
        )


def average_precision(scores, is_positive, tie_keys=None) -> float:
    """Mean of precision@rank over the ranks holding positives.

    Items are ranked by descending score; ties are broken by ascending
    ``tie_keys`` (defaults to input order).
    """
    scores = np.asarray(scores, dtype=float)
    is_positive = np.asarray(is_positive, dtype=bool)
    keys = list(range(len(scores))) if tie_keys is None else list(tie_keys)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], keys[i]))
    hits = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if is_positive[i]:
            hits += 1
            precisions.append(hits / rank)
    return float(np.mean(precisions)) if precisions else float("nan")


def mean_average_precision(ds: Dataset, results: Sequence[SelectionResult]) -> float:
    labels = np.array([v.label for v in ds.videos])
    scores = np.stack([r.video_distribution for r in results])
    ids = [v.video_id for v in ds.videos]
    aps = [average_precision(scores[:, k], labels == k, ids) for k in range(ds.meta.num_classes) if np.any(labels == k)]
    return float(np.mean(aps))


def _align(ds: Dataset, results) -> list[SelectionResult]:
    by_id = {r.video_id: r for r in results}
    missing = [v.video_id for v in ds.videos if v.video_id not in by_id]
    if missing:
        raise IncompleteResultsError(f"{len(missing)} of {len(ds)} videos have no result (first: {missing[0]})")
    return [by_id[v.video_id] for v in ds.videos]


def evaluate(ds: Dataset, results: Sequence[SelectionResult]) -> EvalReport:
    results = _align(ds, results)
    C = ds.meta.num_classes
    labels = np.array([v.label for v in ds.videos])
    correct = np.array([r.predicted_label == v.label for r, v in zip(results, ds.videos)])
    clips = np.array([len(r.selected) for r in results], dtype=float)
    per_acc = np.full(C, np.nan)
    per_clips = np.full(C, np.nan)
    for k in range(C):
        m = labels == k
        if m.any():
            per_acc[k] = correct[m].mean()
            per_clips[k] = clips[m].mean()
    return EvalReport(
        accuracy=float(correct.mean()),
        map=mean_average_precision(ds, results),
        mean_clips=float(clips.mean()),
        mean_backbone_gflops=float(np.mean([r.gflops_backbone for r in results])),
        mean_selection_gflops=float(np.mean([r.gflops_selection for r in results])),
        per_class_accuracy=per_acc,
        per_class_mean_clips=per_clips,
    )


def report_row(name: str, report: EvalReport, **extra) -> dict:
    return {"name": name, **extra, **report.summary()}


# ---- experiment drivers ---------------------------------------------------

STAGE_NAMES = {
    (False, False, False): "Dense",
    (True, False, False): "Entropy Only",
    (False, True, False): "C.D. Only",
    (False, False, True): "JS Only",
    (True, False, True): "Entropy + JS",
    (True, True, False): "Entropy + C.D.",
    (False, True, True): "C.D. + JS",
    (True, True, True): "Entropy + C.D. + JS",
}


def ablation_matrix(ds: Dataset, base: PipelineConfig, disc: Optional[DiscriminatorModel]) -> dict:
    """EvalReport for all 8 stage subsets, keyed by (entropy, discriminator, scan)."""
    base = resolve_config(ds, base)
    out = {}
    for use_e, use_d, use_s in product((False, True), repeat=3):
        cfg = base.replace(use_entropy=use_e, use_discriminator=use_d, use_scan=use_s)
        if use_d and base.discriminator_mode == "none":
            cfg = cfg.replace(discriminator_mode="conditional")
        results = [run_pipeline(v, cfg, disc, ds.meta) for v in ds.videos]
        out[(use_e, use_d, use_s)] = evaluate(ds, results)
    return out


def ablation_rows(table: Mapping) -> list[dict]:
    rows = []
    for key in sorted(table, key=lambda k: (sum(k), k)):
        e, d, s = key
        rows.append(report_row(STAGE_NAMES[key], table[key], entropy=int(e), discriminator=int(d), scan=int(s)))
    return rows


def threshold_sweep(ds: Dataset, entropy_quantiles: Sequence[float], js_thresholds: Sequence[float],
                    rest: PipelineConfig, disc: Optional[DiscriminatorModel] = None) -> list[dict]:
    """Accuracy and mean clip count over the (retain quantile x stop threshold) grid."""
    if not entropy_quantiles or not js_thresholds:
        raise ConfigError("sweep grids must be nonempty")
    rows = []
    for q in entropy_quantiles:
        skim = dataclasses.replace(rest.skim, calibration_quantile=q)
        resolved = resolve_config(ds, rest.replace(skim=skim))
        for t in js_thresholds:
            cfg = resolved.replace(scan=dataclasses.replace(rest.scan, stop_threshold=t))
            rep = evaluate(ds, [run_pipeline(v, cfg, disc, ds.meta) for v in ds.videos])
            rows.append({
                "entropy_quantile": q,
                "entropy_threshold": resolved.skim.entropy_threshold,
                "js_threshold": t,
                "accuracy": rep.accuracy,
                "map": rep.map,
                "mean_clips": rep.mean_clips,
            })
    return rows


def sweep_grid(rows: Sequence[dict], value: str):
    """Reshape sweep rows into (quantiles, thresholds, matrix[q, t])."""
    qs = sorted({r["entropy_quantile"] for r in rows})
    ts = sorted({r["js_threshold"] for r in rows})
    grid = np.full((len(qs), len(ts)), np.nan)
    for r in rows:
        grid[qs.index(r["entropy_quantile"]), ts.index(r["js_threshold"])] = r[value]
    return qs, ts, grid


METRICS = ("js", "kl", "wasserstein1")


def metric_comparison(ds: Dataset, cfg: PipelineConfig, disc: Optional[DiscriminatorModel],
                      metrics: Sequence[str] = METRICS, repeats: int = 3) -> list[dict]:
    """Same pipeline with only the divergence swapped; best-of-``repeats`` wall time."""
    cfg = resolve_config(ds, cfg)
    rows = []
    for m in metrics:
        run_cfg = cfg.replace(scan=dataclasses.replace(cfg.scan, divergence=DIVERGENCE_NAMES[m]))
        best = float("inf")
        results = None
        for _ in range(max(repeats, 1)):
            t0 = time.perf_counter()
            results = [run_pipeline(v, run_cfg, disc, ds.meta) for v in ds.videos]
            best = min(best, time.perf_counter() - t0)
        rows.append(report_row(DIVERGENCE_NAMES[m], evaluate(ds, results), wall_time_s=best))
    return rows


def discriminator_variants(ds: Dataset, models: Mapping[str, Optional[DiscriminatorModel]],
                           base: Optional[PipelineConfig] = None) -> dict:
    """Dense aggregation with no / plain / conditional / oracle discriminator.

    ``models`` maps "conditional" (and optionally "plain") to trained
    discriminators.  Without a separate plain model, the conditional one is
    run with its one-hot input zeroed.
    """
    base = base or PipelineConfig()
    models = dict(models)
    models.setdefault("plain", models.get("conditional"))
    dense = base.replace(use_entropy=False, use_scan=False)
    out = {}
    for mode in ("none", "plain", "conditional", "oracle"):
        if mode in ("plain", "conditional") and models.get(mode) is None:
            continue
        if mode == "oracle" and not ds.has_annotations:
            continue
        cfg = dense.replace(use_discriminator=mode != "none", discriminator_mode=mode)
        out[mode] = evaluate(ds, [run_pipeline(v, cfg, models.get(mode), ds.meta) for v in ds.videos])
    return out


def compare(ds: Dataset, specs: Sequence[StrategySpec], disc: Optional[DiscriminatorModel] = None) -> list[dict]:
    return [report_row(s.name, evaluate(ds, run_strategy(ds, s, disc))) for s in specs]


# ---- diagnostics -----------------------------------------------------------


def clip_positive_mask(video: VideoRecord, source="heavy") -> np.ndarray:
    """A clip is positive when its own argmax class equals the video label."""
    return np.argmax(video.logits(source), axis=1) == video.label


def entropy_histogram(ds: Dataset, source="heavy", scale="normalized", bins=20) -> list[dict]:
    hi = 1.0 if scale == "normalized" else float(np.log(ds.meta.num_classes))
    edges = hi * (np.arange(bins + 1) / bins)
    pos_h, neg_h = [], []
    for v in ds.videos:
        d = clip_distributions(v, source)
        h = it.normalized_entropy(d) if scale == "normalized" else it.entropy(d)
        m = clip_positive_mask(v, source)
        pos_h.append(h[m])
        neg_h.append(h[~m])
    pos_counts, _ = np.histogram(np.concatenate(pos_h), bins=edges)
    neg_counts, _ = np.histogram(np.concatenate(neg_h), bins=edges)
    return [
        {"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]), "positive": int(pos_counts[i]),
         "negative": int(neg_counts[i])}
        for i in range(bins)
    ]


def per_class_clips(ds: Dataset, results: Sequence[SelectionResult]) -> list[dict]:
    results = _align(ds, results)
    names = ds.meta.class_names or tuple(str(k) for k in range(ds.meta.num_classes))
    rows = []
    for k in range(ds.meta.num_classes):
        n = [len(r.selected) for r, v in zip(results, ds.videos) if v.label == k]
        if n:
            rows.append({"class": k, "class_name": names[k], "videos": len(n), "mean_selected": float(np.mean(n))})
    rows.sort(key=lambda r: (-r["mean_selected"], r["class"]))
    return rows


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or x.std() == 0 or y.std() == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def positive_fraction_vs_correct(ds: Dataset, results: Sequence[SelectionResult], source="heavy", bins=10):
    """Binned correct-rate by per-video positive-clip fraction, plus per-video Pearson r."""
    results = _align(ds, results)
    frac = np.array([clip_positive_mask(v, source).mean() for v in ds.videos])
    correct = np.array([r.predicted_label == v.label for r, v in zip(results, ds.videos)], dtype=float)
    edges = np.arange(bins + 1) / bins
    which = np.clip(np.searchsorted(edges, frac, side="right") - 1, 0, bins - 1)
    rows = []
    for b in range(bins):
        m = which == b
        rows.append({
            "bin_lo": float(edges[b]),
            "bin_hi": float(edges[b + 1]),
            "videos": int(m.sum()),
            "correct_rate": float(correct[m].mean()) if m.any() else float("nan"),
        })
    return rows, pearson(frac, correct)


def diagnostics(ds: Dataset, results: Sequence[SelectionResult], source="heavy", scale="normalized") -> dict:
    rows, r = positive_fraction_vs_correct(ds, results, source)
    return {
        "entropy_histogram": entropy_histogram(ds, source, scale),
        "per_class_clips": per_class_clips(ds, results),
        "positive_fraction": rows,
        "pearson": r,
    }


def default_pipeline(retain=0.6, js=0.5, metric="js", budget=None, mode="conditional", source="heavy",
                     scale="normalized") -> PipelineConfig:
    return PipelineConfig(
        skim=SkimConfig(entropy_scale=scale, calibration_quantile=retain),
        scan=ScanConfig(divergence=DIVERGENCE_NAMES[metric], stop_threshold=js, budget_cap=budget),
        use_discriminator=mode != "none",
        discriminator_mode=mode,
        logit_source=source,
    )
