"""GFLOPs accounting per video.

Backbone cost is per-clip classifier cost times the clips it scores.
Dense, top-confidence and Skim-Scan score every clip; random and uniform
sampling only score what they pick.  Slim-Scan pays the light classifier on
every clip plus the heavy one on the selected clips.
"""

from .core import ConfigError, CostParams

SCORES_ALL = {"dense", "top_confidence_n", "skim_scan"}
SCORES_SELECTED = {"random_n", "uniform_n"}


def cost(kind: str, params: CostParams, total_clips: float, n_selected: float, source: str = "heavy"):
    """Return ``(backbone_gflops, selection_gflops)`` for one video."""
    if source == "slim_scan":
        if kind not in ("top_confidence_n", "skim_scan"):
            raise ConfigError(f"slim_scan source is only defined for top_confidence_n and skim_scan, not {kind}")
        backbone = params.light_gflops_per_clip * total_clips + params.heavy_gflops_per_clip * n_selected
    else:
        if source == "heavy":
            per_clip = params.heavy_gflops_per_clip
        elif source == "light":
            per_clip = params.light_gflops_per_clip
        else:
            raise ConfigError(f"unknown logit source {source!r}")
        if kind in SCORES_ALL:
            backbone = per_clip * total_clips
        elif kind in SCORES_SELECTED:
            backbone = per_clip * n_selected
        else:
            raise ConfigError(f"unknown strategy kind {kind!r}")
    selection = params.selection_gflops_per_video if kind == "skim_scan" else 0.0
    return backbone, selection
