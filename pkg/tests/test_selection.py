import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset, make_video
from oracles import greedy_scan_py
from skimscan import infotheory as it
from skimscan.core import ConfigError, MissingLogitsError, UnsupportedDatasetError
from skimscan.selection import (
    JS_THRESHOLD_EXPERIMENTS,
    JS_THRESHOLD_METHOD,
    PipelineConfig,
    ScanConfig,
    SkimConfig,
    calibrate_entropy_threshold,
    clip_distributions,
    resolve_config,
    run_dataset,
    run_pipeline,
    scan,
    scan_aggregate,
    skim_entropy,
)

OFF = PipelineConfig(use_entropy=False, use_discriminator=False, use_scan=False, logit_source="light")


def _dist_with_normalized_entropy(target, C=3):
    # two-parameter family [a, b, b]; bisection on a
    lo, hi = 1.0 / C, 1.0
    for _ in range(200):
        a = 0.5 * (lo + hi)
        p = np.array([a] + [(1 - a) / (C - 1)] * (C - 1))
        if it.normalized_entropy(p) > target:
            lo = a
        else:
            hi = a
    return p


def test_presets_and_defaults():
    assert JS_THRESHOLD_METHOD == 0.4 and JS_THRESHOLD_EXPERIMENTS == 0.5
    cfg = PipelineConfig()
    assert cfg.scan.stop_threshold == 0.5 and cfg.skim.calibration_quantile == 0.6


def test_config_validation():
    with pytest.raises(ConfigError):
        SkimConfig(entropy_threshold=1.5)
    with pytest.raises(ConfigError):
        SkimConfig(entropy_threshold=-0.1, entropy_scale="raw_nats")
    with pytest.raises(ConfigError):
        ScanConfig(divergence="hellinger")
    with pytest.raises(ConfigError):
        ScanConfig(budget_cap=0)
    with pytest.raises(ConfigError):
        PipelineConfig(discriminator_mode="magic")
    assert ScanConfig(divergence="w1").divergence == "wasserstein1"


def test_clip_distributions():
    v = make_video([[0.0, 0.0, 0.0, 0.0]])
    np.testing.assert_allclose(clip_distributions(v, "light"), [[0.25] * 4])
    with pytest.raises(MissingLogitsError):
        clip_distributions(v, "heavy")


def test_skim_entropy_examples():
    dists = np.array([_dist_with_normalized_entropy(h) for h in (0.2, 0.5, 0.9)])
    assert skim_entropy(dists, SkimConfig(0.7, calibration_quantile=None)) == {0, 1}
    assert skim_entropy(dists, SkimConfig(0.0, calibration_quantile=None)) == {0}
    mixed = np.vstack([dists, np.full(3, 1 / 3)])
    assert skim_entropy(mixed, SkimConfig(1.0, calibration_quantile=None)) == {0, 1, 2}


def test_calibration_quantile_arithmetic():
    dists = np.array([_dist_with_normalized_entropy(h) for h in (0.1, 0.2, 0.3, 0.4)])
    v = make_video(np.log(dists))
    ds = make_dataset([v], C=3)
    thr = calibrate_entropy_threshold(ds, 0.5)
    assert thr == pytest.approx(0.25, abs=1e-9)
    assert len(skim_entropy(dists, SkimConfig(thr, calibration_quantile=None))) == 2


def test_calibration_near_one_keeps_everything(adversarial):
    thr = calibrate_entropy_threshold(adversarial, 1 - 1e-9, source="heavy")
    for v in adversarial.videos:
        kept = skim_entropy(clip_distributions(v, "heavy"), SkimConfig(thr, calibration_quantile=None))
        assert len(kept) == len(v)


def test_default_calibration_retains_sixty_percent(adversarial):
    thr = calibrate_entropy_threshold(adversarial, 0.6, source="heavy")
    kept = sum(len(skim_entropy(clip_distributions(v, "heavy"), SkimConfig(thr, calibration_quantile=None)))
               for v in adversarial.videos)
    assert 0.55 <= kept / adversarial.total_clips <= 0.65


def test_calibration_validation(adversarial):
    with pytest.raises(ConfigError):
        calibrate_entropy_threshold(adversarial, 1.0)


def test_scan_aggregate_examples():
    np.testing.assert_allclose(scan_aggregate([[1.0, 2.0]]), it.softmax([1.0, 2.0]))
    np.testing.assert_allclose(scan_aggregate([[1.0, 2.0], [1.0, 2.0]]), it.softmax([1.0, 2.0]))
    np.testing.assert_allclose(scan_aggregate([[2.0, 0.0], [0.0, 2.0]]), [0.5, 0.5])
    with pytest.raises(ConfigError):
        scan_aggregate(np.zeros((0, 2)))


def test_scan_three_clip_example():
    A = [0.9, 0.05, 0.05]
    C = [0.05, 0.9, 0.05]
    logits = np.log(np.array([A, A, C]))
    dists = it.softmax(logits)
    # after A and C the aggregate is softmax of the mean logits, and its divergence to B is about 0.134
    gap = float(it.js_divergence(scan_aggregate(logits[[0, 2]]), dists[1]))
    assert 0.13 < gap < 0.14
    assert scan({0, 1, 2}, logits, dists, ScanConfig("js", 0.15)) == [0, 2]
    assert scan({0, 1, 2}, logits, dists, ScanConfig("js", 0.1)) == [0, 2, 1]


def test_scan_identical_candidates_and_cap():
    logits = np.tile([1.0, 0.0, -1.0], (5, 1))
    dists = it.softmax(logits)
    assert scan(range(5), logits, dists, ScanConfig("js", 1e-9)) == [0]
    rng = np.random.default_rng(0)
    z = rng.normal(size=(6, 4)) * 3
    assert len(scan(range(6), z, it.softmax(z), ScanConfig("js", 0.0, budget_cap=1))) == 1
    with pytest.raises(ConfigError):
        scan(set(), z, it.softmax(z), ScanConfig())


@pytest.mark.parametrize("metric", ["js", "kl", "wasserstein1"])
def test_scan_matches_brute_force(metric):
    rng = np.random.default_rng({"js": 11, "kl": 12, "wasserstein1": 13}[metric])
    for _ in range(30):
        L, C = int(rng.integers(1, 21)), int(rng.integers(2, 6))
        z = rng.normal(size=(L, C)) * rng.uniform(0.5, 4)
        cand = sorted(rng.choice(L, size=int(rng.integers(1, L + 1)), replace=False).tolist())
        thr = float(rng.uniform(0, 0.3 if metric != "wasserstein1" else 1.0))
        cap = None if rng.random() < 0.5 else int(rng.integers(1, L + 1))
        got = scan(cand, z, it.softmax(z), ScanConfig(metric, thr, cap))
        assert got == greedy_scan_py(cand, z.tolist(), metric, thr, cap)


def test_scan_threshold_prefix_property():
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = rng.normal(size=(15, 4)) * 2
        d = it.softmax(z)
        seqs = [scan(range(15), z, d, ScanConfig("js", t)) for t in (0.0, 0.05, 0.1, 0.3)]
        for a, b in zip(seqs, seqs[1:]):
            assert len(b) <= len(a) and a[:len(b)] == b


def test_all_stages_off_is_dense():
    rng = np.random.default_rng(1)
    v = make_video(rng.normal(size=(7, 3)))
    r = run_pipeline(v, OFF, None, make_dataset([v], 3).meta)
    assert r.selected == tuple(range(7))
    np.testing.assert_allclose(r.video_distribution, it.softmax(v.logits("light")).mean(axis=0))
    assert r.gflops_selection == 0.0


def test_oracle_mode_keeps_annotated(adversarial):
    cfg = PipelineConfig(use_entropy=False, use_scan=False, discriminator_mode="oracle")
    for v in adversarial.videos[:10]:
        r = run_pipeline(v, cfg, None, adversarial.meta)
        annotated = {c.index for c in v.clips if c.annotated}
        assert r.survivors_after_discriminator == (annotated or r.survivors_after_discriminator)


def test_oracle_fallback_is_min_entropy():
    logits = np.array([[3.0, 0.0], [0.1, 0.0], [5.0, 0.0]])
    v = make_video(logits, annotated=[False, False, False])
    cfg = PipelineConfig(use_entropy=False, use_scan=False, discriminator_mode="oracle", logit_source="light")
    r = run_pipeline(v, cfg, None, make_dataset([v], 2).meta)
    assert r.selected == (2,)


def test_oracle_needs_annotations():
    v = make_video(np.zeros((3, 2)))
    cfg = PipelineConfig(use_entropy=False, use_scan=False, discriminator_mode="oracle", logit_source="light")
    with pytest.raises(UnsupportedDatasetError):
        run_pipeline(v, cfg, None, make_dataset([v], 2).meta)


def test_conditional_needs_model():
    v = make_video(np.zeros((3, 2)), features=np.zeros((3, 2)))
    cfg = PipelineConfig(use_entropy=False, use_scan=False, logit_source="light")
    with pytest.raises(ConfigError):
        run_pipeline(v, cfg, None, make_dataset([v], 2).meta)


def test_stage_nesting(adversarial, trained_cd):
    for r in run_dataset(adversarial, PipelineConfig(), trained_cd):
        assert set(r.selected) <= r.survivors_after_discriminator <= r.survivors_after_entropy


def test_discriminator_first_order(adversarial, trained_cd):
    cfg = PipelineConfig(stage_order="discriminator_first")
    for r in run_dataset(adversarial, cfg, trained_cd):
        assert set(r.selected) <= r.survivors_after_entropy <= r.survivors_after_discriminator


def test_full_pipeline_selects_few_clips(adversarial, trained_cd):
    rs = run_dataset(adversarial, PipelineConfig(), trained_cd)
    mean_sel = np.mean([len(r.selected) for r in rs])
    mean_len = np.mean([len(v) for v in adversarial.videos])
    assert mean_sel < 0.25 * mean_len


def test_slim_scan_uses_light_stats_and_heavy_final(adversarial, trained_cd):
    cfg = resolve_config(adversarial, PipelineConfig(logit_source="slim_scan"))
    v = adversarial.videos[0]
    r = run_pipeline(v, cfg, trained_cd, adversarial.meta)
    pos = np.searchsorted(v.indices, r.selected)
    np.testing.assert_allclose(r.video_distribution, it.softmax(v.logits("heavy")[pos]).mean(axis=0))
    assert r.clips_evaluated_heavy == len(r.selected)
    light_only = resolve_config(adversarial, PipelineConfig(logit_source="light"))
    r_light = run_pipeline(v, light_only, trained_cd, adversarial.meta)
    assert r_light.selected == r.selected
    p = adversarial.meta.cost
    assert r.gflops_backbone == pytest.approx(p.light_gflops_per_clip * len(v) + p.heavy_gflops_per_clip * len(pos))


def test_light_and_heavy_sources_differ(adversarial):
    v = adversarial.videos[0]
    assert not np.allclose(clip_distributions(v, "light"), clip_distributions(v, "heavy"))


def test_plain_mode_zeroes_onehot(adversarial, trained_cd):
    base = PipelineConfig(use_entropy=False, use_scan=False)
    cond = run_dataset(adversarial, base, trained_cd)
    plain = run_dataset(adversarial, base.replace(discriminator_mode="plain"), trained_cd)
    assert any(a.selected != b.selected for a, b in zip(cond, plain))


def test_pipeline_deterministic(adversarial, trained_cd):
    a = run_dataset(adversarial, PipelineConfig(), trained_cd)
    b = run_dataset(adversarial, PipelineConfig(), trained_cd)
    assert [r.selected for r in a] == [r.selected for r in b]


@pytest.mark.parametrize("metric", ["js", "kl", "wasserstein1"])
def test_permutation_covariance(metric):
    rng = np.random.default_rng(21)
    z = rng.normal(size=(12, 4)) * 2.5
    perm = rng.permutation(12)
    v = make_video(z)
    w = make_video(z[perm])
    cfg = PipelineConfig(discriminator_mode="none", use_discriminator=False, logit_source="light",
                         skim=SkimConfig(0.8, calibration_quantile=None), scan=ScanConfig(metric, 0.05))
    meta = make_dataset([v], 4).meta
    a = run_pipeline(v, cfg, None, meta)
    b = run_pipeline(w, cfg, None, meta)
    assert {int(perm[i]) for i in b.selected} == set(a.selected)
    assert {int(perm[i]) for i in b.survivors_after_entropy} == set(a.survivors_after_entropy)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["js", "kl", "wasserstein1"]), st.floats(0, 0.7))
def test_scan_structural_properties(seed, metric, thr):
    rng = np.random.default_rng(seed)
    L, C = int(rng.integers(1, 15)), int(rng.integers(2, 6))
    z = rng.normal(size=(L, C)) * 3
    d = it.softmax(z)
    cand = sorted(rng.choice(L, size=int(rng.integers(1, L + 1)), replace=False).tolist())
    out = scan(cand, z, d, ScanConfig(metric, thr))
    assert len(out) == len(set(out)) >= 1
    assert set(out) <= set(cand)
    h = it.entropy(d[cand])
    assert out[0] == cand[int(np.argmin(h))]
    assert math.isfinite(len(out))
