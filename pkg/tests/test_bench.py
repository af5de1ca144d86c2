import dataclasses

import numpy as np
import pytest

from conftest import make_dataset, make_video
from oracles import average_precision_py
from skimscan import bench
from skimscan import infotheory as it
from skimscan.core import ConfigError, CostParams, Dataset, SelectionResult, VideoRecord
from skimscan.costs import cost
from skimscan.selection import PipelineConfig, run_dataset, run_pipeline


def _result(vid, dist, selected=(0,)):
    return SelectionResult(vid, frozenset(selected), frozenset(selected), tuple(selected), np.asarray(dist),
                           int(np.argmax(dist)), 0, 0.0, 0.0)


def test_strategy_parsing():
    assert bench.parse_strategy("dense").kind == "dense"
    s = bench.parse_strategy("random_10", seed=3)
    assert (s.kind, s.n, s.seed, s.name) == ("random_n", 10, 3, "random_10")
    assert bench.parse_strategy("top_confidence_5").name == "top_confidence_5"
    s = bench.parse_strategy("skim_scan_10")
    assert s.kind == "skim_scan" and s.pipeline.scan.budget_cap == 10 and s.name == "skim_scan_10"
    for bad in ("random", "fancy_3", "uniform_x"):
        with pytest.raises(ConfigError):
            bench.parse_strategy(bad)
    with pytest.raises(ConfigError):
        bench.StrategySpec("uniform_n")


def test_select_baseline_examples():
    v = make_video(np.zeros((7, 2)))
    assert bench.select_baseline(v, bench.StrategySpec("dense")) == list(range(7))
    assert bench.select_baseline(v, bench.StrategySpec("uniform_n", 3)) == [0, 3, 6]
    assert bench.select_baseline(v, bench.StrategySpec("uniform_n", 1)) == [3]
    w = make_video(np.log([[0.9, 0.1], [0.6, 0.4]]), heavy=np.log([[0.9, 0.1], [0.6, 0.4]]))
    assert bench.select_baseline(w, bench.StrategySpec("top_confidence_n", 1)) == [0]
    tie = make_video(np.zeros((4, 2)), heavy=np.zeros((4, 2)))
    assert bench.select_baseline(tie, bench.StrategySpec("top_confidence_n", 2)) == [0, 1]
    assert bench.select_baseline(v, bench.StrategySpec("random_n", 20)) == list(range(7))


def test_random_baseline_seeding():
    v = make_video(np.zeros((40, 2)), video_id="clip")
    a = bench.select_baseline(v, bench.StrategySpec("random_n", 10, seed=1))
    b = bench.select_baseline(v, bench.StrategySpec("random_n", 10, seed=1))
    c = bench.select_baseline(v, bench.StrategySpec("random_n", 10, seed=2))
    assert a == b and a != c and len(set(a)) == 10


def test_cost_examples():
    p = CostParams(0.36, 19.1, 0.012)
    assert cost("dense", p, 205.6, 205.6)[0] == pytest.approx(19.1 * 205.6, abs=1e-9)
    assert cost("dense", p, 205.6, 205.6)[0] == pytest.approx(3926.96, abs=1e-9)
    assert cost("top_confidence_n", p, 205.6, 10)[0] == pytest.approx(19.1 * 205.6, abs=1e-9)
    assert cost("uniform_n", p, 205.6, 10.0)[0] == pytest.approx(191.0, abs=1e-9)
    slim = CostParams(0.36, 10.6, 0.012)
    assert cost("skim_scan", slim, 205.6, 6.9, "slim_scan")[0] == pytest.approx(147.156, abs=1e-9)
    assert cost("skim_scan", p, 10, 2)[1] == 0.012 and cost("dense", p, 10, 10)[1] == 0.0
    with pytest.raises(ConfigError):
        cost("random_n", p, 10, 2, "slim_scan")


def test_accuracy_and_map_trivial():
    videos = [make_video(np.zeros((1, 2)), video_id="a", label=0), make_video(np.zeros((1, 2)), video_id="b", label=1)]
    ds = make_dataset(videos, 2)
    rep = bench.evaluate(ds, [_result("a", [0.8, 0.2]), _result("b", [0.3, 0.7])])
    assert rep.accuracy == 1.0 and rep.map == 1.0
    assert rep.mean_clips == 1.0


def test_map_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n, C = int(rng.integers(2, 12)), int(rng.integers(2, 5))
        labels = rng.integers(C, size=n)
        ids = [f"v{i:02d}" for i in range(n)]
        # coarse scores force ties so the video_id tie rule matters
        dists = it.softmax(rng.integers(0, 3, size=(n, C)).astype(float))
        ds = make_dataset([make_video(np.zeros((1, C)), video_id=ids[i], label=int(labels[i])) for i in range(n)], C)
        rep = bench.evaluate(ds, [_result(ids[i], dists[i]) for i in range(n)])
        aps = [average_precision_py(dists[:, k].tolist(), (labels == k).tolist(), ids)
               for k in range(C) if np.any(labels == k)]
        assert rep.map == pytest.approx(np.mean(aps), abs=1e-12)


def test_map_one_inversion():
    # class 0 ranking: b (neg), a (pos), c (pos); class 1 ranking: c, a, b (pos)
    ds = make_dataset([make_video(np.zeros((1, 2)), video_id=i, label=l) for i, l in [("a", 0), ("b", 1), ("c", 0)]], 2)
    res = [_result("a", [0.6, 0.4]), _result("b", [0.7, 0.3]), _result("c", [0.2, 0.8])]
    ap0 = (1 / 2 + 2 / 3) / 2
    ap1 = 1 / 3
    assert bench.evaluate(ds, res).map == pytest.approx((ap0 + ap1) / 2)


def test_incomplete_results():
    ds = make_dataset([make_video(np.zeros((1, 2)), video_id="a")], 2)
    with pytest.raises(bench.IncompleteResultsError):
        bench.evaluate(ds, [])


def test_per_class_nan_for_empty_class():
    ds = make_dataset([make_video(np.zeros((2, 3)), video_id="a", label=0)], 3)
    rep = bench.evaluate(ds, [_result("a", [0.5, 0.3, 0.2], (0, 1))])
    assert rep.per_class_accuracy[0] == 1.0 and np.isnan(rep.per_class_accuracy[1])
    assert rep.per_class_mean_clips[0] == 2.0


def test_dense_evaluation_permutation_invariant(adversarial):
    spec = bench.StrategySpec("dense")
    rep = bench.evaluate(adversarial, bench.run_strategy(adversarial, spec))
    rng = np.random.default_rng(0)
    shuffled = Dataset(adversarial.meta, [
        VideoRecord(v.video_id, v.label, [dataclasses.replace(v.clips[i], index=k)
                                          for k, i in enumerate(rng.permutation(len(v)))])
        for v in adversarial.videos
    ])
    rep2 = bench.evaluate(shuffled, bench.run_strategy(shuffled, spec))
    assert rep.accuracy == rep2.accuracy and rep.mean_clips == rep2.mean_clips
    assert rep.map == pytest.approx(rep2.map, abs=1e-12)


def test_mean_clips_bounded(adversarial, trained_cd):
    rep = bench.evaluate(adversarial, bench.run_strategy(adversarial, bench.parse_strategy("skim_scan"), trained_cd))
    assert rep.mean_clips <= max(len(v) for v in adversarial.videos)
    assert 0 <= rep.map <= 1


def test_ablation_all_off_equals_dense(adversarial, trained_cd):
    table = bench.ablation_matrix(adversarial, PipelineConfig(), trained_cd)
    assert len(table) == 8
    dense = bench.evaluate(adversarial, bench.run_strategy(adversarial, bench.StrategySpec("dense")))
    assert table[(False, False, False)].same_as(dense)
    again = bench.ablation_matrix(adversarial, PipelineConfig(), trained_cd)
    assert all(again[k].same_as(table[k]) for k in table)
    rows = bench.ablation_rows(table)
    assert rows[0]["name"] == "Dense" and rows[-1]["name"] == "Entropy + C.D. + JS"


def test_sweep_single_cell_matches_direct_run(adversarial, trained_cd):
    rows = bench.threshold_sweep(adversarial, [0.6], [0.5], PipelineConfig(), trained_cd)
    assert len(rows) == 1
    direct = bench.evaluate(adversarial, run_dataset(adversarial, PipelineConfig(), trained_cd))
    assert rows[0]["accuracy"] == direct.accuracy and rows[0]["mean_clips"] == direct.mean_clips
    with pytest.raises(ConfigError):
        bench.threshold_sweep(adversarial, [], [0.5], PipelineConfig())


def test_sweep_grid_shape():
    rows = [{"entropy_quantile": q, "js_threshold": t, "mean_clips": q * 10 + t} for q in (0.2, 0.4) for t in (0.1, 0.3, 0.5)]
    qs, ts, g = bench.sweep_grid(rows, "mean_clips")
    assert qs == [0.2, 0.4] and ts == [0.1, 0.3, 0.5] and g.shape == (2, 3)
    assert g[1, 2] == pytest.approx(4.5)


def test_metric_comparison_rows(adversarial, trained_cd):
    rows = bench.metric_comparison(adversarial, PipelineConfig(), trained_cd, repeats=1)
    assert [r["name"] for r in rows] == ["js", "kl", "wasserstein1"]
    assert all(r["wall_time_s"] > 0 for r in rows)


def test_diagnostics_positive_only():
    z = np.array([[6.0, 0.0], [5.0, 0.0]])
    ds = make_dataset([make_video(z, heavy=z, video_id="a", label=0)], 2)
    res = [run_pipeline(ds.videos[0], PipelineConfig(use_entropy=False, use_discriminator=False, use_scan=False),
                        None, ds.meta)]
    d = bench.diagnostics(ds, res)
    assert len(d["entropy_histogram"]) == 20
    assert sum(r["negative"] for r in d["entropy_histogram"]) == 0
    assert sum(r["positive"] for r in d["entropy_histogram"]) == 2
    assert len(d["positive_fraction"]) == 10


def test_diagnostics_adversarial(adversarial, trained_cd):
    res = bench.run_strategy(adversarial, bench.parse_strategy("dense"))
    d = bench.diagnostics(adversarial, res)
    assert d["pearson"] > 0
    hist = d["entropy_histogram"]
    assert sum(r["positive"] + r["negative"] for r in hist) == adversarial.total_clips
    # low-entropy bins lean positive, high-entropy bins lean negative
    low = hist[:5]
    high = hist[-5:]
    assert sum(r["positive"] for r in low) > sum(r["negative"] for r in low)
    assert sum(r["negative"] for r in high) > sum(r["positive"] for r in high)
    per_class = d["per_class_clips"]
    assert [r["mean_selected"] for r in per_class] == sorted((r["mean_selected"] for r in per_class), reverse=True)


def test_pearson_degenerate():
    assert np.isnan(bench.pearson([1, 1, 1], [0, 1, 0]))
    assert bench.pearson([0, 1, 2], [0, 2, 4]) == pytest.approx(1.0)
