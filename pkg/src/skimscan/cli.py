"""Command-line interface: ``skimscan <command> [flags]``.

Failures print a single line ``skimscan: error[<kind>]: <message>`` to
stderr and exit nonzero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import warnings
from pathlib import Path

from . import bench, formats, plotting
from .core import SkimScanError, validate_dataset
from .discriminator import train_supervised, transfer_finetune
from .learning import SgdConfig
from .selection import (
    DEFAULT_RETAIN,
    JS_THRESHOLD_EXPERIMENTS,
    PipelineConfig,
    calibrate_entropy_threshold,
    run_dataset,
)
from .synthgen import generate, presets

SOURCES = {"light": "light", "heavy": "heavy", "slim": "slim_scan", "slim_scan": "slim_scan"}


class UsageError(SkimScanError):
    kind = "usage"


class MissingInputError(SkimScanError):
    kind = "missing-input"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _input(path, flag):
    if path is None:
        raise MissingInputError(f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise MissingInputError(f"{flag}: no such file {path}")
    return p


def _load_data(args):
    return formats.parse_dataset(_input(args.data, "--data"))


def _load_model(args, required=False):
    if args.model is None:
        if required:
            raise MissingInputError("--model is required")
        return None
    return formats.load_model(_input(args.model, "--model"))


def _source(args, ds):
    src = SOURCES[args.source]
    if src != "light" and not ds.has_heavy:
        if args.source_given:
            raise SkimScanError(f"--source {args.source} needs heavy logits; the dataset has light logits only")
        src = "light"
    return src


def _pipeline(args, ds, model) -> PipelineConfig:
    mode = args.mode
    if mode in ("conditional", "plain") and model is None:
        raise MissingInputError(f"--mode {mode} needs --model")
    return bench.default_pipeline(
        retain=args.entropy_q, js=args.js, metric=args.metric, budget=args.budget, mode=mode,
        source=_source(args, ds), scale=args.scale,
    ).replace(stage_order=args.stage_order)


def _print_table(rows, columns, out=None):
    def cell(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)
    out = sys.stdout if out is None else out

    body = [[cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)), file=out)
    for b in body:
        print("  ".join(v.ljust(w) for v, w in zip(b, widths)), file=out)


SUMMARY_COLUMNS = ["name", "accuracy", "map", "mean_clips", "mean_backbone_gflops", "mean_selection_gflops"]


# ---- commands --------------------------------------------------------------


def cmd_synthgen(args):
    table = presets(args.seed)
    if args.preset not in table:
        raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(sorted(table))}")
    cfg = table[args.preset]
    if args.num_videos is not None:
        cfg = dataclasses.replace(cfg, num_videos=args.num_videos)
    ds = generate(cfg)
    formats.serialize_dataset(ds, args.out)
    print(f"wrote {len(ds)} videos, {ds.total_clips} clips to {args.out}")


def cmd_validate(args):
    ds = _load_data(args)
    problems = validate_dataset(ds)
    for p in problems:
        print(p)
    if problems:
        raise SkimScanError(f"{len(problems)} invariant violations")
    print(f"ok: {len(ds)} videos, {ds.total_clips} clips")


def cmd_calibrate(args):
    ds = _load_data(args)
    src = _source(args, ds)
    thr = calibrate_entropy_threshold(ds, args.retain, args.scale, "light" if src == "slim_scan" else src)
    print(formats.format_float(thr))


def cmd_train_cd(args):
    ds = _load_data(args)
    cfg = SgdConfig(args.lr, args.epochs, args.batch_size, args.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        model, report, trace = train_supervised(ds, cfg, args.pool_width, not args.plain,
                                                "light" if _source(args, ds) == "light" else "heavy")
    formats.save_model(model, args.out)
    print(f"held-out binary accuracy {report.binary_accuracy:.4f}")
    print(f"positive drop rate {report.positive_drop_rate:.4f}, negative drop rate {report.negative_drop_rate:.4f}")
    print(f"final epoch loss {trace[-1]:.6f}")


def cmd_finetune_cd(args):
    ds = _load_data(args)
    model = _load_model(args, required=True)
    cfg = SgdConfig(args.lr, args.epochs, args.batch_size, args.seed)
    model, trace = transfer_finetune(model, ds, cfg=cfg)
    formats.save_model(model, args.out)
    print(f"loss {trace[0]:.6f} -> {trace[-1]:.6f} over {len(trace)} epochs")


def cmd_select(args):
    ds = _load_data(args)
    model = _load_model(args)
    cfg = _pipeline(args, ds, model)
    results = run_dataset(ds, cfg, model)
    formats.serialize_results(results, args.out)
    print(f"wrote {len(results)} results to {args.out}")


def cmd_evaluate(args):
    ds = _load_data(args)
    results = formats.parse_results(_input(args.results, "--results"))
    report = bench.evaluate(ds, results)
    row = bench.report_row(Path(args.results).stem, report)
    _print_table([row], SUMMARY_COLUMNS)
    if args.csv:
        formats.write_csv(args.csv, [row], SUMMARY_COLUMNS)


def cmd_compare(args):
    ds = _load_data(args)
    model = _load_model(args)
    tokens = [t for t in args.strategies.split(",") if t.strip()]
    if not tokens:
        raise UsageError("--strategies is empty")
    src = _source(args, ds)
    needs_pipeline = any(t.strip().startswith("skim_scan") for t in tokens)
    pipeline = _pipeline(args, ds, model) if needs_pipeline else None
    specs = [bench.parse_strategy(t, pipeline, seed=args.seed, source=src) for t in tokens]
    rows = bench.compare(ds, specs, model)
    formats.write_csv(args.out, rows, SUMMARY_COLUMNS)
    _print_table(rows, SUMMARY_COLUMNS)


def cmd_ablate(args):
    ds = _load_data(args)
    model = _load_model(args, required=args.mode in ("conditional", "plain"))
    table = bench.ablation_matrix(ds, _pipeline(args, ds, model), model)
    rows = bench.ablation_rows(table)
    cols = ["name", "entropy", "discriminator", "scan", *SUMMARY_COLUMNS[1:]]
    formats.write_csv(args.out, rows, cols)
    _print_table(rows, cols)


def cmd_sweep(args):
    ds = _load_data(args)
    model = _load_model(args)
    rows = bench.threshold_sweep(ds, args.entropy_grid, args.js_grid, _pipeline(args, ds, model), model)
    cols = ["entropy_quantile", "entropy_threshold", "js_threshold", "accuracy", "map", "mean_clips"]
    formats.write_csv(args.out, rows, cols)
    _print_table(rows, cols)
    if not args.no_plots:
        stem = Path(args.out).with_suffix("")
        for value, title in (("accuracy", "accuracy"), ("mean_clips", "mean selected clips")):
            qs, ts, grid = bench.sweep_grid(rows, value)
            fmt = "{:.2f}" if value == "accuracy" else "{:.1f}"
            plotting.heatmap(f"{stem}_{value}.png", grid, qs, ts, title, fmt=fmt)


def cmd_metrics(args):
    ds = _load_data(args)
    model = _load_model(args)
    rows = bench.metric_comparison(ds, _pipeline(args, ds, model), model, repeats=args.repeats)
    cols = [*SUMMARY_COLUMNS, "wall_time_s"]
    formats.write_csv(args.out, rows, cols)
    _print_table(rows, cols)


def cmd_diagnose(args):
    ds = _load_data(args)
    results = formats.parse_results(_input(args.results, "--results"))
    src = _source(args, ds)
    src = "light" if src == "light" else "heavy"
    diag = bench.diagnostics(ds, results, src, args.scale)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_csv(out / "entropy_histogram.csv", diag["entropy_histogram"],
                      ["bin_lo", "bin_hi", "positive", "negative"])
    formats.write_csv(out / "per_class_clips.csv", diag["per_class_clips"],
                      ["class", "class_name", "videos", "mean_selected"])
    formats.write_csv(out / "positive_fraction.csv", diag["positive_fraction"],
                      ["bin_lo", "bin_hi", "videos", "correct_rate"])
    formats.write_csv(out / "correlation.csv", [{"pearson": diag["pearson"]}], ["pearson"])
    if not args.no_plots:
        xlabel = "normalized entropy" if args.scale == "normalized" else "entropy (nats)"
        plotting.entropy_histogram(out / "entropy_histogram.png", diag["entropy_histogram"], xlabel)
        if diag["per_class_clips"]:
            plotting.per_class_bars(out / "per_class_clips.png", diag["per_class_clips"])
        plotting.correlation_scatter(out / "positive_fraction.png", diag["positive_fraction"], diag["pearson"])
    print(f"pearson(positive fraction, correct) = {diag['pearson']:.4f}")
    print(f"wrote diagnostics to {out}")


# ---- parser -----------------------------------------------------------------


def _data_flags(p, model=False, results=False):
    p.add_argument("--data", required=True, help="dataset file (JSON lines)")
    if model:
        p.add_argument("--model", help="discriminator model file")
    if results:
        p.add_argument("--results", required=True, help="results file from `select`")


def _source_flag(p):
    p.add_argument("--source", choices=sorted(SOURCES), default=None,
                   help="logits used for selection statistics (default heavy, light if heavy is absent)")
    p.add_argument("--scale", choices=("normalized", "raw_nats"), default="normalized", help="entropy scale")


def _pipeline_flags(p):
    p.add_argument("--entropy-q", type=float, default=DEFAULT_RETAIN, help="fraction of clips the skim retains")
    p.add_argument("--js", type=float, default=JS_THRESHOLD_EXPERIMENTS, help="scan stop threshold")
    p.add_argument("--metric", choices=("js", "kl", "w1"), default="js")
    p.add_argument("--budget", type=int, default=None, help="cap on selected clips")
    p.add_argument("--mode", choices=("conditional", "plain", "oracle", "none"), default="conditional")
    p.add_argument("--stage-order", choices=("entropy_first", "discriminator_first"), default="entropy_first")
    _source_flag(p)


def _sgd_flags(p, lr, epochs):
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="skimscan", description="Entropy skimming and divergence scanning for clip selection.")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synthgen", parents=[common], help="generate a synthetic dataset from a preset")
    p.add_argument("--preset", required=True)
    p.add_argument("--num-videos", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthgen)

    p = sub.add_parser("validate", parents=[common], help="check dataset invariants")
    _data_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("calibrate", parents=[common], help="print the entropy threshold that retains a fraction of clips")
    _data_flags(p)
    p.add_argument("--retain", type=float, default=DEFAULT_RETAIN)
    _source_flag(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train-cd", parents=[common], help="train a class discriminator on annotated clips")
    _data_flags(p)
    _sgd_flags(p, 0.005, 4)
    p.add_argument("--pool-width", type=int, default=None)
    p.add_argument("--plain", action="store_true", help="train without class conditioning")
    _source_flag(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_cd)

    p = sub.add_parser("finetune-cd", parents=[common], help="finetune a discriminator from video labels only")
    _data_flags(p, model=True)
    _sgd_flags(p, 0.001, 80)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_finetune_cd)

    p = sub.add_parser("select", parents=[common], help="run the selection pipeline and write per-video results")
    _data_flags(p, model=True)
    _pipeline_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", parents=[common], help="score a results file")
    _data_flags(p, results=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[common], help="baselines against the pipeline")
    _data_flags(p, model=True)
    p.add_argument("--strategies", required=True,
                   help="comma list, e.g. dense,random_10,uniform_10,top_confidence_10,skim_scan,skim_scan_10")
    _pipeline_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablate", parents=[common], help="all 8 stage on/off combinations")
    _data_flags(p, model=True)
    _pipeline_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", parents=[common], help="grid over retain quantile and scan threshold")
    _data_flags(p, model=True)
    p.add_argument("--entropy-grid", type=_floats, default=[0.2, 0.4, 0.6, 0.8])
    p.add_argument("--js-grid", type=_floats, default=[0.1, 0.3, 0.5, 0.7])
    _pipeline_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", parents=[common], help="js / kl / wasserstein1 with timings")
    _data_flags(p, model=True)
    _pipeline_flags(p)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("diagnose", parents=[common], help="entropy histogram, per-class clips and correctness correlation")
    _data_flags(p, results=True)
    _source_flag(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if hasattr(args, "source"):
            args.source_given = args.source is not None
            if args.source is None:
                args.source = "heavy"
        args.func(args)
    except UsageError as e:
        print(f"skimscan: error[{e.kind}]: {_one_line(e)}", file=sys.stderr)
        return 2
    except SkimScanError as e:
        print(f"skimscan: error[{e.kind}]: {_one_line(e)}", file=sys.stderr)
        return 1
    except (OSError, RuntimeWarning) as e:
        kind = "io" if isinstance(e, OSError) else "warning"
        print(f"skimscan: error[{kind}]: {_one_line(e)}", file=sys.stderr)
        return 1
    return 0


def _one_line(e) -> str:
    return " ".join(str(e).split())


if __name__ == "__main__":
    sys.exit(main())
