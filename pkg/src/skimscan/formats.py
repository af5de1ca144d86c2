"""Line-oriented JSON files for datasets, discriminator models and results, plus CSV tables.

Floats are written with 17 significant digits so every value parses back
to the identical double.  Output is a pure function of the input objects,
so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ClipRecord,
    CostParams,
    Dataset,
    DatasetMeta,
    LinearHead,
    SelectionResult,
    SkimScanError,
    VideoRecord,
    validate_dataset,
)
from .discriminator import DiscriminatorModel

MODEL_FORMAT = "skimscan-discriminator"
MODEL_VERSION = 1
PARAM_ORDER = ("scale", "shift", "pool_width", "head_weight_row_major", "head_bias")


class ParseError(SkimScanError):
    kind = "parse"


class SchemaError(SkimScanError):
    kind = "schema"


# ---- encoding ------------------------------------------------------------


def format_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = "%.17g" % x
    # keep a float marker so integers-valued floats parse back as floats
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"
    return s


def encode(obj) -> str:
    """Compact JSON with full-precision floats and insertion-ordered keys."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return encode(obj.tolist())
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k), ensure_ascii=False)}:{encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _write_lines(path, lines: Iterable[str]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def _read_objects(path) -> list[tuple[int, dict]]:
    """Parse each nonblank line as a JSON object; errors carry the 1-based line number."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not valid UTF-8 ({e.reason})") from None
    out = []
    last_ok = 0
    for n, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: line {n}: malformed JSON ({e.msg}); last complete line {last_ok}") from None
        if not isinstance(obj, dict):
            raise ParseError(f"{path}: line {n}: expected a JSON object")
        out.append((n, obj))
        last_ok = n
    return out


def _field(obj, key, where, kinds=None, optional=False):
    if key not in obj:
        if optional:
            return None
        raise SchemaError(f"{where}: missing field {key!r}")
    v = obj[key]
    # bool is an int subclass in Python but not a number here
    numeric = kinds is int or kinds == (int, float)
    if kinds is not None and (not isinstance(v, kinds) or numeric and isinstance(v, bool)):
        raise SchemaError(f"{where}: field {key!r} has wrong type {type(v).__name__}")
    return v


def _vector(obj, key, length, where, optional=False):
    v = _field(obj, key, where, list, optional)
    if v is None:
        return None
    if len(v) != length:
        raise SchemaError(f"{where}: {key} has {len(v)} values, expected {length}")
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise SchemaError(f"{where}: {key} must hold numbers")
    return np.array(v, dtype=float)


# ---- dataset -------------------------------------------------------------


def dataset_lines(ds: Dataset) -> list[str]:
    m = ds.meta
    meta = {
        "num_classes": int(m.num_classes),
        "feature_dim": int(m.feature_dim),
        "cost": {
            "light": m.cost.light_gflops_per_clip,
            "heavy": m.cost.heavy_gflops_per_clip,
            "selection": m.cost.selection_gflops_per_video,
        },
    }
    if m.class_names is not None:
        meta["class_names"] = list(m.class_names)
    if ds.head is not None:
        meta["head"] = {"weights": _floats(ds.head.weights), "bias": _floats(ds.head.bias)}
    lines = [encode(meta)]
    for v in ds.videos:
        clips = []
        for c in v.clips:
            rec = {"index": int(c.index)}
            if c.annotated is not None:
                rec["annotated"] = bool(c.annotated)
            if c.feature is not None:
                rec["feature"] = _floats(c.feature)
            rec["light_logits"] = _floats(c.light_logits)
            if c.heavy_logits is not None:
                rec["heavy_logits"] = _floats(c.heavy_logits)
            clips.append(rec)
        lines.append(encode({"video_id": v.video_id, "label": int(v.label), "clips": clips}))
    return lines


def serialize_dataset(ds: Dataset, path):
    _write_lines(path, dataset_lines(ds))


def _parse_meta(obj, where) -> tuple[DatasetMeta, LinearHead | None]:
    C = _field(obj, "num_classes", where, int)
    D = _field(obj, "feature_dim", where, int)
    if C < 2 or D < 1:
        raise SchemaError(f"{where}: need num_classes >= 2 and feature_dim >= 1")
    cost = _field(obj, "cost", where, dict)
    try:
        params = CostParams(
            float(_field(cost, "light", where, (int, float))),
            float(_field(cost, "heavy", where, (int, float))),
            float(_field(cost, "selection", where, (int, float))),
        )
    except SkimScanError as e:
        raise SchemaError(f"{where}: {e}") from None
    names = _field(obj, "class_names", where, list, optional=True)
    if names is not None and (len(names) != C or not all(isinstance(s, str) for s in names)):
        raise SchemaError(f"{where}: class_names must be {C} strings")
    head = None
    h = _field(obj, "head", where, dict, optional=True)
    if h is not None:
        w = _vector(h, "weights", C * D, f"{where} head")
        b = _vector(h, "bias", C, f"{where} head")
        head = LinearHead(w.reshape(C, D), b)
    return DatasetMeta(C, D, tuple(names) if names is not None else None, params), head


def _parse_video(obj, meta: DatasetMeta, where) -> VideoRecord:
    vid = _field(obj, "video_id", where, str)
    label = _field(obj, "label", where, int)
    if not 0 <= label < meta.num_classes:
        raise SchemaError(f"{where}: video {vid}: label {label} outside [0, {meta.num_classes})")
    raw = _field(obj, "clips", where, list)
    if not raw:
        raise SchemaError(f"{where}: video {vid} has no clips")
    clips = []
    for k, c in enumerate(raw):
        if not isinstance(c, dict):
            raise SchemaError(f"{where}: video {vid} clip #{k} is not an object")
        idx = _field(c, "index", f"{where}: video {vid} clip #{k}", int)
        cw = f"{where}: video {vid} clip {idx}"
        ann = _field(c, "annotated", cw, bool, optional=True)
        clips.append(ClipRecord(
            index=idx,
            light_logits=_vector(c, "light_logits", meta.num_classes, cw),
            heavy_logits=_vector(c, "heavy_logits", meta.num_classes, cw, optional=True),
            feature=_vector(c, "feature", meta.feature_dim, cw, optional=True),
            annotated=ann,
        ))
    return VideoRecord(vid, label, clips)


def parse_dataset(path) -> Dataset:
    rows = _read_objects(path)
    if not rows:
        raise ParseError(f"{path}: empty dataset file (no meta line)")
    n, head_obj = rows[0]
    meta, head = _parse_meta(head_obj, f"{path}: line {n}")
    videos = [_parse_video(obj, meta, f"{path}: line {n}") for n, obj in rows[1:]]
    ds = Dataset(meta, videos, head)
    problems = validate_dataset(ds)
    if problems:
        raise SchemaError(f"{path}: {problems[0]}" + (f" (+{len(problems) - 1} more)" if len(problems) > 1 else ""))
    return ds


# ---- discriminator model ---------------------------------------------------


def model_lines(model: DiscriminatorModel) -> list[str]:
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "num_classes": int(model.num_classes),
        "feature_dim": int(model.feature_dim),
        "pool_width": int(model.pool_width),
        "conditional": bool(model.conditional),
        "order": list(PARAM_ORDER),
    }
    return [encode(header), encode({"params": model.to_flat()})]


def save_model(model: DiscriminatorModel, path):
    _write_lines(path, model_lines(model))


def load_model(path) -> DiscriminatorModel:
    rows = _read_objects(path)
    if len(rows) != 2:
        raise ParseError(f"{path}: model file needs a header line and a params line, found {len(rows)} lines")
    (n0, header), (n1, body) = rows
    where = f"{path}: line {n0}"
    if header.get("format") != MODEL_FORMAT:
        raise SchemaError(f"{where}: not a discriminator model file")
    if header.get("version") != MODEL_VERSION:
        raise SchemaError(f"{where}: unsupported model version {header.get('version')!r}")
    C = _field(header, "num_classes", where, int)
    D = _field(header, "feature_dim", where, int)
    width = _field(header, "pool_width", where, int)
    conditional = _field(header, "conditional", where, bool)
    params = _vector(body, "params", 3 + 2 * width + 2, f"{path}: line {n1}")
    try:
        model = DiscriminatorModel.from_flat(params, C, D, conditional)
    except SkimScanError as e:
        raise SchemaError(f"{path}: line {n1}: {e}") from None
    if model.pool_width != width:
        raise SchemaError(f"{path}: header pool_width {width} disagrees with params")
    return model


# ---- results --------------------------------------------------------------


def result_record(r: SelectionResult) -> dict:
    return {
        "video_id": r.video_id,
        "strategy": r.strategy,
        "survivors_after_entropy": sorted(r.survivors_after_entropy),
        "survivors_after_discriminator": sorted(r.survivors_after_discriminator),
        "selected": list(r.selected),
        "video_distribution": _floats(r.video_distribution),
        "predicted_label": int(r.predicted_label),
        "clips_evaluated_heavy": int(r.clips_evaluated_heavy),
        "gflops_backbone": float(r.gflops_backbone),
        "gflops_selection": float(r.gflops_selection),
    }


def serialize_results(results: Sequence[SelectionResult], path):
    _write_lines(path, (encode(result_record(r)) for r in results))


def _ints(obj, key, where):
    v = _field(obj, key, where, list)
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise SchemaError(f"{where}: {key} must hold integers")
    return v


def parse_results(path) -> list[SelectionResult]:
    out = []
    for n, obj in _read_objects(path):
        where = f"{path}: line {n}"
        dist = _field(obj, "video_distribution", where, list)
        out.append(SelectionResult(
            video_id=_field(obj, "video_id", where, str),
            survivors_after_entropy=frozenset(_ints(obj, "survivors_after_entropy", where)),
            survivors_after_discriminator=frozenset(_ints(obj, "survivors_after_discriminator", where)),
            selected=tuple(_ints(obj, "selected", where)),
            video_distribution=_vector(obj, "video_distribution", len(dist), where),
            predicted_label=_field(obj, "predicted_label", where, int),
            clips_evaluated_heavy=_field(obj, "clips_evaluated_heavy", where, int),
            gflops_backbone=float(_field(obj, "gflops_backbone", where, (int, float))),
            gflops_selection=float(_field(obj, "gflops_selection", where, (int, float))),
            strategy=_field(obj, "strategy", where, str),
        ))
    return out


def results_equal(a: Sequence[SelectionResult], b: Sequence[SelectionResult]) -> bool:
    return len(a) == len(b) and all(result_record(x) == result_record(y) for x, y in zip(a, b))


# ---- CSV ------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        # repr is the shortest exact form and never locale-dependent
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str] | None = None):
    """Write dict rows; the header is ``columns`` or the keys of the first row."""
    if columns is None:
        if not rows:
            raise SchemaError("cannot infer CSV columns from zero rows")
        columns = list(rows[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
