"""JSON / JSON Lines file formats.

Floats are written as decimal text rounded to 9 significant digits, so files
are deterministic and a write/read round trip is exact up to that rounding.

Formats (one JSON object per line unless noted):

* detections: ``{"image_id", "proposals": [{"box": [cx,cy,w,h], "logits": [...],
  "embedding": [...]}]}``; proposals may also carry ``"ips"`` and ``"index"``.
* ground truth: ``{"image_id", "objects": [{"box": [...], "label": int | "unknown"}]}``
* predictions: ``{"image_id", "predictions": [{"box", "label", "confidence"}]}``
* report (single JSON object): ``u_ap, u_pre, u_rec, u_f1, map_known, counts``
* model (single JSON object): ``{"dim", "weights", "bias"}``
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BBox
from .ipp import IppModel
from .metrics import EvalReport, pr_curve
from .postprocess import FinalPrediction
from .selection import ProposalSet
from .structures import UNKNOWN, Detection, GroundTruthObject

SIG_DIGITS = 9


class SchemaError(ValueError):
    """Malformed input file; the message names the file, line and field."""


def fmt_float(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    return float(f"{x:.{SIG_DIGITS}g}")


def _floats(values) -> List[float]:
    return [fmt_float(v) for v in np.asarray(values, dtype=np.float64).reshape(-1)]


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=False, allow_nan=False)


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(_dumps(rec))
            fh.write("\n")


def _read_lines(path) -> Iterable[Tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, rec


class _Ctx:
    def __init__(self, path, lineno):
        self.where = f"{path}:{lineno}"

    def fail(self, field: str, msg: str):
        raise SchemaError(f"{self.where}: field '{field}': {msg}")

    def get(self, rec: dict, key: str, field: str):
        if key not in rec:
            self.fail(field, "missing")
        return rec[key]

    def numbers(self, value, field: str, length: Optional[int] = None) -> np.ndarray:
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            self.fail(field, "expected a list of numbers")
        if length is not None and len(value) != length:
            self.fail(field, f"expected {length} numbers, got {len(value)}")
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            self.fail(field, "values must be finite")
        return arr

    def box(self, value, field: str) -> BBox:
        arr = self.numbers(value, field, 4)
        try:
            return BBox(*arr)
        except ValueError as exc:
            self.fail(field, str(exc))

    def image_id(self, rec: dict) -> str:
        value = self.get(rec, "image_id", "image_id")
        if not isinstance(value, str):
            self.fail("image_id", "expected a string")
        return value


# ---------------------------------------------------------------------------
# detections / proposals
# ---------------------------------------------------------------------------

@dataclass
class SceneProposals:
    image_id: str
    proposals: ProposalSet


def proposals_record(image_id: str, proposals: ProposalSet) -> dict:
    items = []
    for i in range(len(proposals)):
        item = {"box": _floats(proposals.boxes[i])}
        if proposals.logits is not None:
            item["logits"] = _floats(proposals.logits[i])
        item["embedding"] = _floats(proposals.embeddings[i])
        if proposals.scores is not None:
            item["ips"] = fmt_float(proposals.scores[i])
        if not np.array_equal(proposals.index, np.arange(len(proposals))):
            item["index"] = int(proposals.index[i])
        items.append(item)
    return {"image_id": image_id, "proposals": items}


def write_detections(path, scenes: Sequence[SceneProposals]) -> None:
    write_jsonl(path, (proposals_record(s.image_id, s.proposals) for s in scenes))


def read_detections(path) -> List[SceneProposals]:
    out = []
    for lineno, rec in _read_lines(path):
        ctx = _Ctx(path, lineno)
        image_id = ctx.image_id(rec)
        items = ctx.get(rec, "proposals", "proposals")
        if not isinstance(items, list):
            ctx.fail("proposals", "expected a list")
        boxes, logits, embs, ips, index = [], [], [], [], []
        for i, item in enumerate(items):
            f = f"proposals[{i}]"
            if not isinstance(item, dict):
                ctx.fail(f, "expected an object")
            boxes.append(ctx.box(ctx.get(item, "box", f + ".box"), f + ".box").as_tuple())
            logits.append(ctx.numbers(ctx.get(item, "logits", f + ".logits"), f + ".logits"))
            embs.append(ctx.numbers(ctx.get(item, "embedding", f + ".embedding"), f + ".embedding"))
            if not logits[-1].size:
                ctx.fail(f + ".logits", "need at least one logit")
            if "ips" in item:
                ips.append(float(ctx.numbers([item["ips"]], f + ".ips", 1)[0]))
                if not 0.0 <= ips[-1] <= 1.0:
                    ctx.fail(f + ".ips", "must lie in [0, 1]")
            if "index" in item:
                if not isinstance(item["index"], int) or isinstance(item["index"], bool):
                    ctx.fail(f + ".index", "expected an integer")
                index.append(item["index"])
            for name, seq in (("logits", logits), ("embedding", embs)):
                if seq[-1].size != seq[0].size:
                    ctx.fail(f"{f}.{name}", f"length {seq[-1].size} differs from proposals[0] ({seq[0].size})")
        for name, seq in (("ips", ips), ("index", index)):
            if seq and len(seq) != len(items):
                ctx.fail(f"proposals[].{name}", "present on some proposals but not all")
        n = len(items)
        props = ProposalSet(
            embeddings=np.array(embs).reshape(n, -1) if n else np.zeros((0, 0)),
            boxes=np.array(boxes).reshape(n, 4),
            scores=np.array(ips) if ips else None,
            index=np.array(index) if index else None,
            logits=np.array(logits).reshape(n, -1) if n else None,
        )
        out.append(SceneProposals(image_id, props))
    return out


def detections_from_proposals(proposals: ProposalSet) -> List[Detection]:
    if proposals.scores is None:
        raise ValueError("proposals carry no presence scores")
    if proposals.logits is None:
        raise ValueError("proposals carry no logits")
    return [Detection(BBox(*proposals.boxes[i]), proposals.logits[i], float(proposals.scores[i]),
                      proposals.embeddings[i])
            for i in range(len(proposals))]


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------

def _label_out(label):
    return "unknown" if label is UNKNOWN else int(label)


def write_ground_truth(path, scenes: Sequence[Tuple[str, Sequence[GroundTruthObject]]]) -> None:
    write_jsonl(path, ({"image_id": image_id,
                         "objects": [{"box": _floats(g.box.as_tuple()), "label": _label_out(g.label)}
                                     for g in gts]}
                        for image_id, gts in scenes))


def _label_in(ctx: _Ctx, value, field: str):
    if value == "unknown":
        return UNKNOWN
    if isinstance(value, int) and not isinstance(value, bool) and value >= 0:
        return value
    ctx.fail(field, f"expected a class index >= 0 or \"unknown\", got {value!r}")


def read_ground_truth(path) -> List[Tuple[str, List[GroundTruthObject]]]:
    out = []
    for lineno, rec in _read_lines(path):
        ctx = _Ctx(path, lineno)
        image_id = ctx.image_id(rec)
        objs = ctx.get(rec, "objects", "objects")
        if not isinstance(objs, list):
            ctx.fail("objects", "expected a list")
        gts = []
        for i, obj in enumerate(objs):
            f = f"objects[{i}]"
            if not isinstance(obj, dict):
                ctx.fail(f, "expected an object")
            box = ctx.box(ctx.get(obj, "box", f + ".box"), f + ".box")
            gts.append(GroundTruthObject(box, _label_in(ctx, ctx.get(obj, "label", f + ".label"), f + ".label")))
        out.append((image_id, gts))
    return out


# ---------------------------------------------------------------------------
# final predictions
# ---------------------------------------------------------------------------

def write_predictions(path, scenes: Sequence[Tuple[str, Sequence[FinalPrediction]]]) -> None:
    write_jsonl(path, ({"image_id": image_id,
                         "predictions": [{"box": _floats(p.box.as_tuple()), "label": _label_out(p.label),
                                          "confidence": fmt_float(p.confidence)} for p in preds]}
                        for image_id, preds in scenes))


def read_predictions(path) -> List[Tuple[str, List[FinalPrediction]]]:
    out = []
    for lineno, rec in _read_lines(path):
        ctx = _Ctx(path, lineno)
        image_id = ctx.image_id(rec)
        items = ctx.get(rec, "predictions", "predictions")
        if not isinstance(items, list):
            ctx.fail("predictions", "expected a list")
        preds = []
        for i, item in enumerate(items):
            f = f"predictions[{i}]"
            if not isinstance(item, dict):
                ctx.fail(f, "expected an object")
            box = ctx.box(ctx.get(item, "box", f + ".box"), f + ".box")
            label = _label_in(ctx, ctx.get(item, "label", f + ".label"), f + ".label")
            conf = float(ctx.numbers([ctx.get(item, "confidence", f + ".confidence")], f + ".confidence", 1)[0])
            if not 0.0 <= conf <= 1.0:
                ctx.fail(f + ".confidence", "must lie in [0, 1]")
            preds.append(FinalPrediction(box, label, conf))
        out.append((image_id, preds))
    return out


# ---------------------------------------------------------------------------
# report / model
# ---------------------------------------------------------------------------

REPORT_KEYS = ("u_ap", "u_pre", "u_rec", "u_f1", "map_known")


def report_dict(report: EvalReport) -> dict:
    d = {k: fmt_float(getattr(report, k)) for k in REPORT_KEYS}
    d["counts"] = report.counts
    return d


def write_report(path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report_dict(report), indent=2, sort_keys=True) + "\n")


def read_report(path) -> EvalReport:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    ctx = _Ctx(path, 1)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    values = {k: float(ctx.numbers([ctx.get(data, k, k)], k, 1)[0]) for k in REPORT_KEYS}
    counts = ctx.get(data, "counts", "counts")
    if not isinstance(counts, dict):
        ctx.fail("counts", "expected an object")
    return EvalReport(counts=counts, **values)


def write_model(path, model: IppModel) -> None:
    rec = {"dim": model.dim, "weights": _floats(model.weights), "bias": fmt_float(model.bias)}
    Path(path).write_text(json.dumps(rec, indent=2) + "\n")


def read_model(path) -> IppModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    ctx = _Ctx(path, 1)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    dim = ctx.get(data, "dim", "dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        ctx.fail("dim", "expected a positive integer")
    weights = ctx.numbers(ctx.get(data, "weights", "weights"), "weights", dim)
    bias = float(ctx.numbers([ctx.get(data, "bias", "bias")], "bias", 1)[0])
    return IppModel(weights, bias)


def write_pr_curve(path, flags, total_positives: int) -> None:
    recall, precision = pr_curve(flags, total_positives)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rank,recall,precision\n")
        for i, (r, p) in enumerate(zip(recall, precision), 1):
            fh.write(f"{i},{fmt_float(r)!r},{fmt_float(p)!r}\n")
