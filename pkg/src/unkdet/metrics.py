"""Unknown-object detection metrics: U-PRE, U-REC, U-F1, U-AP and known-class mAP.

Matching is done per label, with ``UNKNOWN`` treated as a label of its own, so
a known-class prediction can never claim an unknown ground truth (or the
reverse). Ratios with a zero denominator are reported as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Sequence, Tuple

import numpy as np

from . import geometry
from .postprocess import FinalPrediction
from .structures import UNKNOWN, GroundTruthObject

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass
class ClassMatch:
    """Greedy-matching result for one label in one scene (or merged over scenes)."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_gt: int = 0
    confidences: np.ndarray = field(default_factory=lambda: np.zeros(0))
    flags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def merge(self, other: "ClassMatch") -> "ClassMatch":
        return ClassMatch(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                          self.n_gt + other.n_gt,
                          np.concatenate([self.confidences, other.confidences]),
                          np.concatenate([self.flags, other.flags]))

    def ranked_flags(self) -> np.ndarray:
        order = np.argsort(-self.confidences, kind="stable")
        return self.flags[order]


@dataclass
class MatchOutcome:
    per_class: Dict[Hashable, ClassMatch] = field(default_factory=dict)

    def get(self, label) -> ClassMatch:
        return self.per_class.get(label, ClassMatch())

    @property
    def tp_u(self) -> int:
        return self.get(UNKNOWN).tp

    @property
    def fp_u(self) -> int:
        return self.get(UNKNOWN).fp

    @property
    def fn_u(self) -> int:
        return self.get(UNKNOWN).fn

    def merge(self, other: "MatchOutcome") -> "MatchOutcome":
        merged = dict(self.per_class)
        for label, cm in other.per_class.items():
            merged[label] = merged[label].merge(cm) if label in merged else cm
        return MatchOutcome(merged)


@dataclass
class EvalReport:
    u_ap: float = 0.0
    u_pre: float = 0.0
    u_rec: float = 0.0
    u_f1: float = 0.0
    map_known: float = 0.0
    counts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"u_ap": self.u_ap, "u_pre": self.u_pre, "u_rec": self.u_rec,
                "u_f1": self.u_f1, "map_known": self.map_known, "counts": self.counts}


def _match_class(preds: Sequence[FinalPrediction], gts: Sequence[GroundTruthObject],
                 iou_threshold: float) -> ClassMatch:
    conf = np.array([p.confidence for p in preds], dtype=np.float64)
    order = np.argsort(-conf, kind="stable")
    flags = np.zeros(len(preds), dtype=bool)
    if gts and preds:
        ious = geometry.pairwise_iou(geometry.boxes_to_array(p.box for p in preds),
                                     geometry.boxes_to_array(g.box for g in gts))
        taken = np.zeros(len(gts), dtype=bool)
        for i in order:
            cand = np.where(taken | (ious[i] < iou_threshold), -np.inf, ious[i])
            j = int(np.argmax(cand))
            if np.isfinite(cand[j]):
                taken[j] = True
                flags[i] = True
    tp = int(flags.sum())
    return ClassMatch(tp=tp, fp=len(preds) - tp, fn=len(gts) - tp, n_gt=len(gts),
                      confidences=conf[order], flags=flags[order])


def match_to_gt(predictions: Sequence[FinalPrediction], gts: Sequence[GroundTruthObject],
                iou_threshold: float = 0.5) -> MatchOutcome:
    """Greedy per-label matching, highest confidence first.

    Each prediction claims the unmatched same-label ground truth with the
    highest IoU at or above ``iou_threshold`` (TP), otherwise it is a FP.
    Ground truths left over are FN.
    """
    by_pred: Dict[Hashable, list] = {}
    by_gt: Dict[Hashable, list] = {}
    for p in predictions:
        by_pred.setdefault(p.label, []).append(p)
    for g in gts:
        by_gt.setdefault(g.label, []).append(g)
    labels = list(dict.fromkeys(list(by_gt) + list(by_pred)))
    return MatchOutcome({lab: _match_class(by_pred.get(lab, []), by_gt.get(lab, []), iou_threshold)
                         for lab in labels})


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def u_precision(outcome: MatchOutcome) -> float:
    return _ratio(outcome.tp_u, outcome.tp_u + outcome.fp_u)


def u_recall(outcome: MatchOutcome) -> float:
    return _ratio(outcome.tp_u, outcome.tp_u + outcome.fn_u)


def f1_score(precision: float, recall: float) -> float:
    return _ratio(2.0 * precision * recall, precision + recall)


def u_f1(outcome: MatchOutcome) -> float:
    return f1_score(u_precision(outcome), u_recall(outcome))


def pr_curve(flags, total_positives: int) -> Tuple[np.ndarray, np.ndarray]:
    """Recall and precision after each ranked detection."""
    flags = np.asarray(flags, dtype=bool)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / total_positives if total_positives > 0 else np.zeros(flags.size)
    precision = tp / np.maximum(tp + fp, 1)
    return recall, precision


def average_precision(flags, total_positives: int) -> float:
    """All-points interpolated area under the precision/recall curve.

    ``flags`` are TP/FP markers already ranked by descending confidence.
    """
    flags = np.asarray(flags, dtype=bool)
    if total_positives <= 0 or flags.size == 0:
        return 0.0
    recall, precision = pr_curve(flags, total_positives)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    step = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[step + 1] - mrec[step]) * mpre[step + 1]))


def _known_labels(scene_gts) -> List[int]:
    return sorted({g.label for gts in scene_gts for g in gts if not g.is_unknown})


def dataset_map(scene_preds: Sequence[Sequence[FinalPrediction]],
                scene_gts: Sequence[Sequence[GroundTruthObject]],
                thresholds: Sequence[float] = COCO_THRESHOLDS) -> float:
    """Known-class AP averaged over IoU thresholds, then over classes with ground truth."""
    labels = _known_labels(scene_gts)
    if not labels:
        return 0.0
    per_class = np.zeros((len(labels), len(thresholds)))
    for t_i, thr in enumerate(thresholds):
        merged = MatchOutcome()
        for preds, gts in zip(scene_preds, scene_gts):
            merged = merged.merge(match_to_gt([p for p in preds if not p.is_unknown],
                                              [g for g in gts if not g.is_unknown], thr))
        for c_i, lab in enumerate(labels):
            cm = merged.get(lab)
            per_class[c_i, t_i] = average_precision(cm.ranked_flags(), cm.n_gt)
    return float(per_class.mean(axis=1).mean())


def map_over_thresholds(predictions: Sequence[FinalPrediction],
                        gts: Sequence[GroundTruthObject],
                        thresholds: Sequence[float] = COCO_THRESHOLDS) -> float:
    """Single-scene form of :func:`dataset_map`."""
    return dataset_map([predictions], [gts], thresholds)


def evaluate_dataset(scene_preds: Sequence[Sequence[FinalPrediction]],
                     scene_gts: Sequence[Sequence[GroundTruthObject]],
                     iou_threshold: float = 0.5) -> EvalReport:
    if len(scene_preds) != len(scene_gts):
        raise ValueError(f"{len(scene_preds)} prediction scenes but {len(scene_gts)} ground-truth scenes")
    merged = MatchOutcome()
    for preds, gts in zip(scene_preds, scene_gts):
        merged = merged.merge(match_to_gt(preds, gts, iou_threshold))
    unk = merged.get(UNKNOWN)
    known = {str(lab): {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn}
             for lab, cm in sorted(((k, v) for k, v in merged.per_class.items() if k is not UNKNOWN),
                                   key=lambda kv: kv[0])}
    counts = {
        "tp_u": merged.tp_u, "fp_u": merged.fp_u, "fn_u": merged.fn_u,
        "n_unknown_gt": unk.n_gt,
        "n_known_gt": sum(cm.n_gt for k, cm in merged.per_class.items() if k is not UNKNOWN),
        "n_predictions": sum(len(p) for p in scene_preds),
        "n_scenes": len(scene_preds),
        "known": known,
    }
    pre, rec = u_precision(merged), u_recall(merged)
    return EvalReport(
        u_ap=average_precision(unk.ranked_flags(), unk.n_gt),
        u_pre=pre, u_rec=rec, u_f1=f1_score(pre, rec),
        map_known=dataset_map(scene_preds, scene_gts),
        counts=counts,
    )
