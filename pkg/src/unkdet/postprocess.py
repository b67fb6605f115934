"""Presence-score guided NMS and the known / unknown / background verdict."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import geometry, kernels
from .geometry import BBox
from .structures import UNKNOWN, ConfigError, Detection, Label, sigmoid


@dataclass(frozen=True)
class PostprocessConfig:
    nms_diou_threshold: float = 0.5
    known_cls_threshold: float = 0.5
    ips_threshold: float = 0.5

    def __post_init__(self):
        if not -1.0 <= self.nms_diou_threshold <= 1.0:
            raise ConfigError("nms_diou_threshold", f"must lie in [-1, 1], got {self.nms_diou_threshold}")
        for name in ("known_cls_threshold", "ips_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(name, f"must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class FinalPrediction:
    """A surviving detection with its verdict.

    ``label`` is a known class index or ``UNKNOWN``; ``confidence`` is the
    class probability for known verdicts and the presence score for unknown.
    """

    box: BBox
    label: Label
    confidence: float

    @property
    def is_unknown(self) -> bool:
        return self.label is UNKNOWN


def nms_indices(boxes, ips, threshold: float) -> np.ndarray:
    """Kept positions, in descending presence-score order."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if boxes.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return kernels.greedy_nms(boxes, ips, threshold, kernels.DIOU)


def ips_guided_nms(detections: Sequence[Detection],
                   cfg: PostprocessConfig = PostprocessConfig()) -> List[Detection]:
    """Greedy DIoU suppression ranked by presence score (ties by input order)."""
    if not detections:
        return []
    boxes = geometry.boxes_to_array(d.box for d in detections)
    ips = np.array([d.ips for d in detections])
    return [detections[i] for i in nms_indices(boxes, ips, cfg.nms_diou_threshold)]


def class_confidence(logits) -> tuple:
    """``(max_k sigmoid(logit_k), argmax)``."""
    probs = np.atleast_1d(sigmoid(np.asarray(logits, dtype=np.float64)))
    k = int(np.argmax(probs))
    return float(probs[k]), k


def dual_criteria(detection: Detection,
                  cfg: PostprocessConfig = PostprocessConfig()) -> Optional[FinalPrediction]:
    """Known if class and presence scores both clear their thresholds, unknown if
    only the presence score does, ``None`` (background) otherwise."""
    p_star, cls = class_confidence(detection.logits)
    if detection.ips < cfg.ips_threshold:
        return None
    if p_star >= cfg.known_cls_threshold:
        return FinalPrediction(detection.box, cls, p_star)
    return FinalPrediction(detection.box, UNKNOWN, detection.ips)


def postprocess(detections: Sequence[Detection],
                cfg: PostprocessConfig = PostprocessConfig()) -> List[FinalPrediction]:
    out = []
    for det in ips_guided_nms(detections, cfg):
        pred = dual_criteria(det, cfg)
        if pred is not None:
            out.append(pred)
    return out
