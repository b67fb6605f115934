"""Axis-aligned boxes in normalized center format and their overlap scores.

The scalar functions here are plain Python float arithmetic; the batched
versions (``pairwise_*``) go through :mod:`unkdet.kernels`. Both use the same
operation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from . import kernels

Corners = Tuple[float, float, float, float]


@dataclass(frozen=True)
class BBox:
    """Box as ``(cx, cy, w, h)``, all fractions of the image size."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"BBox.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.w < 0 or self.h < 0:
            raise ValueError(f"BBox width/height must be >= 0, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        x1, y1, x2, y2 = to_corners(self)
        return (x2 - x1) * (y2 - y1)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "BBox":
        if len(values) != 4:
            raise ValueError(f"box needs 4 values, got {len(values)}")
        return cls(*values)


def to_corners(b: BBox) -> Corners:
    return (b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h)


def from_corners(corners: Sequence[float]) -> BBox:
    x1, y1, x2, y2 = (float(c) for c in corners)
    if x1 > x2 or y1 > y2:
        raise ValueError(f"corners must satisfy x1 <= x2 and y1 <= y2, got {tuple(corners)}")
    return BBox(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1)


def _parts(a: BBox, b: BBox):
    ax1, ay1, ax2, ay2 = to_corners(a)
    bx1, by1, bx2, by2 = to_corners(b)
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    iw = max(min(ax2, bx2) - max(ax1, bx1), 0.0)
    ih = max(min(ay2, by2) - max(ay1, by1), 0.0)
    inter = iw * ih
    union = area_a + area_b - inter
    iou_ = inter / union if union > 0.0 else 0.0
    ew = max(ax2, bx2) - min(ax1, bx1)
    eh = max(ay2, by2) - min(ay1, by1)
    return iou_, union, ew, eh


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    return _parts(a, b)[0]


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the share of the enclosing box not covered by the union."""
    iou_, union, ew, eh = _parts(a, b)
    enclose = ew * eh
    if enclose > 0.0:
        # rounding can leave the union a hair above the enclosing area
        return iou_ - max(enclose - union, 0.0) / enclose
    return iou_


def diou(a: BBox, b: BBox) -> float:
    """Distance IoU: IoU minus squared center distance over squared enclosing diagonal."""
    iou_, _, ew, eh = _parts(a, b)
    dx = a.cx - b.cx
    dy = a.cy - b.cy
    c2 = ew * ew + eh * eh
    if c2 > 0.0:
        return iou_ - (dx * dx + dy * dy) / c2
    return iou_


def boxes_to_array(boxes: Iterable[BBox]) -> np.ndarray:
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def pairwise_iou(a, b) -> np.ndarray:
    return kernels.pairwise_overlap(_as_array(a), _as_array(b), kernels.IOU)


def pairwise_giou(a, b) -> np.ndarray:
    return kernels.pairwise_overlap(_as_array(a), _as_array(b), kernels.GIOU)


def pairwise_diou(a, b) -> np.ndarray:
    return kernels.pairwise_overlap(_as_array(a), _as_array(b), kernels.DIOU)


def _as_array(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    return boxes_to_array(boxes)
