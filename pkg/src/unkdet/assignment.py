"""Matching cost and one-to-one / one-to-many assignment of ground truths to predictions.

Cost rows are ground truths, columns are predictions. The one-to-many result
adds a second, disjoint matching ("suboptimal") solved on the predictions the
optimal matching left over; both together are the positive set used to train
the presence-score predictor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from . import geometry, kernels
from .structures import Detection, GroundTruthObject, sigmoid

Pair = Tuple[int, int]

DEFAULT_LAMBDA_CLS = 2.0
DEFAULT_LAMBDA_BOX = 5.0


class DimensionError(ValueError):
    """Raised when there are too few predictions for a complete matching."""


@dataclass
class AssignmentResult:
    best: List[Pair] = field(default_factory=list)
    suboptimal: List[Pair] = field(default_factory=list)
    best_cost: float = 0.0
    suboptimal_cost: float = 0.0

    @property
    def positive(self) -> List[Pair]:
        return self.best + self.suboptimal

    @property
    def positive_preds(self) -> List[int]:
        return [p for _, p in self.positive]


def match_cost(prediction: Detection, gt: GroundTruthObject,
               lambda_cls: float = DEFAULT_LAMBDA_CLS,
               lambda_box: float = DEFAULT_LAMBDA_BOX) -> float:
    """``lambda_cls * -p(c_gt) + lambda_box * (1 - IoU)`` for one prediction/GT pair."""
    _check_known(gt)
    if gt.label >= prediction.num_classes:
        raise ValueError(f"gt class {gt.label} outside {prediction.num_classes} logits")
    p = sigmoid(prediction.logits[gt.label])
    return lambda_cls * (-p) + lambda_box * (1.0 - geometry.iou(prediction.box, gt.box))


def cost_matrix(predictions: Sequence[Detection], gts: Sequence[GroundTruthObject],
                lambda_cls: float = DEFAULT_LAMBDA_CLS,
                lambda_box: float = DEFAULT_LAMBDA_BOX) -> np.ndarray:
    """Dense ``(G, N)`` cost matrix, vectorized form of :func:`match_cost`."""
    G, N = len(gts), len(predictions)
    if G == 0 or N == 0:
        return np.zeros((G, N))
    for gt in gts:
        _check_known(gt)
    logits = np.stack([d.logits for d in predictions])
    labels = np.array([gt.label for gt in gts], dtype=np.int64)
    if labels.max() >= logits.shape[1]:
        raise ValueError(f"gt class {labels.max()} outside {logits.shape[1]} logits")
    prob = sigmoid(logits[:, labels]).T
    ious = geometry.pairwise_iou(geometry.boxes_to_array(gt.box for gt in gts),
                                 geometry.boxes_to_array(d.box for d in predictions))
    return lambda_cls * (-prob) + lambda_box * (1.0 - ious)


def _check_known(gt: GroundTruthObject) -> None:
    if gt.is_unknown:
        raise ValueError("matching cost is only defined for known-class ground truths")


def _validate(costs) -> np.ndarray:
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {costs.shape}")
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix entries must be finite")
    return costs


def total_cost(costs, pairs: Sequence[Pair]) -> float:
    costs = np.asarray(costs, dtype=np.float64)
    total = 0.0
    for g, p in pairs:
        total += float(costs[g, p])
    return total


def solve_optimal(costs) -> List[Pair]:
    """Minimum-cost complete matching of every row to a distinct column."""
    costs = _validate(costs)
    G, N = costs.shape
    if G > N:
        raise DimensionError(f"{G} ground truths but only {N} predictions")
    cols = kernels.linear_assignment(costs)
    return [(g, int(p)) for g, p in enumerate(cols)]


def solve_one_to_many(costs) -> AssignmentResult:
    """Optimal matching plus a second optimal matching over the remaining columns."""
    costs = _validate(costs)
    G, N = costs.shape
    if 2 * G > N:
        raise DimensionError(f"one-to-many needs 2*G <= N, got G={G}, N={N}")
    if G == 0:
        return AssignmentResult()
    best = solve_optimal(costs)
    used = np.zeros(N, dtype=bool)
    used[[p for _, p in best]] = True
    rest = np.flatnonzero(~used)
    sub_local = solve_optimal(costs[:, rest])
    suboptimal = [(g, int(rest[p])) for g, p in sub_local]
    return AssignmentResult(best=best, suboptimal=suboptimal,
                            best_cost=total_cost(costs, best),
                            suboptimal_cost=total_cost(costs, suboptimal))
