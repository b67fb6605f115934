"""Targets and losses for jointly supervised instance presence scores.

The target for a positive query mixes a positional signal (GIoU against the
matched ground truth) with a categorical one (summed per-class sigmoid
confidence, clamped to 1). Queries whose GIoU is at most ``tau`` are pulled
towards the constant ``c_const`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from . import geometry
from .geometry import BBox
from .structures import ConfigError, Detection, GroundTruthObject, sigmoid


@dataclass(frozen=True)
class SupervisionConfig:
    alpha: float = 0.6
    beta: float = 0.4
    c_const: float = 0.5
    tau: float = 0.6
    lambda_ips: float = 3.0
    lambda_cls: float = 2.0
    lambda_box: float = 5.0

    def __post_init__(self):
        validate_supervision(self)


def validate_supervision(cfg: SupervisionConfig) -> None:
    for f in fields(cfg):
        if not np.isfinite(getattr(cfg, f.name)):
            raise ConfigError(f.name, "must be finite")
    if cfg.alpha < 0:
        raise ConfigError("alpha", f"must be >= 0, got {cfg.alpha}")
    if cfg.beta < 0:
        raise ConfigError("beta", f"must be >= 0, got {cfg.beta}")
    if abs(cfg.alpha + cfg.beta - 1.0) > 1e-9:
        raise ConfigError("beta", f"alpha + beta must equal 1, got {cfg.alpha + cfg.beta}")
    if not 0.0 <= cfg.c_const <= 1.0:
        raise ConfigError("c_const", f"must lie in [0, 1], got {cfg.c_const}")
    if not -1.0 < cfg.tau <= 1.0:
        raise ConfigError("tau", f"must lie in (-1, 1], got {cfg.tau}")
    for name in ("lambda_ips", "lambda_cls", "lambda_box"):
        if getattr(cfg, name) < 0:
            raise ConfigError(name, "must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    l_ips_h: Optional[float]
    l_ips_l: Optional[float]
    l_ips: float
    l_cls: float
    l_box: float
    total: float


def positional_objectness(gt_box: BBox, pred_box: BBox) -> float:
    return geometry.giou(gt_box, pred_box)


def categorical_objectness(logits) -> float:
    """Summed per-class sigmoid confidence, clamped to at most 1."""
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    if logits.size == 0:
        raise ValueError("need at least one logit")
    return min(1.0, float(np.sum(sigmoid(logits))))


def supervision_target(giou_val: float, p_f: float, cfg: SupervisionConfig = SupervisionConfig()) -> float:
    return cfg.alpha * giou_val + cfg.beta * p_f


def branch_targets(giou_vals, targets, cfg: SupervisionConfig):
    """Per-sample regression target and high-branch mask.

    Samples with GIoU above ``tau`` regress to their own target, the rest to
    ``c_const``.
    """
    giou_vals = np.asarray(giou_vals, dtype=np.float64)
    high = giou_vals > cfg.tau
    goal = np.where(high, np.asarray(targets, dtype=np.float64), cfg.c_const)
    return goal, high


def ips_loss_arrays(giou_vals, targets, ips, cfg: SupervisionConfig) -> Tuple[float, float, float]:
    goal, high = branch_targets(giou_vals, targets, cfg)
    resid = np.abs(goal - np.asarray(ips, dtype=np.float64))
    l_h = float(resid[high].mean()) if high.any() else 0.0
    l_l = float(resid[~high].mean()) if (~high).any() else 0.0
    return l_h, l_l, l_h + l_l


def ips_loss(samples: Iterable[Tuple[float, float, float]],
             cfg: SupervisionConfig = SupervisionConfig()) -> Tuple[float, float, float]:
    """L1 presence-score loss over ``(giou, target, predicted_ips)`` samples.

    Returns ``(high_branch, low_branch, total)``; each branch is the mean over
    its own members and an empty branch contributes 0.
    """
    samples = list(samples)
    if not samples:
        return 0.0, 0.0, 0.0
    arr = np.asarray(samples, dtype=np.float64).reshape(-1, 3)
    return ips_loss_arrays(arr[:, 0], arr[:, 1], arr[:, 2], cfg)


def sigmoid_focal_loss(logits, onehot, gamma: float = 2.0, alpha: float = 0.25) -> np.ndarray:
    """Element-wise sigmoid focal loss."""
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(onehot, dtype=np.float64)
    p = sigmoid(x)
    # binary cross-entropy with logits, stable form
    ce = np.logaddexp(0.0, x) - x * y
    p_t = p * y + (1.0 - p) * (1.0 - y)
    a_t = alpha * y + (1.0 - alpha) * (1.0 - y)
    return a_t * ce * (1.0 - p_t) ** gamma


def detection_losses(pairs: Sequence[Tuple[Detection, GroundTruthObject]],
                     l1_weight: float = 5.0, giou_weight: float = 2.0) -> Tuple[float, float]:
    """Classification and box losses over one-to-one matched pairs.

    ``l_cls`` is the sigmoid focal loss averaged over classes and pairs;
    ``l_box`` averages ``l1_weight * L1 + giou_weight * (1 - GIoU)`` over pairs.
    """
    if not pairs:
        return 0.0, 0.0
    cls_terms = []
    box_terms = []
    for det, gt in pairs:
        if gt.is_unknown:
            raise ValueError("detection losses need known-class ground truths")
        if gt.label >= det.num_classes:
            raise ValueError(f"gt class {gt.label} outside {det.num_classes} logits")
        onehot = np.zeros(det.num_classes)
        onehot[gt.label] = 1.0
        cls_terms.append(sigmoid_focal_loss(det.logits, onehot).mean())
        l1 = sum(abs(p - g) for p, g in zip(det.box.as_tuple(), gt.box.as_tuple()))
        box_terms.append(l1_weight * l1 + giou_weight * (1.0 - geometry.giou(det.box, gt.box)))
    return float(np.mean(cls_terms)), float(np.mean(box_terms))


def total_loss(l_ips, l_cls: float, l_box: float,
               cfg: SupervisionConfig = SupervisionConfig()) -> LossBreakdown:
    """Weighted sum ``lambda_ips * l_ips + lambda_cls * l_cls + lambda_box * l_box``.

    ``l_ips`` is either the scalar presence loss or the ``(high, low, total)``
    triple returned by :func:`ips_loss`; only the triple fills in the branch
    fields of the breakdown.
    """
    if isinstance(l_ips, (tuple, list)):
        l_ips_h, l_ips_l, l_ips = (float(v) for v in l_ips)
    else:
        l_ips_h = l_ips_l = None
        l_ips = float(l_ips)
    if min(l_ips, l_cls, l_box) < 0:
        raise ValueError("loss components must be nonnegative")
    total = cfg.lambda_ips * l_ips + cfg.lambda_cls * l_cls + cfg.lambda_box * l_box
    return LossBreakdown(l_ips_h=l_ips_h, l_ips_l=l_ips_l, l_ips=l_ips,
                         l_cls=float(l_cls), l_box=float(l_box), total=total)
