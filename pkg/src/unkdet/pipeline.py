"""End-to-end run: supervise and train the presence-score predictor on known
labels, then score, select, suppress and classify proposals and evaluate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import assignment, io, ipp, metrics, postprocess, selection, supervision
from .config import PipelineConfig
from .geometry import BBox
from .ipp import IppModel
from .metrics import EvalReport
from .postprocess import FinalPrediction
from .structures import UNKNOWN, Detection
from .supervision import LossBreakdown
from .synth import Scene

log = logging.getLogger(__name__)


@dataclass
class TrainingSet:
    embeddings: np.ndarray
    gious: np.ndarray
    targets: np.ndarray
    losses: Optional[LossBreakdown] = None

    def __len__(self):
        return self.embeddings.shape[0]

    def as_tuple(self):
        return self.embeddings, self.gious, self.targets


@dataclass
class PipelineResult:
    report: EvalReport
    model: IppModel
    trace: List[float]
    predictions: List[Tuple[str, List[FinalPrediction]]]
    train_losses: Optional[LossBreakdown] = None
    u_flags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _scene_detections(scene: Scene, scores=None) -> List[Detection]:
    p = scene.proposals
    ips = np.full(len(p), 0.5) if scores is None else scores
    return [Detection(BBox(*p.boxes[i]), p.logits[i], float(ips[i]), p.embeddings[i]) for i in range(len(p))]


def build_training_set(scenes: Sequence[Scene], cfg: PipelineConfig) -> TrainingSet:
    """Match known ground truths one-to-many and derive presence-score targets.

    Unknown objects are invisible here: only known labels supervise training.
    The returned ``losses`` are the frozen teacher's detection losses on the
    one-to-one pairs plus the presence loss of a constant 0.5 predictor, which
    serves as an untrained baseline.
    """
    sup = cfg.supervision()
    embs, gious, targets = [], [], []
    det_pairs = []
    for scene in scenes:
        gts = scene.known_gts
        if not gts:
            continue
        dets = _scene_detections(scene)
        costs = assignment.cost_matrix(dets, gts, cfg.match_lambda_cls, cfg.match_lambda_box)
        result = assignment.solve_one_to_many(costs)
        for g, p in result.positive:
            giou_val = supervision.positional_objectness(gts[g].box, dets[p].box)
            p_f = supervision.categorical_objectness(dets[p].logits)
            embs.append(scene.proposals.embeddings[p])
            gious.append(giou_val)
            targets.append(supervision.supervision_target(giou_val, p_f, sup))
        det_pairs.extend((dets[p], gts[g]) for g, p in result.best)
    if not embs:
        raise ValueError("no known ground truths to supervise the presence-score predictor")
    E = np.array(embs)
    g_arr, t_arr = np.array(gious), np.array(targets)
    l_cls, l_box = supervision.detection_losses(det_pairs)
    ips_terms = supervision.ips_loss_arrays(g_arr, t_arr, np.full(len(embs), 0.5), sup)
    losses = supervision.total_loss(ips_terms, l_cls, l_box, sup)
    return TrainingSet(E, g_arr, t_arr, losses)


def infer_scene(scene: Scene, model: IppModel, cfg: PipelineConfig) -> List[FinalPrediction]:
    scored = selection.score_proposals(scene.proposals, model)
    chosen = selection.select_topk(scored, cfg.topk)
    dets = [Detection(BBox(*chosen.boxes[i]), chosen.logits[i], float(chosen.scores[i]))
            for i in range(len(chosen))]
    return postprocess.postprocess(dets, cfg.postprocess())


def run_pipeline(scenes: Sequence[Scene], cfg: PipelineConfig = PipelineConfig(),
                 train_scenes: Optional[Sequence[Scene]] = None,
                 out_dir=None) -> PipelineResult:
    """Train on ``train_scenes`` (default: ``scenes``, known labels only) and
    evaluate on ``scenes``. Writes artifacts to ``out_dir`` when given."""
    train_scenes = scenes if train_scenes is None else train_scenes
    tset = build_training_set(train_scenes, cfg)
    model, trace = ipp.train(tset.as_tuple(), cfg.trainer(), cfg.supervision())
    log.info("trained IPP on %d positive samples, final loss %.4f", len(tset), trace[-1])

    preds = [(s.image_id, infer_scene(s, model, cfg)) for s in scenes]
    report = metrics.evaluate_dataset([p for _, p in preds], [s.gts for s in scenes], cfg.iou_threshold)
    unk_flags = _unknown_flags(preds, scenes, cfg.iou_threshold)
    result = PipelineResult(report=report, model=model, trace=trace, predictions=preds,
                            train_losses=tset.losses, u_flags=unk_flags)
    if out_dir is not None:
        write_artifacts(result, scenes, out_dir)
    return result


def _unknown_flags(preds, scenes, iou_threshold: float) -> np.ndarray:
    merged = metrics.MatchOutcome()
    for (_, p), s in zip(preds, scenes):
        merged = merged.merge(metrics.match_to_gt(p, s.gts, iou_threshold))
    return merged.get(UNKNOWN).ranked_flags()


def write_artifacts(result: PipelineResult, scenes: Sequence[Scene], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_model(out / "model.json", result.model)
    io.write_predictions(out / "predictions.jsonl", result.predictions)
    io.write_report(out / "report.json", result.report)
    n_unknown = sum(1 for s in scenes for g in s.gts if g.is_unknown)
    io.write_pr_curve(out / "pr_unknown.csv", result.u_flags, n_unknown)
    with open(out / "trace.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(result.trace, 1):
            fh.write(f"{i},{io.fmt_float(v)!r}\n")
