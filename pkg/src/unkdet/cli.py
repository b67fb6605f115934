"""Command line entry point.

Every subcommand accepts ``--config FILE``, ``--seed``, ``--out DIR`` and one
flag per configuration key (``--ips-threshold`` or ``--ips_threshold``), plus
the short aliases ``--nms-diou``, ``--cls-thresh`` and ``--ips-thresh``.
Exit status: 0 on success, 2 on invalid input or configuration, 1 on any
other failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import List, Optional

from . import assignment, io, ipp, metrics, postprocess, selection
from ._accel import backend_name
from .assignment import DimensionError
from .config import PipelineConfig, load_config
from .geometry import BBox
from .io import SceneProposals, SchemaError
from .pipeline import build_training_set, run_pipeline
from .structures import ConfigError, Detection
from .synth import Scene, generate_dataset

log = logging.getLogger("unkdet")

ALIASES = {
    "nms_diou_threshold": ["--nms-diou"],
    "known_cls_threshold": ["--cls-thresh"],
    "ips_threshold": ["--ips-thresh"],
}


class UsageError(ValueError):
    pass


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    g = parent.add_argument_group("configuration")
    g.add_argument("--config", type=Path, help="flat JSON config file")
    g.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    g.add_argument("--log-level", default="WARNING")
    for f in fields(PipelineConfig):
        flags = [f"--{f.name.replace('_', '-')}"]
        if "_" in f.name:
            flags.append(f"--{f.name}")
        flags += ALIASES.get(f.name, [])
        kind = int if f.type in ("int", int) else float
        g.add_argument(*flags, dest=f"cfg_{f.name}", type=kind, default=None, metavar=kind.__name__.upper())
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unkdet", description="Unknown-object detection toolkit for detector outputs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({backend_name()} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _config_parent()

    p = sub.add_parser("synth", parents=[parent], help="generate synthetic detections and ground truth")
    p.add_argument("--split", default="eval", help="file name prefix (default: eval)")

    p = sub.add_parser("match", parents=[parent], help="one-to-many assignment per scene")
    _inputs(p, detections=True, gt=True)

    p = sub.add_parser("train-ipp", parents=[parent], help="train the presence-score predictor")
    _inputs(p, detections=True, gt=True)

    p = sub.add_parser("select", parents=[parent], help="score proposals and keep the top k")
    _inputs(p, detections=True)
    p.add_argument("--model", type=Path, required=True)

    p = sub.add_parser("nms", parents=[parent], help="presence-score guided DIoU NMS")
    _inputs(p, detections=True)

    p = sub.add_parser("classify", parents=[parent], help="known / unknown / background verdicts")
    _inputs(p, detections=True)

    p = sub.add_parser("evaluate", parents=[parent], help="compute the unknown-detection metrics")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)

    p = sub.add_parser("pipeline", parents=[parent], help="train, infer and evaluate end to end")
    p.add_argument("--detections", type=Path, help="evaluation detections (default: synthesize)")
    p.add_argument("--gt", type=Path)
    p.add_argument("--train-detections", type=Path)
    p.add_argument("--train-gt", type=Path)
    return parser


def _inputs(p, detections=False, gt=False):
    if detections:
        p.add_argument("--detections", type=Path, required=True)
    if gt:
        p.add_argument("--gt", type=Path, required=True)


def resolve_config(args) -> PipelineConfig:
    data = {}
    if args.config is not None:
        data = load_config(args.config).as_dict()
    for f in fields(PipelineConfig):
        value = getattr(args, f"cfg_{f.name}")
        if value is not None:
            data[f.name] = value
    return PipelineConfig.from_mapping(data)


def _scenes_from_files(det_path: Path, gt_path: Path) -> List[Scene]:
    dets = io.read_detections(det_path)
    gts = dict(io.read_ground_truth(gt_path))
    scenes = []
    for sp in dets:
        if sp.image_id not in gts:
            raise SchemaError(f"{gt_path}: no ground truth for image_id {sp.image_id!r}")
        if sp.proposals.logits is None and len(sp.proposals):
            raise SchemaError(f"{det_path}: image {sp.image_id!r} has no logits")
        scenes.append(Scene(sp.image_id, gts[sp.image_id], sp.proposals))
    missing = set(gts) - {s.image_id for s in scenes}
    if missing:
        raise SchemaError(f"{det_path}: no detections for image_id {sorted(missing)[0]!r}")
    return scenes


def _write_scenes(out: Path, prefix: str, scenes: List[Scene]) -> None:
    io.write_detections(out / f"{prefix}_detections.jsonl",
                        [SceneProposals(s.image_id, s.proposals) for s in scenes])
    io.write_ground_truth(out / f"{prefix}_gt.jsonl", [(s.image_id, s.gts) for s in scenes])


def _print_report(report: metrics.EvalReport) -> None:
    for key in io.REPORT_KEYS:
        print(f"{key:>10s}  {getattr(report, key):.4f}")
    c = report.counts
    print(f"{'counts':>10s}  tp_u={c.get('tp_u')} fp_u={c.get('fp_u')} fn_u={c.get('fn_u')}")


def cmd_synth(args, cfg):
    scenes = generate_dataset(cfg.synth(), cfg.n_scenes)
    _write_scenes(args.out, args.split, scenes)
    print(f"wrote {len(scenes)} scenes to {args.out}")


def cmd_match(args, cfg):
    scenes = _scenes_from_files(args.detections, args.gt)
    records = []
    for s in scenes:
        known_idx = [i for i, g in enumerate(s.gts) if not g.is_unknown]
        dets = _plain_detections(s.proposals)
        costs = assignment.cost_matrix(dets, [s.gts[i] for i in known_idx],
                                       cfg.match_lambda_cls, cfg.match_lambda_box)
        res = assignment.solve_one_to_many(costs)
        records.append({
            "image_id": s.image_id,
            "best": [[known_idx[g], p] for g, p in res.best],
            "suboptimal": [[known_idx[g], p] for g, p in res.suboptimal],
            "best_cost": io.fmt_float(res.best_cost),
            "suboptimal_cost": io.fmt_float(res.suboptimal_cost),
        })
    io.write_jsonl(args.out / "matches.jsonl", records)
    print(f"matched {len(records)} scenes -> {args.out / 'matches.jsonl'}")


def _plain_detections(props):
    return [Detection(BBox(*props.boxes[i]), props.logits[i], 0.5) for i in range(len(props))]


def cmd_train(args, cfg):
    scenes = _scenes_from_files(args.detections, args.gt)
    tset = build_training_set(scenes, cfg)
    model, trace = ipp.train(tset.as_tuple(), cfg.trainer(), cfg.supervision())
    io.write_model(args.out / "model.json", model)
    print(f"trained on {len(tset)} positives, final loss {trace[-1]:.4f} -> {args.out / 'model.json'}")


def cmd_select(args, cfg):
    model = io.read_model(args.model)
    out = []
    for sp in io.read_detections(args.detections):
        scored = selection.score_proposals(sp.proposals, model)
        out.append(SceneProposals(sp.image_id, selection.select_topk(scored, cfg.topk)))
    io.write_detections(args.out / "selected.jsonl", out)
    print(f"selected top-{cfg.topk} in {len(out)} scenes -> {args.out / 'selected.jsonl'}")


def _require_scores(sp: SceneProposals, path: Path) -> None:
    if sp.proposals.scores is None and len(sp.proposals):
        raise SchemaError(f"{path}: image {sp.image_id!r}: proposals need an 'ips' field (run select first)")


def cmd_nms(args, cfg):
    out = []
    for sp in io.read_detections(args.detections):
        _require_scores(sp, args.detections)
        keep = postprocess.nms_indices(sp.proposals.boxes, sp.proposals.scores, cfg.nms_diou_threshold) \
            if len(sp.proposals) else []
        out.append(SceneProposals(sp.image_id, sp.proposals.take(keep)))
    io.write_detections(args.out / "nms.jsonl", out)
    print(f"suppressed duplicates in {len(out)} scenes -> {args.out / 'nms.jsonl'}")


def cmd_classify(args, cfg):
    pcfg = cfg.postprocess()
    out = []
    for sp in io.read_detections(args.detections):
        _require_scores(sp, args.detections)
        preds = []
        if len(sp.proposals):
            for det in io.detections_from_proposals(sp.proposals):
                verdict = postprocess.dual_criteria(det, pcfg)
                if verdict is not None:
                    preds.append(verdict)
        out.append((sp.image_id, preds))
    io.write_predictions(args.out / "predictions.jsonl", out)
    print(f"classified {len(out)} scenes -> {args.out / 'predictions.jsonl'}")


def cmd_evaluate(args, cfg):
    preds = dict(io.read_predictions(args.predictions))
    gts = io.read_ground_truth(args.gt)
    extra = set(preds) - {i for i, _ in gts}
    if extra:
        raise SchemaError(f"{args.predictions}: image_id {sorted(extra)[0]!r} not in ground truth")
    report = metrics.evaluate_dataset([preds.get(i, []) for i, _ in gts], [g for _, g in gts],
                                      cfg.iou_threshold)
    io.write_report(args.out / "report.json", report)
    _print_report(report)


def cmd_pipeline(args, cfg):
    if (args.detections is None) != (args.gt is None):
        raise UsageError("--detections and --gt must be given together")
    if (args.train_detections is None) != (args.train_gt is None):
        raise UsageError("--train-detections and --train-gt must be given together")
    if args.detections is not None:
        scenes = _scenes_from_files(args.detections, args.gt)
    else:
        scenes = generate_dataset(cfg.synth(), cfg.n_scenes)
        _write_scenes(args.out, "eval", scenes)
    if args.train_detections is not None:
        train = _scenes_from_files(args.train_detections, args.train_gt)
    elif args.detections is None:
        # separate seed stream for the training split
        train = generate_dataset(cfg.synth(seed=cfg.seed + 1_000_003), cfg.n_train_scenes)
        _write_scenes(args.out, "train", train)
    else:
        train = None
    result = run_pipeline(scenes, cfg, train_scenes=train, out_dir=args.out)
    _print_report(result.report)


COMMANDS = {
    "synth": cmd_synth, "match": cmd_match, "train-ipp": cmd_train, "select": cmd_select,
    "nms": cmd_nms, "classify": cmd_classify, "evaluate": cmd_evaluate, "pipeline": cmd_pipeline,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, SchemaError, UsageError, DimensionError) as exc:
        print(f"unkdet: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.debug("failure", exc_info=True)
        print(f"unkdet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
