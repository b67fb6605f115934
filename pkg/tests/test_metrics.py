import itertools

import numpy as np
import pytest

from unkdet.geometry import BBox, iou
from unkdet.metrics import (COCO_THRESHOLDS, MatchOutcome, ClassMatch, average_precision, dataset_map,
                            evaluate_dataset, f1_score, map_over_thresholds, match_to_gt, u_f1,
                            u_precision, u_recall)
from unkdet.postprocess import FinalPrediction
from unkdet.structures import UNKNOWN, GroundTruthObject

import oracles


def outcome(tp, fp, fn):
    return MatchOutcome({UNKNOWN: ClassMatch(tp=tp, fp=fp, fn=fn, n_gt=tp + fn)})


def pred(box, label=UNKNOWN, conf=0.9):
    return FinalPrediction(BBox(*box), label, conf)


def gt(box, label=UNKNOWN):
    return GroundTruthObject(BBox(*box), label)


def test_rate_fixtures():
    o = outcome(2, 1, 2)
    assert u_precision(o) == pytest.approx(2 / 3, abs=1e-12)
    assert u_recall(o) == pytest.approx(0.5, abs=1e-12)
    assert u_f1(o) == pytest.approx(4 / 7, abs=1e-12)
    assert (u_precision(outcome(0, 0, 0)), u_recall(outcome(0, 0, 0)), u_f1(outcome(0, 0, 0))) == (0, 0, 0)
    assert (u_precision(outcome(3, 0, 0)), u_recall(outcome(3, 0, 0)), u_f1(outcome(3, 0, 0))) == (1, 1, 1)


def test_f1_is_harmonic_mean():
    rng = np.random.default_rng(0)
    for p, r in rng.random((200, 2)):
        assert f1_score(p, r) == 2 * p * r / (p + r)


def test_match_examples():
    box = (0.5, 0.5, 0.2, 0.2)
    o = match_to_gt([pred(box)], [gt(box)])
    assert (o.tp_u, o.fp_u, o.fn_u) == (1, 0, 0)
    o = match_to_gt([pred(box, conf=0.9), pred((0.51, 0.5, 0.2, 0.2), conf=0.8)], [gt(box)])
    assert (o.tp_u, o.fp_u, o.fn_u) == (1, 1, 0)
    # shifting by d gives IoU (0.2 - d) / (0.2 + d), which is 0.4 at d = 0.6 / 7
    shifted = (0.5 + 0.6 / 7, 0.5, 0.2, 0.2)
    assert iou(BBox(*shifted), BBox(*box)) == pytest.approx(0.4)
    o = match_to_gt([pred(shifted)], [gt(box)], 0.5)
    assert (o.tp_u, o.fp_u, o.fn_u) == (0, 1, 1)


def test_match_prefers_highest_iou_and_confidence():
    g1, g2 = gt((0.5, 0.5, 0.2, 0.2)), gt((0.56, 0.5, 0.2, 0.2))
    p = pred((0.55, 0.5, 0.2, 0.2), conf=0.9)
    o = match_to_gt([p], [g1, g2])
    assert o.tp_u == 1 and o.fn_u == 1
    # the confident prediction claims the object, the weaker duplicate is the FP
    box = (0.5, 0.5, 0.2, 0.2)
    o = match_to_gt([pred(box, conf=0.3), pred(box, conf=0.8)], [gt(box)])
    assert list(o.get(UNKNOWN).flags) == [True, False]


def test_cross_category_never_matches():
    box = (0.5, 0.5, 0.2, 0.2)
    o = match_to_gt([pred(box, label=0)], [gt(box)])
    assert o.fn_u == 1 and o.get(0).fp == 1


def test_ap_examples():
    assert average_precision([True, False, True], 2) == pytest.approx(0.5 + 0.5 * 2 / 3)
    assert average_precision([True] * 4, 4) == 1.0
    assert average_precision([False] * 3, 2) == 0.0
    assert average_precision([], 3) == 0.0 and average_precision([True], 0) == 0.0


def test_ap_exhaustive_against_pr_oracle():
    for n in range(0, 13):
        for flags in itertools.product([False, True], repeat=n):
            tp = sum(flags)
            for n_pos in {max(tp, 1), tp + 1, tp + 3}:
                assert average_precision(flags, n_pos) == pytest.approx(oracles.brute_ap(flags, n_pos), abs=1e-12)


def test_ap_monotone_properties():
    rng = np.random.default_rng(1)
    for _ in range(300):
        flags = list(rng.random(int(rng.integers(1, 15))) < 0.5)
        n_pos = sum(flags) + int(rng.integers(0, 3))
        if n_pos == 0:
            continue
        ap = average_precision(flags, n_pos)
        assert 0.0 <= ap <= 1.0
        assert average_precision(flags + [False], n_pos) <= ap + 1e-15


def test_ap_depends_on_ranking_only():
    rng = np.random.default_rng(2)
    gts = [gt((0.1 + 0.2 * i, 0.5, 0.1, 0.1)) for i in range(4)]
    preds = [pred((0.1 + 0.2 * (i % 5), 0.5, 0.1, 0.1), conf=float(c)) for i, c in enumerate(rng.random(8))]
    base = match_to_gt(preds, gts).get(UNKNOWN)
    warped = [FinalPrediction(p.box, p.label, p.confidence ** 3) for p in preds]
    other = match_to_gt(warped, gts).get(UNKNOWN)
    assert average_precision(base.ranked_flags(), 4) == average_precision(other.ranked_flags(), 4)


def test_map_step_at_iou_07():
    unit = gt((0.5, 0.5, 1.0, 1.0), 0)
    p = pred((0.35, 0.5, 0.7, 1.0), 0)
    per = [dataset_map([[p]], [[unit]], [t]) for t in COCO_THRESHOLDS]
    assert per == [1.0 if t <= 0.7 else 0.0 for t in COCO_THRESHOLDS]
    assert map_over_thresholds([p], [unit]) == 0.5
    assert map_over_thresholds([pred((0.5, 0.5, 1, 1), 0)], [unit]) == 1.0
    assert map_over_thresholds([], []) == 0.0


def planted_scenes(seed, n_scenes=200, n_unknown=4, detect=2):
    rng = np.random.default_rng(seed)
    preds, gts = [], []
    for _ in range(n_scenes):
        xs = rng.permutation(8)[:n_unknown]
        objs = [gt((0.06 + 0.12 * x, 0.5, 0.1, 0.1)) for x in xs]
        hit = rng.permutation(n_unknown)[:detect]
        preds.append([pred((o.box.cx + rng.uniform(-0.005, 0.005), 0.5, 0.1, 0.1), conf=float(rng.random()))
                      for o in (objs[i] for i in hit)])
        gts.append(objs)
    return preds, gts


def test_planted_recall():
    preds, gts = planted_scenes(3)
    rep = evaluate_dataset(preds, gts)
    assert rep.u_rec == pytest.approx(0.5, abs=0.02)
    assert rep.u_pre == 1.0
    assert rep.counts["tp_u"] + rep.counts["fn_u"] == rep.counts["n_unknown_gt"] == 800


def test_duplicate_injection():
    preds, gts = planted_scenes(4)
    base = evaluate_dataset(preds, gts)
    dup = [p + [FinalPrediction(q.box, q.label, q.confidence / 2) for q in p[:1]] for p in preds]
    worse = evaluate_dataset(dup, gts)
    assert worse.u_pre < base.u_pre and worse.u_rec == base.u_rec


def test_empty_and_mismatch():
    rep = evaluate_dataset([], [])
    assert (rep.u_ap, rep.u_pre, rep.u_rec, rep.u_f1, rep.map_known) == (0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        evaluate_dataset([[]], [])


def test_outcome_merge_is_associative():
    preds, gts = planted_scenes(5, n_scenes=6)
    outs = [match_to_gt(p, g) for p, g in zip(preds, gts)]
    left = outs[0].merge(outs[1]).merge(outs[2])
    right = outs[0].merge(outs[1].merge(outs[2]))
    for o in (left, right):
        assert (o.tp_u, o.fp_u, o.fn_u) == (left.tp_u, left.fp_u, left.fn_u)
