import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from unkdet import io
from unkdet.geometry import BBox
from unkdet.ipp import IppModel
from unkdet.metrics import EvalReport
from unkdet.postprocess import FinalPrediction
from unkdet.selection import ProposalSet
from unkdet.structures import UNKNOWN, GroundTruthObject
from unkdet.synth import SyntheticSceneSpec, generate_dataset


def rounded(a):
    return np.vectorize(io.fmt_float)(np.asarray(a, dtype=float))


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_float_is_idempotent(x):
    y = io.fmt_float(x)
    assert io.fmt_float(y) == y
    assert y == 0 or abs(y - x) <= abs(x) * 1e-8
    with pytest.raises(ValueError):
        io.fmt_float(float("inf"))


def test_detections_round_trip(tmp_path):
    scenes = generate_dataset(SyntheticSceneSpec(seed=1, box_noise=0.1, logit_noise=0.3), 3)
    records = [io.SceneProposals(s.image_id, s.proposals) for s in scenes]
    records.append(io.SceneProposals("empty", ProposalSet(np.zeros((0, 16)), np.zeros((0, 4)))))
    path = tmp_path / "d.jsonl"
    io.write_detections(path, records)
    back = io.read_detections(path)
    assert [r.image_id for r in back] == [r.image_id for r in records]
    for a, b in zip(records[:3], back):
        for name in ("boxes", "logits", "embeddings"):
            assert np.array_equal(rounded(getattr(a.proposals, name)), getattr(b.proposals, name))
        assert b.proposals.scores is None
    # a second write of what was read is byte-identical
    io.write_detections(tmp_path / "e.jsonl", back)
    assert (tmp_path / "e.jsonl").read_bytes() == path.read_bytes()


def test_scored_subset_keeps_ips_and_index(tmp_path):
    p = ProposalSet(np.eye(3), [[0.5, 0.5, 0.1, 0.1]] * 3, scores=[0.2, 0.9, 0.4], logits=np.zeros((3, 2)))
    sub = p.take([1, 2])
    io.write_detections(tmp_path / "d.jsonl", [io.SceneProposals("a", sub)])
    back = io.read_detections(tmp_path / "d.jsonl")[0].proposals
    assert list(back.index) == [1, 2] and list(back.scores) == [0.9, 0.4]


def test_ground_truth_and_predictions_round_trip(tmp_path):
    gts = [("a", [GroundTruthObject(BBox(0.5, 0.5, 0.25, 0.125), 2), GroundTruthObject(BBox(0.1, 0.2, 0.1, 0.1), UNKNOWN)]),
           ("b", [])]
    io.write_ground_truth(tmp_path / "g.jsonl", gts)
    assert io.read_ground_truth(tmp_path / "g.jsonl") == gts
    preds = [("a", [FinalPrediction(BBox(0.5, 0.5, 0.25, 0.125), 1, 0.75),
                    FinalPrediction(BBox(0.3, 0.3, 0.1, 0.1), UNKNOWN, 0.5)])]
    io.write_predictions(tmp_path / "p.jsonl", preds)
    assert io.read_predictions(tmp_path / "p.jsonl") == preds
    line = json.loads((tmp_path / "g.jsonl").read_text().splitlines()[0])
    assert line["objects"][1]["label"] == "unknown"


def test_report_and_model_round_trip(tmp_path):
    rep = EvalReport(u_ap=0.5, u_pre=2 / 3, u_rec=0.25, u_f1=0.125, map_known=1.0, counts={"tp_u": 3})
    io.write_report(tmp_path / "r.json", rep)
    back = io.read_report(tmp_path / "r.json")
    assert back.u_pre == io.fmt_float(2 / 3) and back.counts == {"tp_u": 3}
    assert set(json.loads((tmp_path / "r.json").read_text())) == {"u_ap", "u_pre", "u_rec", "u_f1", "map_known", "counts"}
    m = IppModel(np.array([0.5, -0.25, 1.0]), 0.125)
    io.write_model(tmp_path / "m.json", m)
    assert np.array_equal(io.read_model(tmp_path / "m.json").params(), m.params())


BAD_DETECTIONS = [
    ('{"image_id": 3, "proposals": []}', "image_id"),
    ('{"image_id": "a"}', "proposals"),
    ('{"image_id": "a", "proposals": [{"box": [0.5, 0.5, 0.1], "logits": [0], "embedding": [0]}]}', "proposals[0].box"),
    ('{"image_id": "a", "proposals": [{"box": [0.5, 0.5, -0.1, 0.1], "logits": [0], "embedding": [0]}]}', "proposals[0].box"),
    ('{"image_id": "a", "proposals": [{"box": [0.5, 0.5, 0.1, 0.1], "embedding": [0]}]}', "proposals[0].logits"),
    ('{"image_id": "a", "proposals": [{"box": [0.5, 0.5, 0.1, 0.1], "logits": [0], "embedding": [0], "ips": 2}]}', "proposals[0].ips"),
    ('{"image_id": "a", "proposals": [{"box": [0.5,0.5,0.1,0.1], "logits": [0], "embedding": [0]}, '
     '{"box": [0.5,0.5,0.1,0.1], "logits": [0, 1], "embedding": [0]}]}', "proposals[1].logits"),
    ('not json', "invalid JSON"),
]


@pytest.mark.parametrize("line,field", BAD_DETECTIONS)
def test_detection_schema_errors(tmp_path, line, field):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"image_id": "ok", "proposals": []}\n' + line + "\n")
    with pytest.raises(io.SchemaError) as info:
        io.read_detections(path)
    assert f"{path}:2" in str(info.value) and field in str(info.value)


@pytest.mark.parametrize("label", ['"other"', "-1", "1.5", "true"])
def test_ground_truth_bad_label(tmp_path, label):
    path = tmp_path / "g.jsonl"
    path.write_text('{"image_id": "a", "objects": [{"box": [0.5, 0.5, 0.1, 0.1], "label": %s}]}\n' % label)
    with pytest.raises(io.SchemaError, match=r"objects\[0\]\.label"):
        io.read_ground_truth(path)


def test_model_schema_errors(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"dim": 3, "weights": [1, 2], "bias": 0}')
    with pytest.raises(io.SchemaError, match="weights"):
        io.read_model(path)
    path.write_text('{"dim": 2, "weights": [1, 2]}')
    with pytest.raises(io.SchemaError, match="bias"):
        io.read_model(path)
