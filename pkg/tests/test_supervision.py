import numpy as np
import pytest
from hypothesis import given, strategies as st

from unkdet.geometry import BBox, from_corners
from unkdet.structures import UNKNOWN, ConfigError, Detection, GroundTruthObject
from unkdet.supervision import (SupervisionConfig, categorical_objectness, detection_losses,
                                ips_loss, positional_objectness, sigmoid_focal_loss,
                                supervision_target, total_loss)

CFG = SupervisionConfig()
unit = st.floats(0, 1)


def test_default_hyperparameters():
    assert (CFG.alpha, CFG.beta, CFG.c_const, CFG.tau) == (0.6, 0.4, 0.5, 0.6)
    assert (CFG.lambda_ips, CFG.lambda_cls, CFG.lambda_box) == (3.0, 2.0, 5.0)


@pytest.mark.parametrize("field,kwargs", [
    ("beta", dict(alpha=0.7, beta=0.4)),
    ("alpha", dict(alpha=-0.1, beta=1.1)),
    ("c_const", dict(c_const=1.5)),
    ("tau", dict(tau=-1.0)),
    ("lambda_box", dict(lambda_box=-1.0)),
])
def test_config_errors_name_the_field(field, kwargs):
    with pytest.raises(ConfigError) as info:
        SupervisionConfig(**kwargs)
    assert info.value.field == field


def test_positional_objectness():
    a, b = from_corners((0, 0, 2, 2)), from_corners((1, 1, 3, 3))
    assert positional_objectness(a, a) == 1.0
    assert positional_objectness(a, b) == pytest.approx(-0.079365, abs=1e-6)
    assert positional_objectness(from_corners((0, 0, 1, 1)), from_corners((2, 2, 3, 3))) == pytest.approx(-7 / 9)


def test_categorical_objectness():
    assert categorical_objectness([-800.0, -800.0]) == 0.0
    assert categorical_objectness([0.0]) == 0.5
    logits = np.log(np.array([0.9, 0.4, 0.3]) / (1 - np.array([0.9, 0.4, 0.3])))
    assert categorical_objectness(logits) == 1.0
    assert categorical_objectness(np.log([0.1 / 0.9, 0.2 / 0.8])) == pytest.approx(0.3)


def test_supervision_target():
    assert supervision_target(0.8, 0.9, CFG) == pytest.approx(0.84, abs=1e-15)
    assert supervision_target(1.0, 1.0, SupervisionConfig(alpha=0.3, beta=0.7)) == pytest.approx(1.0)
    assert supervision_target(1.0, 0.0, CFG) == pytest.approx(0.6)


def test_ips_loss_examples():
    h, l, t = ips_loss([(0.8, 0.84, 0.5)], CFG)
    assert (h, l) == (pytest.approx(0.34, abs=1e-12), 0.0) and t == h
    h, l, t = ips_loss([(0.5, 0.123, 0.3)], CFG)
    assert h == 0.0 and l == pytest.approx(0.2, abs=1e-12) and t == l
    assert ips_loss([(0.9, 0.7, 0.7), (0.1, 0.9, 0.5)], CFG) == (0.0, 0.0, 0.0)
    assert ips_loss([], CFG) == (0.0, 0.0, 0.0)


def test_branch_means_are_per_branch():
    samples = [(0.9, 0.8, 0.6), (0.9, 0.8, 0.7), (0.2, 0.0, 0.1)]
    h, l, t = ips_loss(samples, CFG)
    assert h == pytest.approx((0.2 + 0.1) / 2) and l == pytest.approx(0.4) and t == h + l


@given(st.lists(st.tuples(st.floats(-0.99, 1), unit, unit), min_size=1, max_size=30))
def test_ips_loss_identities(samples):
    h, l, t = ips_loss(samples, CFG)
    assert t == h + l and h >= 0 and l >= 0
    zero = [(g, p, p if g > CFG.tau else CFG.c_const) for g, p, _ in samples]
    assert ips_loss(zero, CFG) == (0.0, 0.0, 0.0)


@given(unit, unit)
def test_target_bounds(g, p_f):
    t = supervision_target(g, p_f, CFG)
    assert t <= 1.0 + 1e-15
    if g > CFG.tau:
        assert t > CFG.alpha * CFG.tau - CFG.beta


def test_branch_boundary_jump():
    target, ips, eps = 0.9, 0.3, 1e-9
    below = ips_loss([(CFG.tau, target, ips)], CFG)[2]
    above = ips_loss([(CFG.tau + eps, target, ips)], CFG)[2]
    assert below == pytest.approx(abs(CFG.c_const - ips))
    assert above == pytest.approx(abs(target - ips))
    assert abs(above - below) <= abs(target - CFG.c_const) + 1e-12


def test_total_loss():
    assert total_loss(1, 1, 1, CFG).total == 10.0
    assert total_loss(0, 0, 0, CFG).total == 0.0
    assert total_loss(0.34, 0, 0, CFG).total == pytest.approx(1.02, abs=1e-15)
    b = total_loss((0.1, 0.24, 0.34), 0.0, 0.0, CFG)
    assert (b.l_ips_h, b.l_ips_l, b.l_ips) == (0.1, 0.24, 0.34)
    assert total_loss(0.5, 0, 0, CFG).l_ips_h is None
    with pytest.raises(ValueError):
        total_loss(-1, 0, 0, CFG)


@given(unit, unit, unit, unit)
def test_total_loss_linear(a, b, c, d):
    cfg = SupervisionConfig(lambda_ips=d * 4, lambda_cls=2, lambda_box=5)
    assert total_loss(a, b, c, cfg).total == cfg.lambda_ips * a + 2 * b + 5 * c


def _pair(box, logits, gt_box, label=0):
    return Detection(BBox(*box), np.asarray(logits, float), 0.5), GroundTruthObject(BBox(*gt_box), label)


def test_detection_losses():
    gt = (0.5, 0.5, 0.2, 0.2)
    l_cls, l_box = detection_losses([_pair(gt, [60.0, -60.0], gt)])
    assert l_box == 0.0 and l_cls < 1e-20
    shifted = _pair((0.6, 0.5, 0.2, 0.2), [0.0, 0.0], gt)
    _, l_box = detection_losses([shifted], l1_weight=1.0, giou_weight=0.0)
    assert l_box == pytest.approx(0.1)
    one, two = detection_losses([shifted]), detection_losses([shifted, shifted])
    assert one == pytest.approx(two)
    with pytest.raises(ValueError):
        detection_losses([_pair(gt, [0.0, 0.0], gt, UNKNOWN)])


def test_focal_loss_reference_values():
    # p = 0.5, positive: 0.25 * ln2 * 0.25; negative: 0.75 * ln2 * 0.25
    v = sigmoid_focal_loss([0.0, 0.0], [1.0, 0.0])
    assert v == pytest.approx([0.25 * np.log(2) * 0.25, 0.75 * np.log(2) * 0.25])
