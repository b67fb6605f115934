import os
import subprocess
import sys

import numpy as np
import pytest

from unkdet import kernels
from unkdet._accel import HAS_NUMBA

pytestmark = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


def boxes(rng, n):
    out = np.hstack([rng.uniform(0, 1, (n, 2)), rng.uniform(0, 0.4, (n, 2))])
    out[::17, 2] = 0.0
    return out


@pytest.mark.parametrize("mode", [kernels.IOU, kernels.GIOU, kernels.DIOU])
def test_pairwise_numba_matches_numpy_bitwise(mode):
    rng = np.random.default_rng(mode)
    a, b = boxes(rng, 80), boxes(rng, 70)
    assert np.array_equal(kernels.pairwise_overlap_nb(a, b, mode), kernels.pairwise_overlap_np(a, b, mode))


@pytest.mark.parametrize("threshold", [-0.5, 0.0, 0.3, 0.5, 0.9])
def test_nms_numba_matches_numpy(threshold):
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(0, 40))
        b = boxes(rng, n)
        s = rng.integers(0, 5, n) / 4.0  # many ties
        assert np.array_equal(kernels.greedy_nms_nb(b, s, threshold), kernels.greedy_nms_np(b, s, threshold))


def test_assignment_numba_matches_numpy():
    rng = np.random.default_rng(4)
    for _ in range(300):
        g = int(rng.integers(0, 7))
        n = int(rng.integers(g, 10))
        cost = rng.integers(0, 4, (g, n)).astype(float) if rng.random() < 0.5 else rng.normal(size=(g, n))
        assert np.array_equal(kernels.linear_assignment_nb(cost), kernels.linear_assignment_np(cost))


def test_assignment_rejects_infeasible():
    cost = np.array([[np.inf, np.inf], [0.0, 1.0]])
    for fn in (kernels.linear_assignment_nb, kernels.linear_assignment_np):
        with pytest.raises(ValueError):
            fn(cost)


def test_env_flag_selects_numpy_backend():
    code = "import unkdet, unkdet.kernels as k; print(unkdet.backend_name(), k.greedy_nms is k.greedy_nms_np)"
    env = dict(os.environ, UNKDET_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]
    env["UNKDET_DISABLE_NUMBA"] = ""
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numba", "False"]
