"""Instance presence score predictor: a single logistic unit over a query embedding.

Gradients are written out by hand; :func:`finite_diff_check` compares them with
central differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .structures import ConfigError, sigmoid
from .supervision import SupervisionConfig, branch_targets, ips_loss_arrays

log = logging.getLogger(__name__)


@dataclass
class IppModel:
    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.bias = float(self.bias)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("IPP parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "IppModel":
        return cls(np.zeros(dim), 0.0)

    def copy(self) -> "IppModel":
        return IppModel(self.weights.copy(), self.bias)

    def params(self) -> np.ndarray:
        return np.append(self.weights, self.bias)

    @classmethod
    def from_params(cls, params) -> "IppModel":
        params = np.asarray(params, dtype=np.float64)
        return cls(params[:-1].copy(), float(params[-1]))


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 0.5
    steps: int = 3000
    batch_size: int = 64
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ConfigError("learning_rate", f"must be a finite value >= 0, got {self.learning_rate}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError("steps", f"must be an integer >= 1, got {self.steps}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("batch_size", f"must be an integer >= 1, got {self.batch_size}")
        if not (np.isfinite(self.init_scale) and self.init_scale >= 0):
            raise ConfigError("init_scale", f"must be a finite value >= 0, got {self.init_scale}")


class TrainingDiverged(FloatingPointError):
    pass


def _check_dim(model: IppModel, embedding: np.ndarray) -> None:
    if embedding.shape[-1] != model.dim:
        raise ValueError(f"embedding length {embedding.shape[-1]} != model dimension {model.dim}")


def forward(model: IppModel, embedding) -> float:
    e = np.asarray(embedding, dtype=np.float64).reshape(-1)
    _check_dim(model, e)
    return sigmoid(float(e @ model.weights) + model.bias)


def forward_batch(model: IppModel, embeddings) -> np.ndarray:
    E = np.asarray(embeddings, dtype=np.float64)
    if E.ndim != 2:
        E = E.reshape(-1, model.dim)
    _check_dim(model, E)
    return np.atleast_1d(sigmoid(E @ model.weights + model.bias))


def sample_loss(model: IppModel, embedding, giou_val: float, target: float,
                cfg: SupervisionConfig = SupervisionConfig()) -> float:
    """``|t - I(e)|`` with ``t`` the branch target for this sample."""
    goal, _ = branch_targets([giou_val], [target], cfg)
    return abs(float(goal[0]) - forward(model, embedding))


def gradient(model: IppModel, embedding, giou_val: float, target: float,
             cfg: SupervisionConfig = SupervisionConfig()) -> Tuple[np.ndarray, float]:
    """Gradient of :func:`sample_loss` w.r.t. ``(weights, bias)``; zero at the kink."""
    e = np.asarray(embedding, dtype=np.float64).reshape(-1)
    _check_dim(model, e)
    goal, _ = branch_targets([giou_val], [target], cfg)
    out = forward(model, e)
    s = np.sign(out - float(goal[0])) * out * (1.0 - out)
    return s * e, float(s)


def batch_gradient(model: IppModel, E: np.ndarray, gious: np.ndarray, targets: np.ndarray,
                   cfg: SupervisionConfig) -> Tuple[np.ndarray, float, float]:
    """Gradient and value of the branch-mean loss over one mini-batch."""
    goal, high = branch_targets(gious, targets, cfg)
    out = forward_batch(model, E)
    n_h = int(high.sum())
    n_l = high.size - n_h
    wt = np.where(high, 1.0 / max(n_h, 1), 1.0 / max(n_l, 1))
    s = np.sign(out - goal) * out * (1.0 - out) * wt
    loss = ips_loss_arrays(gious, targets, out, cfg)[2]
    return s @ E, float(s.sum()), loss


def _stack(dataset) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(dataset, tuple) and len(dataset) == 3 and isinstance(dataset[0], np.ndarray) \
            and dataset[0].ndim == 2:
        E, g, t = dataset
    else:
        rows = list(dataset)
        if not rows:
            raise ValueError("training dataset is empty")
        dims = {len(np.asarray(r[0]).reshape(-1)) for r in rows}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding lengths {sorted(dims)}")
        E = np.stack([np.asarray(r[0], dtype=np.float64).reshape(-1) for r in rows])
        g = np.array([r[1] for r in rows], dtype=np.float64)
        t = np.array([r[2] for r in rows], dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if E.shape[0] == 0:
        raise ValueError("training dataset is empty")
    return E, np.asarray(g, dtype=np.float64), np.asarray(t, dtype=np.float64)


def init_model(dim: int, cfg: TrainerConfig) -> IppModel:
    rng = np.random.default_rng(cfg.seed)
    params = rng.uniform(-cfg.init_scale, cfg.init_scale, size=dim + 1)
    return IppModel.from_params(params)


def train(dataset, cfg: TrainerConfig = TrainerConfig(),
          sup: SupervisionConfig = SupervisionConfig(),
          init: Optional[IppModel] = None) -> Tuple[IppModel, List[float]]:
    """Mini-batch gradient descent on the presence-score loss.

    ``dataset`` holds ``(embedding, giou, target)`` rows, or a tuple of three
    arrays ``(E, gious, targets)``. Returns the trained model and the mean
    mini-batch loss of every (possibly partial, for the last) epoch.
    """
    E, gious, targets = _stack(dataset)
    n, dim = E.shape
    model = init.copy() if init is not None else init_model(dim, cfg)
    _check_dim(model, E)
    # separate stream so shuffling does not depend on init draws
    rng = np.random.default_rng([cfg.seed, 1])
    w, b = model.weights.copy(), model.bias
    bs = min(cfg.batch_size, n)
    trace: List[float] = []
    epoch_losses: List[float] = []
    order = rng.permutation(n)
    pos = 0
    for step in range(cfg.steps):
        if pos + bs > n:
            trace.append(float(np.mean(epoch_losses)))
            epoch_losses = []
            order = rng.permutation(n)
            pos = 0
        idx = order[pos:pos + bs]
        pos += bs
        gw, gb, loss = batch_gradient(IppModel(w, b), E[idx], gious[idx], targets[idx], sup)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite IPS loss at step {step}")
        epoch_losses.append(loss)
        w = w - cfg.learning_rate * gw
        b = b - cfg.learning_rate * gb
        if not (np.all(np.isfinite(w)) and np.isfinite(b)):
            raise TrainingDiverged(f"non-finite IPP parameters after step {step} (loss {loss:.6g})")
    if epoch_losses:
        trace.append(float(np.mean(epoch_losses)))
    log.debug("IPP trained: %d steps, final epoch loss %.5f", cfg.steps, trace[-1])
    return IppModel(w, b), trace


GradFn = Callable[[IppModel, np.ndarray, float, float, SupervisionConfig], Tuple[np.ndarray, float]]


def finite_diff_check(model: IppModel, sample, tolerance: float = 1e-4,
                      cfg: SupervisionConfig = SupervisionConfig(),
                      step: float = 1e-6, abs_tol: float = 1e-8,
                      grad_fn: GradFn = gradient) -> Tuple[bool, float]:
    """Compare ``grad_fn`` against central differences of :func:`sample_loss`.

    ``sample`` is ``(embedding, giou, target)``. Components whose absolute
    discrepancy is below ``abs_tol`` count as agreeing whatever their relative
    error. Returns ``(passed, max_relative_error)``.

    Exactly at the kink (zero loss) central differences are meaningless; there
    each component only has to lie between the one-sided differences.
    """
    embedding, giou_val, target = sample
    e = np.asarray(embedding, dtype=np.float64).reshape(-1)
    gw, gb = grad_fn(model, e, giou_val, target, cfg)
    analytic = np.append(gw, gb)
    base = model.params()
    f0 = sample_loss(model, e, giou_val, target, cfg)
    numeric = np.empty_like(base)
    for k in range(base.size):
        plus, minus = base.copy(), base.copy()
        plus[k] += step
        minus[k] -= step
        f_plus = sample_loss(IppModel.from_params(plus), e, giou_val, target, cfg)
        f_minus = sample_loss(IppModel.from_params(minus), e, giou_val, target, cfg)
        if f0 == 0.0:
            lo, hi = sorted(((f0 - f_minus) / step, (f_plus - f0) / step))
            numeric[k] = min(max(analytic[k], lo), hi)
        else:
            numeric[k] = (f_plus - f_minus) / (2.0 * step)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)
    passed = bool(np.all((diff <= abs_tol) | (rel <= tolerance)))
    return passed, float(rel.max()) if rel.size else 0.0
