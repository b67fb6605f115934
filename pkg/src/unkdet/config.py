"""Flat pipeline configuration: one key per hyperparameter, JSON on disk."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping

from .assignment import DEFAULT_LAMBDA_BOX, DEFAULT_LAMBDA_CLS
from .ipp import TrainerConfig
from .postprocess import PostprocessConfig
from .selection import DEFAULT_TOPK
from .structures import ConfigError
from .supervision import SupervisionConfig
from .synth import SyntheticSceneSpec


@dataclass(frozen=True)
class PipelineConfig:
    # supervision
    alpha: float = 0.6
    beta: float = 0.4
    c_const: float = 0.5
    tau: float = 0.6
    lambda_ips: float = 3.0
    lambda_cls: float = 2.0
    lambda_box: float = 5.0
    # IPP trainer
    learning_rate: float = TrainerConfig.learning_rate
    steps: int = TrainerConfig.steps
    batch_size: int = TrainerConfig.batch_size
    init_scale: float = TrainerConfig.init_scale
    # matching
    match_lambda_cls: float = DEFAULT_LAMBDA_CLS
    match_lambda_box: float = DEFAULT_LAMBDA_BOX
    # selection / post-processing / evaluation
    topk: int = DEFAULT_TOPK
    nms_diou_threshold: float = 0.5
    known_cls_threshold: float = 0.5
    ips_threshold: float = 0.5
    iou_threshold: float = 0.5
    # synthetic data
    seed: int = 0
    n_scenes: int = 200
    n_train_scenes: int = 200
    n_known: int = 3
    n_unknown: int = 3
    n_background: int = 20
    embedding_dim: int = 16
    k_classes: int = 3
    proposals_per_object: int = 3
    box_noise: float = 0.0
    logit_noise: float = 0.0
    embed_noise: float = 0.0
    teacher_seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type in ("int", int):
                if isinstance(value, bool) or not isinstance(value, int):
                    if isinstance(value, float) and value.is_integer():
                        object.__setattr__(self, f.name, int(value))
                    else:
                        raise ConfigError(f.name, f"expected an integer, got {value!r}")
            else:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f.name, f"expected a number, got {value!r}")
                if not math.isfinite(value):
                    raise ConfigError(f.name, "must be finite")
                object.__setattr__(self, f.name, float(value))
        self.supervision()
        self.trainer()
        self.postprocess()
        self.synth()
        if self.topk < 1:
            raise ConfigError("topk", f"must be >= 1, got {self.topk}")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ConfigError("iou_threshold", f"must lie in (0, 1], got {self.iou_threshold}")
        for name in ("match_lambda_cls", "match_lambda_box"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        for name in ("n_scenes", "n_train_scenes"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")

    def supervision(self) -> SupervisionConfig:
        return SupervisionConfig(alpha=self.alpha, beta=self.beta, c_const=self.c_const, tau=self.tau,
                                 lambda_ips=self.lambda_ips, lambda_cls=self.lambda_cls,
                                 lambda_box=self.lambda_box)

    def trainer(self) -> TrainerConfig:
        return TrainerConfig(learning_rate=self.learning_rate, steps=self.steps,
                             batch_size=self.batch_size, seed=self.seed, init_scale=self.init_scale)

    def postprocess(self) -> PostprocessConfig:
        return PostprocessConfig(nms_diou_threshold=self.nms_diou_threshold,
                                 known_cls_threshold=self.known_cls_threshold,
                                 ips_threshold=self.ips_threshold)

    def synth(self, seed: int = None) -> SyntheticSceneSpec:
        return SyntheticSceneSpec(
            seed=self.seed if seed is None else seed,
            n_known=self.n_known, n_unknown=self.n_unknown, n_background=self.n_background,
            embedding_dim=self.embedding_dim, k_classes=self.k_classes,
            proposals_per_object=self.proposals_per_object, box_noise=self.box_noise,
            logit_noise=self.logit_noise, embed_noise=self.embed_noise, teacher_seed=self.teacher_seed)

    def replace(self, **changes) -> "PipelineConfig":
        return PipelineConfig.from_mapping({**self.as_dict(), **changes})

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**dict(data))


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ConfigError("<file>", f"{path}: expected a flat JSON object")
    for key, value in data.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(key, "config is flat; nested values are not allowed")
    return PipelineConfig.from_mapping(data)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.as_dict(), indent=2, sort_keys=True) + "\n")
