"""Records shared by the matching, loss, post-processing and metric code."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .geometry import BBox


class ConfigError(ValueError):
    """Out-of-range configuration value; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class _Unknown:
    """Singleton label for objects outside the known class set."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNKNOWN"

    def __reduce__(self):
        return (_Unknown, ())


UNKNOWN = _Unknown()

Label = Union[int, _Unknown]


def is_unknown(label) -> bool:
    return label is UNKNOWN


@dataclass(frozen=True)
class GroundTruthObject:
    box: BBox
    label: Label

    def __post_init__(self):
        if self.label is not UNKNOWN:
            if isinstance(self.label, bool) or not isinstance(self.label, (int, np.integer)):
                raise TypeError(f"label must be a class index or UNKNOWN, got {self.label!r}")
            if self.label < 0:
                raise ValueError(f"class index must be >= 0, got {self.label}")
            object.__setattr__(self, "label", int(self.label))

    @property
    def is_unknown(self) -> bool:
        return self.label is UNKNOWN


@dataclass(frozen=True, eq=False)
class Detection:
    """One query's prediction triple: box, per-class logits, instance presence score.

    ``embedding`` is optional and only carried so IPS can be recomputed.
    """

    box: BBox
    logits: np.ndarray
    ips: float = 0.5
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64).reshape(-1)
        if logits.size == 0:
            raise ValueError("detection needs at least one class logit")
        if not np.all(np.isfinite(logits)):
            raise ValueError("detection logits must be finite")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "ips", float(self.ips))
        if not 0.0 <= self.ips <= 1.0:
            raise ValueError(f"ips must lie in [0, 1], got {self.ips}")
        if self.embedding is not None:
            object.__setattr__(self, "embedding", np.asarray(self.embedding, dtype=np.float64).reshape(-1))

    @property
    def num_classes(self) -> int:
        return self.logits.shape[0]


def sigmoid(x):
    """Numerically stable logistic function for scalars and arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)
