"""Query selection by instance presence score instead of a class-head score."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import ipp as ipp_mod
from .ipp import IppModel

DEFAULT_TOPK = 100


@dataclass(frozen=True, eq=False)
class ProposalSet:
    """Parallel arrays of encoder proposals.

    ``index`` records each proposal's position in the original set so that
    selections can be traced back. ``logits`` is optional.
    """

    embeddings: np.ndarray
    boxes: np.ndarray
    scores: Optional[np.ndarray] = None
    index: Optional[np.ndarray] = None
    logits: Optional[np.ndarray] = None

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        n = boxes.shape[0]
        emb = emb.reshape(n, -1) if emb.size else np.zeros((n, 0))
        if emb.shape[0] != n:
            raise ValueError(f"{emb.shape[0]} embeddings but {n} boxes")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "boxes", boxes)
        if self.index is None:
            object.__setattr__(self, "index", np.arange(n, dtype=np.int64))
        else:
            object.__setattr__(self, "index", np.asarray(self.index, dtype=np.int64).reshape(-1))
        for name in ("scores", "logits", "index"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value)
                if value.shape[0] != n:
                    raise ValueError(f"{name} has {value.shape[0]} rows, expected {n}")
                object.__setattr__(self, name, value)

    def __len__(self):
        return self.boxes.shape[0]

    def take(self, idx) -> "ProposalSet":
        idx = np.asarray(idx, dtype=np.int64)
        return ProposalSet(
            embeddings=self.embeddings[idx],
            boxes=self.boxes[idx],
            scores=None if self.scores is None else self.scores[idx],
            index=self.index[idx],
            logits=None if self.logits is None else self.logits[idx],
        )


def score_proposals(proposals: ProposalSet, model: IppModel) -> ProposalSet:
    if len(proposals) == 0:
        return replace(proposals, scores=np.zeros(0))
    if proposals.embeddings.shape[1] != model.dim:
        raise ValueError(f"proposal embeddings have length {proposals.embeddings.shape[1]}, "
                         f"IPP expects {model.dim}")
    return replace(proposals, scores=ipp_mod.forward_batch(model, proposals.embeddings))


def topk_order(scores, k: int) -> np.ndarray:
    """Positions of the ``min(k, n)`` highest scores, descending, ties by lower position."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = np.argsort(-scores, kind="stable")
    return order[:k]


def select_topk(proposals: ProposalSet, k: int = DEFAULT_TOPK) -> ProposalSet:
    """Keep the ``k`` best-scored proposals (all of them when ``k >= n``)."""
    if proposals.scores is None:
        raise ValueError("proposals must be scored before selection")
    return proposals.take(topk_order(proposals.scores, k))
