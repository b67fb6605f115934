"""Synthetic scenes produced by a frozen linear "teacher" detector.

Embeddings are laid out as ``[box code (4) | semantic (D - 4)]``. The box code
is the proposal box minus a fixed offset, so the teacher's box head is an
affine read-out. The semantic part lives in an orthonormal frame drawn once
per teacher:

* an objectness axis, positive for objects and negative for background,
* one prototype per known class,
* a localization axis carrying how well the proposal box fits its object,
* the remaining directions, used as prototypes for unknown objects.

Teacher logits are a linear map of the semantic part: the class prototypes
give known objects a confident class, the objectness axis lifts every class a
little for any object, which yields diffuse mid-range logits for unknowns and
low ones for background.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional

import numpy as np

from .geometry import BBox
from .selection import ProposalSet
from .structures import UNKNOWN, ConfigError, GroundTruthObject

BOX_OFFSET = np.array([0.5, 0.5, 0.25, 0.25])
# GT box coordinates are multiples of this, so the box code round-trips exactly
BOX_QUANTUM = 1.0 / 1024

SOURCE_BACKGROUND = -1


@dataclass(frozen=True)
class SyntheticSceneSpec:
    seed: int = 0
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
    min_size: float = 0.08
    max_size: float = 0.22

    def __post_init__(self):
        for name in ("n_known", "n_unknown", "n_background"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        if self.k_classes < 1:
            raise ConfigError("k_classes", "must be >= 1")
        if self.embedding_dim < self.k_classes + 7:
            raise ConfigError("embedding_dim", f"must be >= k_classes + 7 = {self.k_classes + 7}")
        if self.proposals_per_object < 2:
            raise ConfigError("proposals_per_object", "must be >= 2 (one-to-many matching needs spares)")
        for name in ("box_noise", "logit_noise", "embed_noise"):
            if not getattr(self, name) >= 0:
                raise ConfigError(name, "must be >= 0")
        if not 0 < self.min_size <= self.max_size <= 0.5:
            raise ConfigError("max_size", "need 0 < min_size <= max_size <= 0.5")


@dataclass(frozen=True, eq=False)
class Teacher:
    """Frozen linear maps embedding -> box and embedding -> logits."""

    frame: np.ndarray          # (S, S) orthonormal rows
    logit_weights: np.ndarray  # (K, D)
    logit_bias: np.ndarray     # (K,)
    k_classes: int

    @property
    def objectness_axis(self) -> np.ndarray:
        return self.frame[0]

    def class_axis(self, k: int) -> np.ndarray:
        return self.frame[1 + k]

    @property
    def loc_axis(self) -> np.ndarray:
        return self.frame[1 + self.k_classes]

    @property
    def novel_axes(self) -> np.ndarray:
        return self.frame[2 + self.k_classes:]

    def boxes(self, embeddings: np.ndarray) -> np.ndarray:
        return embeddings[:, :4] + BOX_OFFSET

    def logits(self, embeddings: np.ndarray) -> np.ndarray:
        return embeddings @ self.logit_weights.T + self.logit_bias


# logit read-out strengths; see module docstring
CLASS_GAIN = 4.5
OBJECTNESS_GAIN = 1.75
LOGIT_BIAS = -4.25
LOC_GAIN = 1.5
OBJECTNESS_LOW = 0.5
OBJECTNESS_HIGH = 1.5
STRENGTH_LOW = 0.6
STRENGTH_HIGH = 1.4


@lru_cache(maxsize=16)
def make_teacher(embedding_dim: int, k_classes: int, seed: int = 0) -> Teacher:
    s = embedding_dim - 4
    rng = np.random.default_rng([seed, 7919])
    q, r = np.linalg.qr(rng.standard_normal((s, s)))
    frame = (q * np.sign(np.diag(r))).T
    w = np.zeros((k_classes, embedding_dim))
    for k in range(k_classes):
        w[k, 4:] = CLASS_GAIN * frame[1 + k] + OBJECTNESS_GAIN * frame[0]
    frame.setflags(write=False)
    w.setflags(write=False)
    return Teacher(frame=frame, logit_weights=w,
                   logit_bias=np.full(k_classes, LOGIT_BIAS), k_classes=k_classes)


@dataclass
class Scene:
    image_id: str
    gts: List[GroundTruthObject]
    proposals: ProposalSet
    # object index each proposal was spawned from, SOURCE_BACKGROUND otherwise
    source: Optional[np.ndarray] = None

    @property
    def known_gts(self) -> List[GroundTruthObject]:
        return [g for g in self.gts if not g.is_unknown]


def _quantize(x):
    return np.round(np.asarray(x) / BOX_QUANTUM) * BOX_QUANTUM


def _place_objects(rng, n: int, spec: SyntheticSceneSpec) -> np.ndarray:
    """Pairwise-disjoint boxes (with a margin) inside the unit square."""
    boxes = np.zeros((0, 4))
    attempts = 0
    while boxes.shape[0] < n:
        attempts += 1
        if attempts > 5000:
            raise RuntimeError(f"could not place {n} disjoint objects; lower counts or sizes")
        w, h = rng.uniform(spec.min_size, spec.max_size, size=2)
        cx = rng.uniform(w / 2, 1 - w / 2)
        cy = rng.uniform(h / 2, 1 - h / 2)
        cand = _quantize([cx, cy, w, h])
        margin = 0.02
        if boxes.shape[0]:
            sep_x = np.abs(boxes[:, 0] - cand[0]) >= (boxes[:, 2] + cand[2]) / 2 + margin
            sep_y = np.abs(boxes[:, 1] - cand[1]) >= (boxes[:, 3] + cand[3]) / 2 + margin
            if not np.all(sep_x | sep_y):
                continue
        boxes = np.vstack([boxes, cand])
    return boxes


def _box_iou_one(a: np.ndarray, b: np.ndarray) -> float:
    ix = max(0.0, min(a[0] + a[2] / 2, b[0] + b[2] / 2) - max(a[0] - a[2] / 2, b[0] - b[2] / 2))
    iy = max(0.0, min(a[1] + a[3] / 2, b[1] + b[3] / 2) - max(a[1] - a[3] / 2, b[1] - b[3] / 2))
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


def _duplicate(rng, gt: np.ndarray) -> np.ndarray:
    # shifted / rescaled copy with IoU roughly 0.6-0.85 against the object
    shift = rng.uniform(0.03, 0.12, size=2) * rng.choice([-1.0, 1.0], size=2)
    scale = rng.uniform(0.9, 1.12, size=2)
    return np.array([gt[0] + shift[0] * gt[2], gt[1] + shift[1] * gt[3], gt[2] * scale[0], gt[3] * scale[1]])


def _jitter(rng, box: np.ndarray, noise: float) -> np.ndarray:
    if noise <= 0:
        return box.copy()
    out = box.copy()
    out[:2] += rng.normal(0.0, noise, size=2) * box[2:]
    out[2:] *= np.exp(rng.normal(0.0, noise, size=2))
    return out


def generate_scene(spec: SyntheticSceneSpec, index: int = 0, teacher: Optional[Teacher] = None) -> Scene:
    """Plant known, unknown and background proposals for one image.

    Deterministic in ``(spec.seed, index)``.
    """
    teacher = teacher or make_teacher(spec.embedding_dim, spec.k_classes, spec.teacher_seed)
    rng = np.random.default_rng([spec.seed, index])
    n_obj = spec.n_known + spec.n_unknown
    obj_boxes = _place_objects(rng, n_obj, spec)
    labels = [int(rng.integers(spec.k_classes)) for _ in range(spec.n_known)] + [UNKNOWN] * spec.n_unknown
    novel = teacher.novel_axes
    novel_pick = rng.integers(novel.shape[0], size=n_obj)
    # per-object prototype strength: atypical instances carry a weaker class signature
    strength = rng.uniform(STRENGTH_LOW, STRENGTH_HIGH, size=n_obj)
    presence = rng.uniform(OBJECTNESS_LOW, OBJECTNESS_HIGH, size=n_obj)

    boxes, sems, source = [], [], []
    for o in range(n_obj):
        if labels[o] is UNKNOWN:
            proto = novel[novel_pick[o]]
        else:
            proto = teacher.class_axis(labels[o])
        for p in range(spec.proposals_per_object):
            base = obj_boxes[o] if p == 0 else _duplicate(rng, obj_boxes[o])
            box = _jitter(rng, base, spec.box_noise)
            quality = _box_iou_one(box, obj_boxes[o])
            sem = presence[o] * teacher.objectness_axis + strength[o] * proto + LOC_GAIN * (quality - 0.75) * teacher.loc_axis
            boxes.append(box)
            sems.append(sem)
            source.append(o)
    for _ in range(spec.n_background):
        w, h = rng.uniform(0.05, 0.35, size=2)
        box = np.array([rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h])
        quality = max((_box_iou_one(box, ob) for ob in obj_boxes), default=0.0)
        sem = -rng.uniform(OBJECTNESS_LOW, OBJECTNESS_HIGH) * teacher.objectness_axis + LOC_GAIN * (quality - 0.75) * teacher.loc_axis
        boxes.append(box)
        sems.append(sem)
        source.append(SOURCE_BACKGROUND)

    n = len(boxes)
    boxes = np.array(boxes).reshape(n, 4)
    boxes[:, 2:] = np.maximum(boxes[:, 2:], 1e-4)
    sems = np.array(sems).reshape(n, -1)
    if spec.embed_noise > 0:
        sems = sems + rng.normal(0.0, spec.embed_noise, size=sems.shape)
    embeddings = np.hstack([boxes - BOX_OFFSET, sems])
    logits = teacher.logits(embeddings)
    if spec.logit_noise > 0:
        logits = logits + rng.normal(0.0, spec.logit_noise, size=logits.shape)

    # shuffle so proposal order carries no information
    perm = rng.permutation(n)
    embeddings, logits = embeddings[perm], logits[perm]
    source = np.asarray(source, dtype=np.int64)[perm]
    proposals = ProposalSet(embeddings=embeddings, boxes=teacher.boxes(embeddings), logits=logits)
    gts = [GroundTruthObject(BBox(*obj_boxes[o]), labels[o]) for o in range(n_obj)]
    return Scene(image_id=f"scene_{spec.seed}_{index:05d}", gts=gts, proposals=proposals, source=source)


def generate_dataset(spec: SyntheticSceneSpec, n_scenes: int) -> List[Scene]:
    teacher = make_teacher(spec.embedding_dim, spec.k_classes, spec.teacher_seed)
    return [generate_scene(spec, i, teacher) for i in range(n_scenes)]
