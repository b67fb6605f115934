"""Unknown-object detection post-training pipeline on synthetic teacher outputs."""

from ._accel import USE_NUMBA, backend_name
from .geometry import BBox, diou, from_corners, giou, iou, to_corners
from .structures import UNKNOWN, Detection, GroundTruthObject

__all__ = [
    "BBox", "Detection", "GroundTruthObject", "UNKNOWN", "USE_NUMBA", "backend_name",
    "diou", "from_corners", "giou", "iou", "to_corners",
]

__version__ = "0.1.0"
