"""Low-frame-rate multi-object tracking and MOT evaluation."""
from .core import (
    BoundingBox,
    ClassId,
    Detection,
    GroundTruthEntry,
    TrackEntry,
    cosine_similarity,
    iou,
    l2_normalize,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoundingBox",
    "ClassId",
    "Detection",
    "GroundTruthEntry",
    "TrackEntry",
    "cosine_similarity",
    "iou",
    "l2_normalize",
]
