"""Domain types and elementary geometry/vector operations."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateVectorError, DimensionError


class ClassId(enum.IntEnum):
    """Vehicle taxonomy. ``UNKNOWN`` covers class-less detector output."""

    UNKNOWN = -1
    HEAVILY_ARMORED = 1
    LIGHTLY_ARMORED = 2
    TRUCK = 3

    @classmethod
    def parse(cls, value) -> "ClassId":
        try:
            return cls(int(float(value)))
        except ValueError:
            # MOT files from other tools use arbitrary class codes
            return cls.UNKNOWN


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel corner form ``(x1, y1, x2, y2)``."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(f"invalid box {self.as_tuple()}")

    @classmethod
    def from_ltwh(cls, left, top, width, height) -> "BoundingBox":
        return cls(float(left), float(top), float(left) + float(width), float(top) + float(height))

    @classmethod
    def from_array(cls, arr) -> "BoundingBox":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def to_ltwh(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2 - self.x1, self.y2 - self.y1)

    def scaled(self, factor: float) -> "BoundingBox":
        return BoundingBox(self.x1 * factor, self.y1 * factor, self.x2 * factor, self.y2 * factor)

    def clamped(self, width: float, height: float) -> Optional["BoundingBox"]:
        """Clip to ``[0, width] x [0, height]``; ``None`` if nothing is left."""
        x1, y1 = max(self.x1, 0.0), max(self.y1, 0.0)
        x2, y2 = min(self.x2, float(width)), min(self.y2, float(height))
        if x2 <= x1 or y2 <= y1:
            return None
        if (x1, y1, x2, y2) == self.as_tuple():
            return self
        return BoundingBox(x1, y1, x2, y2)


@dataclass(frozen=True, eq=False)
class Detection:
    frame_index: int
    box: BoundingBox
    class_id: ClassId = ClassId.UNKNOWN
    confidence: float = 1.0
    embedding: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.embedding is not None:
            norm = float(np.linalg.norm(self.embedding))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"embedding not unit norm ({norm})")

    def replace(self, **changes) -> "Detection":
        values = dict(
            frame_index=self.frame_index,
            box=self.box,
            class_id=self.class_id,
            confidence=self.confidence,
            embedding=self.embedding,
        )
        values.update(changes)
        return Detection(**values)


@dataclass(frozen=True)
class TrackEntry:
    """One row of a ground-truth or tracking-result file.

    ``frame_index`` is 0-based; files store it 1-based.
    ``confidence`` is the MOTChallenge "consider" flag for ground truth and the
    detection score for results.
    """

    frame_index: int
    track_id: int
    box: BoundingBox
    class_id: ClassId = ClassId.UNKNOWN
    visibility: float = 1.0
    confidence: float = 1.0


GroundTruthEntry = TrackEntry


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def l2_normalize(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateVectorError("cannot normalize a zero or non-finite vector")
    # already unit up to rounding: return as is so normalizing is idempotent
    if abs(norm - 1.0) <= 1e-13:
        return arr.copy()
    return arr / norm


def cosine_similarity(u, v) -> float:
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float64 corner array."""
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)
