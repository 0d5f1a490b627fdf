"""Track lifecycle and the three tracker variants.

``embed``
    appearance-only association: bi-softmax over EMA memories of every live
    track versus detection embeddings, no IoU gate.
``sort``
    Kalman-predicted boxes matched to detections by IoU.
``byte``
    Kalman + IoU with the two-stage confidence cascade; low-confidence
    detections only extend existing tracks.
"""
from __future__ import annotations

import copy
import enum
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .association import (
    Assignment,
    SimilarityMatrix,
    bisoftmax_similarity,
    cascade_match_byte,
    hungarian_assign,
    iou_similarity,
)
from .core import BoundingBox, ClassId, TrackEntry, boxes_to_array, l2_normalize
from .errors import DegenerateVectorError, FrameOrderError
from .kalman import KalmanFilter, KalmanState
from .mot_io import Frame, Sequence

VARIANTS = ("embed", "sort", "byte")


class TrackState(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


_ALLOWED = {
    TrackState.TENTATIVE: {TrackState.TENTATIVE, TrackState.ACTIVE, TrackState.REMOVED},
    TrackState.ACTIVE: {TrackState.ACTIVE, TrackState.LOST},
    TrackState.LOST: {TrackState.LOST, TrackState.ACTIVE, TrackState.REMOVED},
    TrackState.REMOVED: {TrackState.REMOVED},
}


@dataclass(frozen=True)
class TrackerConfig:
    """Tracker settings; key names double as config-file keys.

    ``max_age`` counts processed (decimated) frames. ``dt`` is the number of
    source frames between processed frames and scales Kalman prediction.
    ``temperature`` and ``min_cosine`` only affect the embed variant.
    """

    variant: str = "embed"
    n_init: int = 2
    max_age: int = 30
    min_confidence: float = 0.5
    min_iou: float = 0.1
    min_embed_score: float = 0.5
    min_cosine: float = 0.3
    temperature: float = 0.1
    ema_rate: float = 0.1
    tau_high: float = 0.6
    tau_low: float = 0.1
    dt: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.n_init < 1 or self.max_age < 0 or self.dt < 1:
            raise ValueError("need n_init >= 1, max_age >= 0, dt >= 1")
        if not 0.0 <= self.ema_rate <= 1.0:
            raise ValueError("ema_rate must lie in [0, 1]")
        for name in ("min_confidence", "min_iou", "min_embed_score", "tau_high", "tau_low"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.variant == "byte" and not self.tau_high > self.tau_low:
            raise ValueError("tau_high must exceed tau_low")

    @classmethod
    def from_mapping(cls, values: dict, base: Optional["TrackerConfig"] = None) -> "TrackerConfig":
        base = base or cls()
        known = {f.name: f for f in fields(cls)}
        changes = {}
        for key, raw in values.items():
            if key not in known:
                raise KeyError(f"unknown tracker key {key!r}")
            like = getattr(base, key)
            if isinstance(raw, str):
                raw = raw.strip()
                raw = type(like)(raw) if not isinstance(like, str) else raw.lower()
            changes[key] = raw
        return replace(base, **changes)

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TrackRecord:
    id: int
    state: TrackState
    hits: int = 1
    misses: int = 0
    kalman: Optional[KalmanState] = None
    memory: Optional[np.ndarray] = None
    last_box: Optional[BoundingBox] = None
    last_frame: int = -1
    class_votes: Counter = field(default_factory=Counter)

    @property
    def class_id(self) -> ClassId:
        if not self.class_votes:
            return ClassId.UNKNOWN
        best = max(self.class_votes.values())
        return min(c for c, n in self.class_votes.items() if n == best)

    def transition(self, new_state: TrackState) -> None:
        if new_state not in _ALLOWED[self.state]:
            raise RuntimeError(f"illegal transition {self.state} -> {new_state}")
        self.state = new_state


def update_memory(memory, det_embedding, rate: float) -> np.ndarray:
    """EMA appearance update ``normalize((1 - rate) * memory + rate * det)``.

    If the mix cancels to zero (antipodal inputs at rate 0.5) the detection
    embedding is returned.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    if rate == 0.0:
        return np.asarray(memory, dtype=np.float64)
    if rate == 1.0:
        return np.asarray(det_embedding, dtype=np.float64)
    mixed = (1.0 - rate) * np.asarray(memory, dtype=np.float64) + rate * np.asarray(det_embedding, dtype=np.float64)
    try:
        return l2_normalize(mixed)
    except DegenerateVectorError:
        return np.asarray(det_embedding, dtype=np.float64)


@dataclass
class StepResult:
    assignment: Assignment
    rows: list
    track_ids: list  # track id per candidate row of the assignment


class Tracker:
    """Per-sequence tracker state; feed frames in increasing index order."""

    def __init__(self, config: Optional[TrackerConfig] = None):
        self.config = config or TrackerConfig()
        self.kf = KalmanFilter()
        self.tracks: list[TrackRecord] = []
        self.next_id = 1
        self.last_frame: Optional[int] = None

    def step(self, frame: Frame) -> StepResult:
        cfg = self.config
        if self.last_frame is not None and frame.index <= self.last_frame:
            raise FrameOrderError(f"frame {frame.index} after frame {self.last_frame}")
        gap = 1 if self.last_frame is None else frame.index - self.last_frame
        self.last_frame = frame.index

        live = [t for t in self.tracks if t.state != TrackState.REMOVED]
        dets = list(frame.detections)
        if cfg.variant != "embed":
            for t in live:
                t.kalman = self.kf.predict(t.kalman, cfg.dt * gap)

        assignment = self._associate(live, dets)
        matched = set()
        rows = []
        for ti, di in assignment.matches:
            track, det = live[ti], dets[di]
            self._apply_match(track, det, frame.index)
            matched.add(ti)
            if track.state == TrackState.ACTIVE:
                rows.append(self._row(track, det, frame.index))

        for ti, track in enumerate(live):
            if ti in matched:
                continue
            track.misses += gap
            if track.state == TrackState.TENTATIVE:
                track.transition(TrackState.REMOVED)
            elif track.state == TrackState.ACTIVE:
                track.transition(TrackState.LOST)
                if track.misses > cfg.max_age:
                    track.transition(TrackState.REMOVED)
            elif track.state == TrackState.LOST and track.misses > cfg.max_age:
                track.transition(TrackState.REMOVED)

        for di in assignment.unmatched_detections:
            det = dets[di]
            if det.confidence < cfg.min_confidence:
                continue
            if cfg.variant == "embed" and det.embedding is None:
                continue
            track = self._spawn(det, frame.index)
            if track.state == TrackState.ACTIVE:
                rows.append(self._row(track, det, frame.index))

        self.tracks = [t for t in self.tracks if t.state != TrackState.REMOVED]
        rows.sort(key=lambda e: e.track_id)
        return StepResult(assignment, rows, [t.id for t in live])

    # -- internals -----------------------------------------------------------

    def _associate(self, live, dets) -> Assignment:
        cfg = self.config
        n, m = len(live), len(dets)
        if cfg.variant == "embed":
            usable = [j for j, d in enumerate(dets) if d.embedding is not None]
            if n == 0 or not usable:
                result = Assignment.from_matches([], n, m)
                return result
            mem = np.array([t.memory for t in live])
            emb = np.array([dets[j].embedding for j in usable])
            sim = bisoftmax_similarity(mem, emb, cfg.temperature)
            sim = SimilarityMatrix(sim.values, (mem @ emb.T) >= cfg.min_cosine)
            sub = hungarian_assign(sim, cfg.min_embed_score)
            return Assignment.from_matches([(i, usable[j]) for i, j in sub.matches], n, m)

        pred = np.array([t.kalman.to_box().as_tuple() for t in live]).reshape(n, 4)
        boxes = boxes_to_array([d.box for d in dets])
        if cfg.variant == "sort":
            return hungarian_assign(iou_similarity(pred, boxes, cfg.min_iou), cfg.min_iou)

        scores = np.array([d.confidence for d in dets])
        stage2 = [i for i, t in enumerate(live) if t.state != TrackState.TENTATIVE]
        result = cascade_match_byte(pred, boxes, scores, cfg.tau_high, cfg.tau_low, cfg.min_iou, stage2)
        return result

    def _apply_match(self, track: TrackRecord, det, frame_index: int) -> None:
        cfg = self.config
        track.hits += 1
        track.misses = 0
        track.last_box = det.box
        track.last_frame = frame_index
        track.class_votes[det.class_id] += 1
        if track.kalman is not None:
            track.kalman = self.kf.update(track.kalman, det.box)
        if track.memory is not None and det.embedding is not None:
            track.memory = update_memory(track.memory, det.embedding, cfg.ema_rate)
        if track.state == TrackState.TENTATIVE:
            if track.hits >= cfg.n_init:
                track.transition(TrackState.ACTIVE)
        elif track.state == TrackState.LOST:
            track.transition(TrackState.ACTIVE)

    def _spawn(self, det, frame_index: int) -> TrackRecord:
        cfg = self.config
        state = TrackState.ACTIVE if cfg.n_init <= 1 else TrackState.TENTATIVE
        track = TrackRecord(
            id=self.next_id,
            state=state,
            kalman=self.kf.initiate(det.box) if cfg.variant != "embed" else None,
            memory=None if det.embedding is None else np.array(det.embedding, dtype=np.float64),
            last_box=det.box,
            last_frame=frame_index,
        )
        track.class_votes[det.class_id] += 1
        self.next_id += 1
        self.tracks.append(track)
        return track

    @staticmethod
    def _row(track: TrackRecord, det, frame_index: int) -> TrackEntry:
        return TrackEntry(frame_index, track.id, det.box, track.class_id, -1.0, det.confidence)


def tracker_step(tracker: Tracker, frame: Frame):
    """Functional form of :meth:`Tracker.step`; the input tracker is left untouched."""
    new = copy.deepcopy(tracker)
    result = new.step(frame)
    return result.assignment, result.rows, new


def run_sequence(seq: Sequence, config: Optional[TrackerConfig] = None) -> list[TrackEntry]:
    tracker = Tracker(config)
    rows = []
    for frame in seq.frames:
        rows.extend(tracker.step(frame).rows)
    return rows
