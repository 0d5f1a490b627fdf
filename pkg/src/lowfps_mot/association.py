"""Similarity matrices, gating, and assignment solvers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DimensionError


@dataclass
class SimilarityMatrix:
    """Track-by-detection scores with a validity mask (``True`` = may match)."""

    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            self.values = self.values.reshape(0, 0) if self.values.size == 0 else np.atleast_2d(self.values)
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ValueError("mask shape does not match values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("similarity values must be finite")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class Assignment:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)

    @classmethod
    def from_matches(cls, matches, n_tracks: int, n_dets: int) -> "Assignment":
        matches = sorted((int(i), int(j)) for i, j in matches)
        rows = {i for i, _ in matches}
        cols = {j for _, j in matches}
        return cls(
            matches=matches,
            unmatched_tracks=[i for i in range(n_tracks) if i not in rows],
            unmatched_detections=[j for j in range(n_dets) if j not in cols],
        )

    def total(self, sim) -> float:
        values = sim.values if isinstance(sim, SimilarityMatrix) else np.asarray(sim)
        return float(sum(values[i, j] for i, j in self.matches))


def _as_sim(sim) -> SimilarityMatrix:
    return sim if isinstance(sim, SimilarityMatrix) else SimilarityMatrix(np.asarray(sim, dtype=np.float64))


def iou_similarity(track_boxes, det_boxes, gate_min_iou: float = 0.1) -> SimilarityMatrix:
    """Pairwise IoU; entries below ``gate_min_iou`` are masked out."""
    a = np.asarray(track_boxes, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    values = kernels.iou_matrix(a, b)
    return SimilarityMatrix(values, (values >= gate_min_iou) & (values > 0.0))


def bisoftmax_similarity(track_embeddings, det_embeddings, temperature: float = 1.0) -> SimilarityMatrix:
    """Average of the track-direction and detection-direction softmax of dot products.

    ``f(i, j) = 0.5 * softmax_i(L[:, j])[i] + 0.5 * softmax_j(L[i, :])[j]``
    with logits ``L = T @ D.T / temperature``.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    t = np.asarray(track_embeddings, dtype=np.float64)
    d = np.asarray(det_embeddings, dtype=np.float64)
    if t.size == 0 or d.size == 0:
        return SimilarityMatrix(np.zeros((len(t), len(d))))
    t = np.atleast_2d(t)
    d = np.atleast_2d(d)
    if t.shape[1] != d.shape[1]:
        raise DimensionError(f"track dim {t.shape[1]} != detection dim {d.shape[1]}")
    logits = t @ d.T / temperature
    over_tracks = np.exp(logits - logits.max(axis=0, keepdims=True))
    over_tracks /= over_tracks.sum(axis=0, keepdims=True)
    over_dets = np.exp(logits - logits.max(axis=1, keepdims=True))
    over_dets /= over_dets.sum(axis=1, keepdims=True)
    return SimilarityMatrix(0.5 * over_tracks + 0.5 * over_dets)


def _valid(sim: SimilarityMatrix, min_score: float) -> np.ndarray:
    return sim.mask & (sim.values >= min_score)


def hungarian_assign(sim, min_score: float = 0.5) -> Assignment:
    """Globally optimal one-to-one assignment over valid entries.

    Maximises the summed score over entries that are unmasked and
    ``>= min_score``. Leaving a pair unmatched scores 0, so a negative valid
    entry is never preferred to no match.
    """
    sim = _as_sim(sim)
    n, m = sim.shape
    if n == 0 or m == 0:
        return Assignment.from_matches([], n, m)
    valid = _valid(sim, min_score)
    # non-negative weights with invalid entries as the zero sentinel; an
    # optimum of the dense problem restricted to valid pairs is optimal here
    weights = np.where(valid & (sim.values > 0.0), sim.values, 0.0)
    if n <= m:
        cols = kernels.solve_lsa(-weights)
        pairs = [(i, int(cols[i])) for i in range(n)]
    else:
        rows = kernels.solve_lsa(-weights.T)
        pairs = [(int(rows[j]), j) for j in range(m)]
    matches = [(i, j) for i, j in pairs if valid[i, j] and sim.values[i, j] >= 0.0]
    return Assignment.from_matches(matches, n, m)


def greedy_assign(sim, min_score: float = 0.5) -> Assignment:
    """Repeatedly take the best remaining valid entry.

    Ties go to the lower track index, then the lower detection index.
    """
    sim = _as_sim(sim)
    n, m = sim.shape
    valid = _valid(sim, min_score)
    rows, cols = np.nonzero(valid)
    # stable lexsort: score descending, then row, then column
    order = np.lexsort((cols, rows, -sim.values[rows, cols]))
    used_r, used_c, matches = set(), set(), []
    for k in order:
        i, j = int(rows[k]), int(cols[k])
        if i in used_r or j in used_c:
            continue
        used_r.add(i)
        used_c.add(j)
        matches.append((i, j))
    return Assignment.from_matches(matches, n, m)


def cascade_match_byte(
    track_boxes,
    det_boxes,
    det_scores,
    tau_high: float = 0.6,
    tau_low: float = 0.1,
    min_iou: float = 0.1,
    stage2_tracks: Optional[Sequence[int]] = None,
    similarity=iou_similarity,
) -> Assignment:
    """Two-stage confidence cascade.

    Stage 1 matches every track against detections scoring ``>= tau_high``.
    Stage 2 matches the tracks left over (restricted to ``stage2_tracks`` when
    given) against detections in ``[tau_low, tau_high)``. Low-confidence
    detections left unmatched are dropped from ``unmatched_detections`` so
    they can never start a track; detections below ``tau_low`` are ignored.
    """
    if not tau_high > tau_low:
        raise ValueError("tau_high must exceed tau_low")
    track_boxes = np.asarray(track_boxes, dtype=np.float64).reshape(-1, 4)
    det_boxes = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(det_scores, dtype=np.float64).reshape(-1)
    n = len(track_boxes)
    high = [j for j in range(len(scores)) if scores[j] >= tau_high]
    low = [j for j in range(len(scores)) if tau_low <= scores[j] < tau_high]

    first = hungarian_assign(similarity(track_boxes, det_boxes[high], min_iou), min_iou)
    matches = [(i, high[j]) for i, j in first.matches]
    leftover = first.unmatched_tracks
    if stage2_tracks is not None:
        allowed = set(stage2_tracks)
        leftover = [i for i in leftover if i in allowed]

    second = hungarian_assign(
        similarity(track_boxes[leftover], det_boxes[low], min_iou), min_iou
    )
    matches += [(leftover[i], low[j]) for i, j in second.matches]

    result = Assignment.from_matches(matches, n, len(scores))
    result.unmatched_detections = [high[j] for j in first.unmatched_detections]
    return result
