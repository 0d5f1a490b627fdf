import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lowfps_mot.association import (
    Assignment,
    SimilarityMatrix,
    bisoftmax_similarity,
    cascade_match_byte,
    greedy_assign,
    hungarian_assign,
    iou_similarity,
)
from lowfps_mot.errors import DimensionError
from oracles import best_assignment_total, box_iou

matrices = st.integers(0, 6).flatmap(
    lambda n: st.integers(0, 6).flatmap(
        lambda m: st.tuples(
            hnp.arrays(np.float64, (n, m), elements=st.floats(-1, 1, allow_nan=False)),
            hnp.arrays(np.bool_, (n, m)),
        )
    )
)


def _check_partition(a: Assignment, n, m):
    rows = [i for i, _ in a.matches]
    cols = [j for _, j in a.matches]
    assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
    assert sorted(rows + a.unmatched_tracks) == list(range(n))
    assert sorted(cols + a.unmatched_detections) == list(range(m))


def test_iou_similarity_examples():
    boxes = [[0, 0, 2, 2], [10, 10, 12, 12]]
    sim = iou_similarity(boxes, boxes)
    np.testing.assert_array_equal(np.diag(sim.values), [1.0, 1.0])
    far = iou_similarity(boxes, [[100, 100, 101, 101], [50, 50, 51, 51]])
    assert not far.mask.any()
    sim = iou_similarity([[0, 0, 2, 2]], [[1, 1, 3, 3], [0, 0, 2, 2]])
    assert sim.values[0, 0] == pytest.approx(1 / 7)
    assert sim.values[0, 1] == 1.0


def test_iou_gate():
    sim = iou_similarity([[0, 0, 2, 2]], [[1, 1, 3, 3]], gate_min_iou=0.2)
    assert not sim.mask[0, 0]


def test_bisoftmax_examples():
    one = bisoftmax_similarity([[0.3, 0.4]], [[-1.0, 0.0]])
    assert one.values[0, 0] == 1.0
    r2 = math.sqrt(2)
    sim = bisoftmax_similarity([[r2, 0], [0, r2]], [[r2, 0], [0, r2]], temperature=1.0)
    e2 = math.exp(2)
    assert sim.values[0, 0] == pytest.approx(e2 / (e2 + 1), abs=1e-12)
    assert sim.values[0, 0] == pytest.approx(0.8808, abs=1e-4)
    with pytest.raises(DimensionError):
        bisoftmax_similarity([[1, 0]], [[1, 0, 0]])
    assert bisoftmax_similarity(np.zeros((0, 3)), [[1, 0, 0]]).shape == (0, 1)


unit_sets = st.integers(1, 5).flatmap(
    lambda n: st.integers(1, 5).flatmap(
        lambda m: st.tuples(
            hnp.arrays(np.float64, (n, 4), elements=st.floats(-1, 1)),
            hnp.arrays(np.float64, (m, 4), elements=st.floats(-1, 1)),
        )
    )
)


def _unit(x):
    x = x + 1e-3
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@given(unit_sets, st.floats(0.05, 5), st.randoms())
def test_bisoftmax_properties(pair, tau, rnd):
    t, d = _unit(pair[0]), _unit(pair[1])
    f = bisoftmax_similarity(t, d, tau).values
    assert np.all(f > 0) and np.all(f <= 1 + 1e-12)
    # the two halves sum to n_cols/2 per row plus n_rows/2 per column in total
    assert f.sum() == pytest.approx(0.5 * (t.shape[0] + d.shape[0]))
    perm = list(range(len(d)))
    rnd.shuffle(perm)
    np.testing.assert_allclose(bisoftmax_similarity(t, d[perm], tau).values, f[:, perm], atol=1e-12)


def test_bisoftmax_flattens_with_temperature():
    rng = np.random.default_rng(0)
    t = _unit(rng.normal(size=(3, 8)))
    d = _unit(rng.normal(size=(4, 8)))
    flat = 0.5 / 3 + 0.5 / 4
    spread = [np.abs(bisoftmax_similarity(t, d, tau).values - flat).max() for tau in (0.1, 1, 10, 1e3)]
    assert all(a > b for a, b in zip(spread, spread[1:]))
    assert spread[-1] < 1e-3


def test_hungarian_examples():
    assert hungarian_assign([[0.9]], 0.5).matches == [(0, 0)]
    sim = np.array([[0.9, 0.8], [0.85, 0.1]])
    h = hungarian_assign(sim, 0.0)
    g = greedy_assign(sim, 0.0)
    assert h.matches == [(0, 1), (1, 0)]
    assert h.total(sim) == pytest.approx(1.65)
    assert g.matches == [(0, 0), (1, 1)]
    assert g.total(sim) == pytest.approx(1.0)
    assert hungarian_assign(np.zeros((0, 3))).unmatched_detections == [0, 1, 2]
    assert greedy_assign(np.zeros((2, 0))).unmatched_tracks == [0, 1]


def test_greedy_tie_break():
    a = greedy_assign([[0.7, 0.7], [0.7, 0.7]], 0.5)
    assert a.matches == [(0, 0), (1, 1)]


def test_min_score_gate():
    a = hungarian_assign([[0.4, 0.9], [0.45, 0.2]], 0.5)
    assert a.matches == [(0, 1)]
    assert a.unmatched_tracks == [1] and a.unmatched_detections == [0]


@given(matrices, st.floats(-1, 1))
def test_assignment_gating_and_optimality(mat, min_score):
    values, mask = mat
    sim = SimilarityMatrix(values, mask)
    n, m = values.shape
    h = hungarian_assign(sim, min_score)
    g = greedy_assign(sim, min_score)
    for a in (h, g):
        _check_partition(a, n, m)
        for i, j in a.matches:
            assert mask[i, j] and values[i, j] >= min_score
    valid = mask & (values >= min_score)
    best = best_assignment_total(values, valid)
    assert math.fsum(values[i, j] for i, j in h.matches) == pytest.approx(best, abs=1e-12)
    assert h.total(values) >= g.total(values) - 1e-12


def test_similarity_matrix_validation():
    with pytest.raises(ValueError):
        SimilarityMatrix([[np.nan]])
    with pytest.raises(ValueError):
        SimilarityMatrix([[1.0, 2.0]], np.ones((2, 1), bool))


def _box(x, y, w=10, h=10):
    return [x, y, x + w, y + h]


def test_cascade_all_high_equals_single_stage():
    tracks = [_box(0, 0), _box(30, 0), _box(60, 0)]
    dets = [_box(61, 1), _box(1, 1), _box(200, 0)]
    scores = [0.9, 0.95, 0.8]
    c = cascade_match_byte(tracks, dets, scores, 0.6, 0.1, 0.1)
    single = hungarian_assign(iou_similarity(tracks, dets, 0.1), 0.1)
    assert c.matches == single.matches
    assert c.unmatched_detections == single.unmatched_detections


def test_cascade_stage_two():
    track = [[0, 0, 10, 10]]
    det = [[0, 0, 10, 12.5]]  # IoU 0.8
    assert box_iou(track[0], det[0]) > 0.5
    c = cascade_match_byte(track, det, [0.3], 0.6, 0.1, 0.1)
    assert c.matches == [(0, 0)]
    # IoU 0.6 low-confidence match
    det = [[0, 0, 6, 10]]
    assert box_iou(track[0], det[0]) == pytest.approx(0.6)
    assert cascade_match_byte(track, det, [0.3], 0.6, 0.1, 0.1).matches == [(0, 0)]


def test_cascade_drops_unmatched_low():
    c = cascade_match_byte(np.zeros((0, 4)), [_box(0, 0), _box(50, 50)], [0.3, 0.9], 0.6, 0.1, 0.1)
    assert c.matches == []
    assert c.unmatched_detections == [1]


def test_cascade_stage_two_restriction():
    c = cascade_match_byte([_box(0, 0)], [_box(0, 0)], [0.3], 0.6, 0.1, 0.1, stage2_tracks=[])
    assert c.matches == []
    with pytest.raises(ValueError):
        cascade_match_byte([], [], [], 0.1, 0.6)


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100), st.floats(0.05, 1.0)), max_size=8),
       st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), max_size=5))
def test_cascade_properties(dets, tracks):
    det_boxes = [_box(x, y) for x, y, _ in dets]
    scores = [s for _, _, s in dets]
    track_boxes = [_box(x, y) for x, y in tracks]
    c = cascade_match_byte(track_boxes, det_boxes, scores, 0.6, 0.1, 0.1)
    rows = [i for i, _ in c.matches]
    cols = [j for _, j in c.matches]
    assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
    for i, j in c.matches:
        assert scores[j] >= 0.1
        assert box_iou(track_boxes[i], det_boxes[j]) >= 0.1 - 1e-12
    # only unmatched high-confidence detections may start tracks
    for j in c.unmatched_detections:
        assert scores[j] >= 0.6 and j not in cols
