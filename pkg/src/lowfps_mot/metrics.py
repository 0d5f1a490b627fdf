"""CLEAR MOT (MOTA, IDSW), identity (IDF1) and HOTA metrics.

Conventions follow the public MOT evaluation kits:

* CLEAR: per frame, pairs matched in the previous frame are kept while their
  IoU stays >= the threshold; the rest are matched by Hungarian on IoU. An
  identity switch is counted when a ground-truth object is matched to a
  different prediction id than at its last match.
* IDF1: one global trajectory-level matching maximising identity true
  positives (frames where the boxes overlap with IoU >= threshold).
* HOTA: a global alignment score between every gt/pred id pair weights the
  per-frame IoU, one Hungarian matching per frame maximises that product,
  and each of the 19 thresholds alpha in {0.05, ..., 0.95} keeps the matched
  pairs with IoU >= alpha. Sequences are combined by pooling TP/FN/FP and
  TP-weighting AssA.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from . import kernels
from .association import hungarian_assign
from .core import ClassId, TrackEntry, boxes_to_array
from .errors import UndefinedMetricError
from .mot_io import parse_ground_truth, parse_results

ALPHAS = np.round(np.arange(0.05, 0.96, 0.05), 2)
_EPS = np.finfo(float).eps


@dataclass
class MetricReport:
    hota: float = 0.0
    deta: float = 0.0
    assa: float = 0.0
    mota: float = 0.0
    idf1: float = 0.0
    idsw: int = 0
    fp: int = 0
    fn: int = 0
    tp: int = 0
    num_gt: int = 0
    num_pred: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0
    hota_alpha: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    deta_alpha: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    assa_alpha: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    hota_tp: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS), dtype=np.int64))
    hota_fn: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS), dtype=np.int64))
    hota_fp: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS), dtype=np.int64))

    # Table column order: HOTA, MOTA, IDF1, AssA, IDSW
    TABLE_COLUMNS = ("HOTA", "MOTA", "IDF1", "AssA", "IDSW")

    def table_values(self) -> list:
        return [100 * self.hota, 100 * self.mota, 100 * self.idf1, 100 * self.assa, self.idsw]

    def to_table(self, label: str = "") -> str:
        return format_table([(label, self)])

    def to_keyvalue(self) -> str:
        lines = []
        for key in ("hota", "deta", "assa", "mota", "idf1"):
            lines.append(f"{key}={getattr(self, key)!r}")
        for key in ("idsw", "fp", "fn", "tp", "num_gt", "num_pred", "idtp", "idfp", "idfn"):
            lines.append(f"{key}={getattr(self, key)}")
        for key in ("hota_alpha", "deta_alpha", "assa_alpha"):
            lines.append(f"{key}=" + ",".join(repr(float(v)) for v in getattr(self, key)))
        for key in ("hota_tp", "hota_fn", "hota_fp"):
            lines.append(f"{key}=" + ",".join(str(int(v)) for v in getattr(self, key)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_keyvalue(cls, text: str) -> "MetricReport":
        report = cls()
        for line in text.splitlines():
            if not line.strip() or "=" not in line:
                continue
            key, value = line.split("=", 1)
            key = key.strip()
            if key in ("hota", "deta", "assa", "mota", "idf1"):
                setattr(report, key, float(value))
            elif key in ("hota_alpha", "deta_alpha", "assa_alpha"):
                setattr(report, key, np.array([float(v) for v in value.split(",")]))
            elif key in ("hota_tp", "hota_fn", "hota_fp"):
                setattr(report, key, np.array([int(v) for v in value.split(",")], dtype=np.int64))
            elif hasattr(report, key):
                setattr(report, key, int(value))
        return report


def format_table(rows) -> str:
    """Aligned text table of ``(label, MetricReport)`` rows."""
    width = max([len(str(label)) for label, _ in rows] + [8])
    header = f"{'':<{width}}  " + "  ".join(f"{c:>7}" for c in MetricReport.TABLE_COLUMNS)
    lines = [header]
    for label, rep in rows:
        h, m, i, a, s = rep.table_values()
        lines.append(f"{str(label):<{width}}  {h:7.2f}  {m:7.2f}  {i:7.2f}  {a:7.2f}  {s:7d}")
    return "\n".join(lines) + "\n"


# -- grouping helpers -----------------------------------------------------------

def _by_frame(entries: Iterable[TrackEntry]) -> dict:
    out = defaultdict(list)
    for e in entries:
        out[e.frame_index].append(e)
    for rows in out.values():
        rows.sort(key=lambda e: e.track_id)
    return out


def _frame_arrays(rows):
    ids = np.array([e.track_id for e in rows], dtype=np.int64)
    return ids, boxes_to_array([e.box for e in rows])


# -- CLEAR MOT -------------------------------------------------------------------

@dataclass
class FrameMatch:
    pairs: list  # (gt_id, pred_id)
    tp: int
    fp: int
    fn: int
    idsw: int


def clear_match(gt_frame, pred_frame, carryover: Optional[dict] = None, last_match: Optional[dict] = None,
                iou_min: float = 0.5) -> FrameMatch:
    """Match one frame for CLEAR MOT.

    ``carryover`` maps gt id -> pred id for pairs matched in the previous
    frame; ``last_match`` maps gt id -> most recent pred id ever matched and
    decides identity switches (defaults to ``carryover``).
    """
    carryover = carryover or {}
    last_match = carryover if last_match is None else last_match
    gt_ids, gt_boxes = _frame_arrays(gt_frame)
    pr_ids, pr_boxes = _frame_arrays(pred_frame)
    sim = kernels.iou_matrix(gt_boxes, pr_boxes)
    pr_pos = {int(p): j for j, p in enumerate(pr_ids)}

    pairs_idx = []
    used_r, used_c = set(), set()
    for i, g in enumerate(gt_ids):
        p = carryover.get(int(g))
        j = pr_pos.get(p) if p is not None else None
        if j is not None and j not in used_c and sim[i, j] >= iou_min:
            pairs_idx.append((i, j))
            used_r.add(i)
            used_c.add(j)
    rest_r = [i for i in range(len(gt_ids)) if i not in used_r]
    rest_c = [j for j in range(len(pr_ids)) if j not in used_c]
    if rest_r and rest_c:
        sub = sim[np.ix_(rest_r, rest_c)]
        a = hungarian_assign(np.where(sub >= iou_min, sub, 0.0), min_score=max(iou_min, 1e-300))
        pairs_idx += [(rest_r[i], rest_c[j]) for i, j in a.matches]

    pairs = sorted((int(gt_ids[i]), int(pr_ids[j])) for i, j in pairs_idx)
    idsw = sum(1 for g, p in pairs if g in last_match and last_match[g] != p)
    tp = len(pairs)
    return FrameMatch(pairs, tp, len(pr_ids) - tp, len(gt_ids) - tp, idsw)


def clear_counts(gt: list, pred: list, iou_min: float = 0.5) -> dict:
    gt_f, pr_f = _by_frame(gt), _by_frame(pred)
    carry, last = {}, {}
    totals = dict(tp=0, fp=0, fn=0, idsw=0, num_gt=len(gt), num_pred=len(pred))
    frames = set(gt_f) | set(pr_f)
    # empty frames still break match persistence, so walk every index
    for f in range(max(frames) + 1 if frames else 0):
        m = clear_match(gt_f.get(f, []), pr_f.get(f, []), carry, last, iou_min)
        for k in ("tp", "fp", "fn", "idsw"):
            totals[k] += getattr(m, k)
        carry = dict(m.pairs)
        last.update(carry)
    return totals


def compute_mota(counts: dict) -> float:
    num_gt = counts["num_gt"]
    if num_gt <= 0:
        raise UndefinedMetricError("MOTA is undefined without ground truth")
    return float(1 - Fraction(counts["fn"] + counts["fp"] + counts["idsw"], num_gt))


# -- IDF1 -------------------------------------------------------------------------

def identity_overlap_counts(gt: list, pred: list, iou_min: float = 0.5):
    """Frames in which each (gt id, pred id) pair overlaps with IoU >= ``iou_min``."""
    gt_ids = sorted({e.track_id for e in gt})
    pr_ids = sorted({e.track_id for e in pred})
    gi = {g: i for i, g in enumerate(gt_ids)}
    pi = {p: j for j, p in enumerate(pr_ids)}
    counts = np.zeros((len(gt_ids), len(pr_ids)), dtype=np.int64)
    gt_f, pr_f = _by_frame(gt), _by_frame(pred)
    for f, g_rows in gt_f.items():
        p_rows = pr_f.get(f)
        if not p_rows:
            continue
        g_ids, g_boxes = _frame_arrays(g_rows)
        p_ids, p_boxes = _frame_arrays(p_rows)
        hit = kernels.iou_matrix(g_boxes, p_boxes) >= iou_min
        for a, b in zip(*np.nonzero(hit)):
            counts[gi[int(g_ids[a])], pi[int(p_ids[b])]] += 1
    return gt_ids, pr_ids, counts


def compute_idf1(gt: list, pred: list, iou_min: float = 0.5):
    """Return ``(idf1, idtp, idfp, idfn)``."""
    _, _, counts = identity_overlap_counts(gt, pred, iou_min)
    idtp = 0
    if counts.size:
        if counts.shape[0] <= counts.shape[1]:
            cols = kernels.solve_lsa(-counts.astype(np.float64))
            idtp = int(sum(counts[i, c] for i, c in enumerate(cols)))
        else:
            rows = kernels.solve_lsa(-counts.T.astype(np.float64))
            idtp = int(sum(counts[r, j] for j, r in enumerate(rows)))
    idfn = len(gt) - idtp
    idfp = len(pred) - idtp
    idf1 = float(Fraction(2 * idtp, max(1, 2 * idtp + idfp + idfn)))
    return idf1, idtp, idfp, idfn


# -- HOTA ---------------------------------------------------------------------------

def _match_rows_cols(score: np.ndarray):
    n, m = score.shape
    if n == 0 or m == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if n <= m:
        cols = kernels.solve_lsa(-score)
        return np.arange(n), cols
    rows = kernels.solve_lsa(-score.T)
    order = np.argsort(rows)
    return rows[order], np.arange(m)[order]


def hota_counts(gt: list, pred: list) -> dict:
    """Accumulate per-alpha HOTA statistics for one sequence."""
    n_a = len(ALPHAS)
    tp = np.zeros(n_a, dtype=np.int64)
    fn = np.zeros(n_a, dtype=np.int64)
    fp = np.zeros(n_a, dtype=np.int64)
    out = dict(tp=tp, fn=fn, fp=fp, assa_sum=np.zeros(n_a))
    if not gt or not pred:
        fn += len(gt)
        fp += len(pred)
        return out

    gt_ids = sorted({e.track_id for e in gt})
    pr_ids = sorted({e.track_id for e in pred})
    gi = {g: i for i, g in enumerate(gt_ids)}
    pi = {p: j for j, p in enumerate(pr_ids)}
    gt_f, pr_f = _by_frame(gt), _by_frame(pred)
    frames = sorted(set(gt_f) | set(pr_f))

    per_frame = []
    potential = np.zeros((len(gt_ids), len(pr_ids)))
    gt_count = np.zeros(len(gt_ids))
    pr_count = np.zeros(len(pr_ids))
    for f in frames:
        g_ids, g_boxes = _frame_arrays(gt_f.get(f, []))
        p_ids, p_boxes = _frame_arrays(pr_f.get(f, []))
        g_idx = np.array([gi[int(g)] for g in g_ids], dtype=np.int64)
        p_idx = np.array([pi[int(p)] for p in p_ids], dtype=np.int64)
        sim = kernels.iou_matrix(g_boxes, p_boxes)
        per_frame.append((g_idx, p_idx, sim))
        gt_count[g_idx] += 1
        pr_count[p_idx] += 1
        if sim.size:
            denom = sim.sum(axis=0)[None, :] + sim.sum(axis=1)[:, None] - sim
            sim_iou = np.zeros_like(sim)
            ok = denom > _EPS
            sim_iou[ok] = sim[ok] / denom[ok]
            potential[np.ix_(g_idx, p_idx)] += sim_iou

    alignment = potential / (gt_count[:, None] + pr_count[None, :] - potential)
    matches = np.zeros((n_a, len(gt_ids), len(pr_ids)))
    for g_idx, p_idx, sim in per_frame:
        if len(g_idx) == 0 or len(p_idx) == 0:
            fn += len(g_idx)
            fp += len(p_idx)
            continue
        score = alignment[np.ix_(g_idx, p_idx)] * sim
        rows, cols = _match_rows_cols(score)
        matched_sim = sim[rows, cols]
        for a, alpha in enumerate(ALPHAS):
            ok = matched_sim >= alpha - _EPS
            n_ok = int(ok.sum())
            tp[a] += n_ok
            fn[a] += len(g_idx) - n_ok
            fp[a] += len(p_idx) - n_ok
            if n_ok:
                matches[a, g_idx[rows[ok]], p_idx[cols[ok]]] += 1

    for a in range(n_a):
        m = matches[a]
        ass = m / np.maximum(1.0, gt_count[:, None] + pr_count[None, :] - m)
        out["assa_sum"][a] = float((m * ass).sum())
    return out


def _hota_from_counts(c: dict):
    tp, fn, fp = c["tp"], c["fn"], c["fp"]
    deta = tp / np.maximum(1, tp + fn + fp)
    assa = c["assa_sum"] / np.maximum(1, tp)
    hota = np.sqrt(deta * assa)
    return hota, deta, assa


def compute_hota(gt: list, pred: list):
    """Return ``(hota, deta, assa, per_alpha)`` where ``per_alpha`` holds the 19-point arrays."""
    c = hota_counts(gt, pred)
    hota, deta, assa = _hota_from_counts(c)
    per_alpha = dict(hota=hota, deta=deta, assa=assa, tp=c["tp"], fn=c["fn"], fp=c["fp"])
    return float(hota.mean()), float(deta.mean()), float(assa.mean()), per_alpha


# -- evaluation endpoint -------------------------------------------------------------

def _filter_class(entries, class_filter):
    if class_filter is None:
        return list(entries)
    cls = ClassId(int(class_filter))
    return [e for e in entries if e.class_id == cls]


def drop_single_frame_tracks(gt: list, pred: list, iou_min: float = 0.5):
    """Remove gt tracks seen in only one frame, with the predictions matching them.

    Decimation can leave a ground-truth object in a single processed frame,
    which no tracker that needs confirmation can report. Such objects become
    "don't care": predictions matched to them (IoU >= ``iou_min``) are
    discarded instead of counted as false positives.
    """
    lengths = defaultdict(int)
    for e in gt:
        lengths[e.track_id] += 1
    single = {tid for tid, n in lengths.items() if n == 1}
    if not single:
        return list(gt), list(pred)
    kept_gt = [e for e in gt if e.track_id not in single]
    gt_f, pr_f = _by_frame(gt), _by_frame(pred)
    drop = set()
    for f, g_rows in gt_f.items():
        ignored = [e for e in g_rows if e.track_id in single]
        p_rows = pr_f.get(f, [])
        if not ignored or not p_rows:
            continue
        _, g_boxes = _frame_arrays(g_rows)
        p_ids, p_boxes = _frame_arrays(p_rows)
        sim = kernels.iou_matrix(g_boxes, p_boxes)
        a = hungarian_assign(np.where(sim >= iou_min, sim, 0.0), min_score=max(iou_min, 1e-300))
        for i, j in a.matches:
            if g_rows[i].track_id in single:
                drop.add((f, int(p_ids[j])))
    kept_pred = [e for e in pred if (e.frame_index, e.track_id) not in drop]
    return kept_gt, kept_pred


def evaluate_entries(gt: list, pred: list, class_filter=None, iou_min: float = 0.5,
                     drop_single_frame_gt: bool = True) -> MetricReport:
    gt = [e for e in _filter_class(gt, class_filter) if e.confidence != 0]
    pred = _filter_class(pred, class_filter)
    if drop_single_frame_gt:
        gt, pred = drop_single_frame_tracks(gt, pred, iou_min)
    counts = clear_counts(gt, pred, iou_min)
    idf1, idtp, idfp, idfn = compute_idf1(gt, pred, iou_min)
    hc = hota_counts(gt, pred)
    return _assemble(counts, (idtp, idfp, idfn), hc)


def _assemble(counts, ids, hc) -> MetricReport:
    idtp, idfp, idfn = ids
    hota, deta, assa = _hota_from_counts(hc)
    num_gt = counts["num_gt"]
    return MetricReport(
        hota=float(hota.mean()),
        deta=float(deta.mean()),
        assa=float(assa.mean()),
        mota=compute_mota(counts) if num_gt > 0 else 0.0,
        idf1=float(Fraction(2 * idtp, max(1, 2 * idtp + idfp + idfn))),
        idsw=counts["idsw"],
        fp=counts["fp"],
        fn=counts["fn"],
        tp=counts["tp"],
        num_gt=num_gt,
        num_pred=counts["num_pred"],
        idtp=idtp,
        idfp=idfp,
        idfn=idfn,
        hota_alpha=hota,
        deta_alpha=deta,
        assa_alpha=assa,
        hota_tp=hc["tp"].copy(),
        hota_fn=hc["fn"].copy(),
        hota_fp=hc["fp"].copy(),
    )


def combine_reports(reports) -> MetricReport:
    """Pool several per-sequence reports (counts summed, AssA TP-weighted)."""
    reports = list(reports)
    counts = {k: sum(getattr(r, k) for r in reports) for k in ("tp", "fp", "fn", "idsw", "num_gt", "num_pred")}
    ids = tuple(sum(getattr(r, k) for r in reports) for k in ("idtp", "idfp", "idfn"))
    hc = dict(
        tp=sum((r.hota_tp for r in reports), np.zeros(len(ALPHAS), dtype=np.int64)),
        fn=sum((r.hota_fn for r in reports), np.zeros(len(ALPHAS), dtype=np.int64)),
        fp=sum((r.hota_fp for r in reports), np.zeros(len(ALPHAS), dtype=np.int64)),
        assa_sum=sum((r.assa_alpha * np.maximum(1, r.hota_tp) * (r.hota_tp > 0) for r in reports), np.zeros(len(ALPHAS))),
    )
    return _assemble(counts, ids, hc)


def evaluate(gt_path, results_path, class_filter=None, iou_min: float = 0.5,
             drop_single_frame_gt: bool = True) -> MetricReport:
    gt = parse_ground_truth(gt_path)
    pred = parse_results(results_path)
    return evaluate_entries(gt, pred, class_filter, iou_min, drop_single_frame_gt)
