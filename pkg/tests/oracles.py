"""Independent reference implementations used as test oracles.

Nothing here imports the package's matching, metric or gradient code. The
evaluators work on plain tuples ``(frame, track_id, (x1, y1, x2, y2))`` and
search every matching exhaustively instead of using an assignment solver.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

ALPHAS = [round(0.05 * k, 2) for k in range(1, 20)]
EPS = np.finfo(float).eps


# -- geometry -----------------------------------------------------------------------

def box_iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


# -- assignment -------------------------------------------------------------------------

def best_assignment_total(values, valid) -> float:
    """Largest exactly-summed score over all one-to-one matchings of valid entries.

    Enumerates every injective map of the shorter side into the longer one;
    invalid or negative pairs in a map are simply left unmatched (an unmatched
    row scores 0), so this is the best partial matching.
    """
    values = np.asarray(values, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    n, m = values.shape
    if n == 0 or m == 0:
        return 0.0
    if n > m:
        return best_assignment_total(values.T, valid.T)
    valid = valid & (values > 0.0)
    w = np.where(valid, values, 0.0)
    perms = np.array(list(itertools.permutations(range(m), n)), dtype=np.int64)
    sums = w[np.arange(n)[None, :], perms].sum(axis=1)
    best = sums.max()
    # re-add the near-best candidates exactly so ties between different sets
    # are resolved without rounding noise
    exact = []
    for k in np.nonzero(sums >= best - 1e-9)[0]:
        exact.append(math.fsum(w[i, perms[k, i]] for i in range(n) if valid[i, perms[k, i]]))
    return max(exact)


def min_full_assignment_cost(cost) -> float:
    """Smallest total cost over all maps of the shorter side into the longer one."""
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n == 0 or m == 0:
        return 0.0
    if n > m:
        return min_full_assignment_cost(cost.T)
    perms = np.array(list(itertools.permutations(range(m), n)), dtype=np.int64)
    sums = cost[np.arange(n)[None, :], perms].sum(axis=1)
    best = sums.min()
    return min(math.fsum(cost[i, perms[k, i]] for i in range(n)) for k in np.nonzero(sums <= best + 1e-9)[0])


def _partial_matchings(rows, cols, allowed):
    """Yield every matching (list of (row, col)) using only allowed pairs."""
    rows = list(rows)
    if not rows:
        yield []
        return
    r, rest = rows[0], rows[1:]
    yield from _partial_matchings(rest, cols, allowed)
    for c in cols:
        if (r, c) in allowed:
            for tail in _partial_matchings(rest, [x for x in cols if x != c], allowed):
                yield [(r, c)] + tail


# -- toy tracking data -------------------------------------------------------------------

def by_frame(entries):
    out = {}
    for f, tid, box in entries:
        out.setdefault(f, []).append((tid, box))
    return out


def random_toy_instance(rng, max_tracks=3, max_frames=6, max_boxes=4):
    """Ground truth and predictions with swaps, drops, jitter and false positives.

    Returns two lists of ``(frame, id, box)`` with at most ``max_boxes`` boxes
    per frame on either side.
    """
    while True:
        gt, pred = _toy_attempt(rng, max_tracks, max_frames, max_boxes)
        if gt:
            return gt, pred


def _toy_attempt(rng, max_tracks, max_frames, max_boxes):
    n_frames = int(rng.integers(1, max_frames + 1))
    n_gt = int(rng.integers(1, max_tracks + 1))
    n_pr = int(rng.integers(1, max_tracks + 1))
    gt, pred = [], []
    starts = rng.uniform(0, 60, (n_gt, 2))
    vel = rng.uniform(-6, 6, (n_gt, 2))
    size = rng.uniform(8, 20, (n_gt, 2))
    for f in range(n_frames):
        present = [k for k in range(n_gt) if rng.random() < 0.85][:max_boxes]
        for k in present:
            x, y = starts[k] + f * vel[k]
            gt.append((f, k + 1, (x, y, x + size[k, 0], y + size[k, 1])))
        used = set()
        boxes_here = 0
        for k in present:
            if rng.random() < 0.2 or boxes_here >= max_boxes:
                continue
            pid = int(rng.integers(1, n_pr + 1))
            if pid in used:
                continue
            used.add(pid)
            x, y = starts[k] + f * vel[k] + rng.normal(0, 3, 2)
            w, h = size[k] * rng.uniform(0.7, 1.3, 2)
            pred.append((f, pid + 10, (x, y, x + w, y + h)))
            boxes_here += 1
        for pid in range(1, n_pr + 1):
            if pid in used or boxes_here >= max_boxes or rng.random() > 0.2:
                continue
            x, y = rng.uniform(0, 80, 2)
            w, h = rng.uniform(8, 20, 2)
            pred.append((f, pid + 10, (x, y, x + w, y + h)))
            used.add(pid)
            boxes_here += 1
    return gt, pred


# -- CLEAR MOT ---------------------------------------------------------------------------

def clear_oracle(gt, pred, thr=0.5):
    """TP/FP/FN/IDSW and MOTA (as an exact fraction) by exhaustive per-frame search.

    Per frame the chosen matching maximises first the number of pairs that
    continue the previous frame's matches, then the summed IoU, over all
    matchings of pairs with IoU >= ``thr``.
    """
    g_f, p_f = by_frame(gt), by_frame(pred)
    prev, last = {}, {}
    tp = fp = fn = idsw = 0
    last_frame = max(set(g_f) | set(p_f), default=-1)
    for f in range(last_frame + 1):
        g_rows, p_rows = g_f.get(f, []), p_f.get(f, [])
        sims = {(i, j): box_iou(g_rows[i][1], p_rows[j][1]) for i in range(len(g_rows)) for j in range(len(p_rows))}
        allowed = {k for k, v in sims.items() if v >= thr}
        best, best_key = [], None
        for m in _partial_matchings(range(len(g_rows)), list(range(len(p_rows))), allowed):
            cont = sum(1 for i, j in m if prev.get(g_rows[i][0]) == p_rows[j][0])
            key = (cont, math.fsum(sims[i, j] for i, j in m))
            if best_key is None or key > best_key:
                best, best_key = m, key
        pairs = {g_rows[i][0]: p_rows[j][0] for i, j in best}
        for g, p in pairs.items():
            if g in last and last[g] != p:
                idsw += 1
        tp += len(pairs)
        fp += len(p_rows) - len(pairs)
        fn += len(g_rows) - len(pairs)
        prev = pairs
        last.update(pairs)
    num_gt = len(gt)
    mota = 1 - Fraction(fn + fp + idsw, num_gt) if num_gt else None
    return dict(tp=tp, fp=fp, fn=fn, idsw=idsw, mota=mota)


# -- IDF1 ----------------------------------------------------------------------------------

def idf1_oracle(gt, pred, thr=0.5):
    """IDTP by trying every one-to-one matching of trajectories."""
    g_ids = sorted({e[1] for e in gt})
    p_ids = sorted({e[1] for e in pred})
    g_f, p_f = by_frame(gt), by_frame(pred)
    overlap = {}
    for f, g_rows in g_f.items():
        for g, gb in g_rows:
            for p, pb in p_f.get(f, []):
                if box_iou(gb, pb) >= thr:
                    overlap[g, p] = overlap.get((g, p), 0) + 1
    allowed = set(itertools.product(g_ids, p_ids))
    idtp = max(sum(overlap.get(k, 0) for k in m) for m in _partial_matchings(g_ids, p_ids, allowed))
    idfn = len(gt) - idtp
    idfp = len(pred) - idtp
    denom = 2 * idtp + idfp + idfn
    return dict(idtp=idtp, idfp=idfp, idfn=idfn, idf1=Fraction(2 * idtp, denom) if denom else Fraction(0))


# -- HOTA -----------------------------------------------------------------------------------

def hota_oracle(gt, pred):
    """Per-alpha HOTA, DetA and AssA with exhaustive per-frame matching.

    The global alignment score of a (gt, pred) pair is its IoU-weighted
    co-occurrence over both trajectories' lengths; in each frame the matching
    maximising the summed alignment*IoU is chosen, and each alpha keeps the
    matched pairs with IoU >= alpha.
    """
    g_f, p_f = by_frame(gt), by_frame(pred)
    frames = sorted(set(g_f) | set(p_f))
    if not gt or not pred:
        z = [0.0] * len(ALPHAS)
        return dict(hota=z, deta=z, assa=z)
    g_len, p_len, potential = {}, {}, {}
    for e in gt:
        g_len[e[1]] = g_len.get(e[1], 0) + 1
    for e in pred:
        p_len[e[1]] = p_len.get(e[1], 0) + 1
    ious = {}
    for f in frames:
        g_rows, p_rows = g_f.get(f, []), p_f.get(f, [])
        s = [[box_iou(gb, pb) for _, pb in p_rows] for _, gb in g_rows]
        ious[f] = s
        row_sum = [sum(r) for r in s]
        col_sum = [sum(s[i][j] for i in range(len(g_rows))) for j in range(len(p_rows))]
        for i, (g, _) in enumerate(g_rows):
            for j, (p, _) in enumerate(p_rows):
                denom = row_sum[i] + col_sum[j] - s[i][j]
                if denom > EPS:
                    potential[g, p] = potential.get((g, p), 0.0) + s[i][j] / denom
    align = {}
    for (g, p), v in potential.items():
        align[g, p] = v / (g_len[g] + p_len[p] - v)

    n_a = len(ALPHAS)
    tp, fn, fp = [0] * n_a, [0] * n_a, [0] * n_a
    pair_hits = [dict() for _ in range(n_a)]
    for f in frames:
        g_rows, p_rows = g_f.get(f, []), p_f.get(f, [])
        s = ious[f]
        allowed = set(itertools.product(range(len(g_rows)), range(len(p_rows))))
        best, best_score = [], -1.0
        for m in _partial_matchings(range(len(g_rows)), list(range(len(p_rows))), allowed):
            score = math.fsum(align.get((g_rows[i][0], p_rows[j][0]), 0.0) * s[i][j] for i, j in m)
            if score > best_score:
                best, best_score = m, score
        for a, alpha in enumerate(ALPHAS):
            kept = [(i, j) for i, j in best if s[i][j] >= alpha - EPS]
            tp[a] += len(kept)
            fn[a] += len(g_rows) - len(kept)
            fp[a] += len(p_rows) - len(kept)
            for i, j in kept:
                key = (g_rows[i][0], p_rows[j][0])
                pair_hits[a][key] = pair_hits[a].get(key, 0) + 1

    hota, deta, assa = [], [], []
    for a in range(n_a):
        d = tp[a] / max(1, tp[a] + fn[a] + fp[a])
        total = 0.0
        for (g, p), c in pair_hits[a].items():
            total += c * c / (g_len[g] + p_len[p] - c)
        s = total / max(1, tp[a])
        deta.append(d)
        assa.append(s)
        hota.append(math.sqrt(d * s))
    return dict(hota=hota, deta=deta, assa=assa)


# -- contrastive objective in extended precision -----------------------------------------------

def contrastive_objective(xa, xb, weights, biases, tau, aux_weight):
    """Loss for a stack of heads ``weights (K, D, d)``, ``biases (K, d)``.

    Written from the loss definition only, in whatever dtype the inputs carry
    (the gradient check uses ``np.longdouble``).
    """
    za = np.einsum("nD,KDd->Knd", xa, weights) + biases[:, None, :]
    zb = np.einsum("nD,KDd->Knd", xb, weights) + biases[:, None, :]
    ua = za / np.sqrt((za * za).sum(axis=-1, keepdims=True))
    ub = zb / np.sqrt((zb * zb).sum(axis=-1, keepdims=True))
    s = np.einsum("Kid,Kjd->Kij", ua, ub)
    n = s.shape[1]
    total = np.zeros(s.shape[0], dtype=s.dtype)
    for mat in (s, np.swapaxes(s, 1, 2)):
        for i in range(n):
            terms = [(mat[:, i, j] - mat[:, i, i]) / tau for j in range(n) if j != i]
            if not terms:
                continue
            top = np.maximum(np.max(terms, axis=0), 0)
            total += top + np.log(np.exp(-top) + sum(np.exp(t - top) for t in terms))
    contrastive = total / (2 * n)
    eye = np.eye(n, dtype=s.dtype)
    aux = ((s - eye) ** 2).mean(axis=(1, 2))
    return contrastive + aux_weight * aux


def finite_difference_gradient(xa, xb, weight, bias, tau, aux_weight, h=1e-5, dtype=np.longdouble, chunk=512):
    """Central differences of :func:`contrastive_objective` for every parameter."""
    w0 = np.asarray(weight, dtype=dtype)
    b0 = np.asarray(bias, dtype=dtype)
    xa = np.asarray(xa, dtype=dtype)
    xb = np.asarray(xb, dtype=dtype)
    tau, aux_weight, step = dtype(tau), dtype(aux_weight), dtype(h)
    n_w = w0.size
    total = n_w + b0.size
    grad = np.zeros(total)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        k = len(idx)
        values = []
        for sign in (1, -1):
            w = np.repeat(w0[None], k, axis=0)
            b = np.repeat(b0[None], k, axis=0)
            for row, p in enumerate(idx):
                if p < n_w:
                    w[row].flat[p] += sign * step
                else:
                    b[row, p - n_w] += sign * step
            values.append(contrastive_objective(xa, xb, w, b, tau, aux_weight))
        grad[idx] = ((values[0] - values[1]) / (2 * step)).astype(np.float64)
    return grad[:n_w].reshape(w0.shape), grad[n_w:]


def relative_error(analytic, numeric, floor=1e-8):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
