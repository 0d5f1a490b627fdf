"""Self-supervised contrastive training of a linear projection head.

Positives come from two augmented views of the same single annotated frame;
no temporal links are used. The loss per anchor ``v`` is

    log(1 + sum_{k+} sum_{k-} exp((v.k- - v.k+) / tau))

plus ``aux_weight`` times the mean squared error between the cross-view
cosine matrix and the identity (1 for the same instance, 0 otherwise).
Gradients are derived by hand and checked against finite differences in the
test suite. Optimisation is plain mini-batch gradient descent with a fixed
learning rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import EmptyFrameError, MissingPositiveError, ParseError, TrainingDivergedError
from .mot_io import Sequence, _read_lines, _write_text
from .core import l2_normalize

DEFAULT_DIMS = (256, 64, 32)


@dataclass(frozen=True)
class AugmentParams:
    jitter_std: float = 0.05
    context_scale: float = 0.3  # context block multiplied by U(1 - s, 1 + s)
    context_dim: int = 16  # trailing columns that form the context block

    @property
    def is_identity(self) -> bool:
        return self.jitter_std == 0 and self.context_scale == 0


@dataclass
class ViewPair:
    view_a: np.ndarray  # (n, D)
    view_b: np.ndarray  # (n, D)
    instance_ids: np.ndarray  # (n,) shared by both views, row-aligned
    frame_id: int = 0

    def __post_init__(self):
        if self.view_a.shape != self.view_b.shape:
            raise ValueError("views must hold the same instances")


@dataclass
class ProjectionHead:
    weight: np.ndarray  # (D, d)
    bias: np.ndarray  # (d,)

    @classmethod
    def init(cls, in_dim: int, out_dim: int, seed: int = 0) -> "ProjectionHead":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), in_dim, out_dim])))
        return cls(rng.standard_normal((in_dim, out_dim)) / np.sqrt(in_dim), np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def raw(self, x) -> np.ndarray:
        return np.atleast_2d(np.asarray(x, dtype=np.result_type(self.weight, np.float64))) @ self.weight + self.bias

    def embed(self, x) -> np.ndarray:
        z = self.raw(x)
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(self.weight.copy(), self.bias.copy())


# -- data -----------------------------------------------------------------------

@dataclass
class FrameInstances:
    """All annotated instances of one frame (single-frame supervision)."""

    features: np.ndarray  # (n, D)
    instance_ids: np.ndarray  # (n,) positive ids, unique within the frame
    frame_id: int = 0


def make_view_pair(frame: FrameInstances, aug: AugmentParams = AugmentParams(), seed: int = 0) -> ViewPair:
    x = np.atleast_2d(np.asarray(frame.features, dtype=np.float64))
    if x.shape[0] == 0 or x.size == 0:
        raise EmptyFrameError(f"frame {frame.frame_id} has no instances")
    if aug.is_identity:
        return ViewPair(x.copy(), x.copy(), np.asarray(frame.instance_ids), frame.frame_id)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(frame.frame_id), 0xA06])))
    views = []
    for _ in range(2):
        v = x + aug.jitter_std * rng.standard_normal(x.shape)
        if aug.context_dim > 0 and aug.context_scale > 0:
            s = rng.uniform(1 - aug.context_scale, 1 + aug.context_scale, (x.shape[0], 1))
            v[:, -aug.context_dim:] *= s
        views.append(v)
    return ViewPair(views[0], views[1], np.asarray(frame.instance_ids), frame.frame_id)


# -- loss -----------------------------------------------------------------------

def contrastive_loss(anchor, positives, negatives, tau: float = 0.07) -> float:
    """Multi-positive contrastive loss of one anchor (all inputs unit vectors)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    pos = np.atleast_2d(np.asarray(positives, dtype=np.float64)) if len(positives) else np.zeros((0, 0))
    if pos.shape[0] == 0:
        raise MissingPositiveError("contrastive loss needs at least one positive")
    if len(negatives) == 0:
        return 0.0
    neg = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    v = np.asarray(anchor, dtype=np.float64)
    diffs = ((neg @ v)[None, :] - (pos @ v)[:, None]) / tau
    return float(np.logaddexp.reduce(np.concatenate([[0.0], diffs.ravel()])))


def _anchor_terms(s: np.ndarray, tau: float):
    """Per-row loss and d(loss)/dS for anchors along rows, positive on the diagonal."""
    n = s.shape[0]
    diag = np.diag(s)
    a = (s - diag[:, None]) / tau
    np.fill_diagonal(a, -np.inf)
    m = np.maximum(a.max(axis=1, initial=-np.inf), 0.0)
    e = np.exp(a - m[:, None])
    denom = np.exp(-m) + e.sum(axis=1)
    loss = m + np.log(denom)
    p = e / denom[:, None]
    g = p / tau
    g[np.arange(n), np.arange(n)] = -p.sum(axis=1) / tau
    return loss, g


def loss_and_gradient(pair: ViewPair, head: ProjectionHead, tau: float = 0.07, aux_weight: float = 0.25,
                      return_parts: bool = False):
    """Loss of one view pair and its gradient w.r.t. head weight and bias.

    Returns ``(loss, grad_weight, grad_bias)``; with ``return_parts`` a dict
    with the separate loss terms and their gradients w.r.t. the cosine matrix.
    """
    xa, xb = pair.view_a, pair.view_b
    n = xa.shape[0]
    za, zb = head.raw(xa), head.raw(xb)
    na = np.linalg.norm(za, axis=1, keepdims=True)
    nb = np.linalg.norm(zb, axis=1, keepdims=True)
    ua, ub = za / na, zb / nb
    s = ua @ ub.T

    loss_a, g_a = _anchor_terms(s, tau)
    loss_b, g_b = _anchor_terms(s.T, tau)
    contrastive = (loss_a.sum() + loss_b.sum()) / (2 * n)
    g_con = (g_a + g_b.T) / (2 * n)

    resid = s - np.eye(n)
    aux = float((resid**2).mean())
    g_aux = 2.0 * resid / (n * n)

    g_s = g_con + aux_weight * g_aux
    d_ua = g_s @ ub
    d_ub = g_s.T @ ua
    d_za = (d_ua - ua * (ua * d_ua).sum(axis=1, keepdims=True)) / na
    d_zb = (d_ub - ub * (ub * d_ub).sum(axis=1, keepdims=True)) / nb
    grad_w = xa.T @ d_za + xb.T @ d_zb
    grad_b = d_za.sum(axis=0) + d_zb.sum(axis=0)
    loss = float(contrastive + aux_weight * aux)
    if return_parts:
        parts = dict(contrastive=float(contrastive), aux=aux, grad_s_contrastive=g_con, grad_s_aux=g_aux, cosine=s)
        return loss, grad_w, grad_b, parts
    return loss, grad_w, grad_b


def loss_gradient(pair: ViewPair, head: ProjectionHead, tau: float = 0.07, aux_weight: float = 0.25) -> ProjectionHead:
    """Parameter gradient packed as a :class:`ProjectionHead`."""
    _, gw, gb = loss_and_gradient(pair, head, tau, aux_weight)
    return ProjectionHead(gw, gb)


def pair_loss(pair: ViewPair, head: ProjectionHead, tau: float = 0.07, aux_weight: float = 0.25) -> float:
    return loss_and_gradient(pair, head, tau, aux_weight)[0]


# -- training -------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    dim: int = 64
    lr: float = 0.1
    epochs: int = 200
    tau: float = 0.07
    aux_weight: float = 0.25
    batch_frames: int = 8
    seed: int = 0
    augment: AugmentParams = field(default_factory=AugmentParams)


def train_head(frames: list, cfg: TrainConfig = TrainConfig()):
    """Train a projection head; returns ``(head, loss_curve)`` (mean loss per epoch)."""
    frames = [f for f in frames if len(f.features)]
    ids = {(f.frame_id, int(i)) for f in frames for i in f.instance_ids}
    if len(ids) < 2:
        raise ValueError("training needs at least two distinct instances")
    in_dim = frames[0].features.shape[1]
    head = ProjectionHead.init(in_dim, cfg.dim, cfg.seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(cfg.seed), 0x7EA1])))
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(frames))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_frames):
            batch = order[start:start + cfg.batch_frames]
            gw = np.zeros_like(head.weight)
            gb = np.zeros_like(head.bias)
            for k in batch:
                pair = make_view_pair(frames[k], cfg.augment, seed=cfg.seed * 1_000_003 + epoch)
                loss, w, b = loss_and_gradient(pair, head, cfg.tau, cfg.aux_weight)
                total += loss
                count += 1
                gw += w
                gb += b
            head.weight -= cfg.lr * gw / len(batch)
            head.bias -= cfg.lr * gb / len(batch)
        mean = total / max(1, count)
        if not np.isfinite(mean) or not np.all(np.isfinite(head.weight)):
            raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
        curve.append(mean)
    return head, curve


def eval_retrieval(head: Optional[ProjectionHead], pairs: list) -> float:
    """Fraction of view-A instances whose cosine nearest neighbour in view B is their counterpart.

    ``head=None`` compares the raw view vectors directly.
    """
    correct = total = 0
    for pair in pairs:
        if head is None:
            ua = pair.view_a / np.linalg.norm(pair.view_a, axis=1, keepdims=True)
            ub = pair.view_b / np.linalg.norm(pair.view_b, axis=1, keepdims=True)
        else:
            ua, ub = head.embed(pair.view_a), head.embed(pair.view_b)
        nearest = np.argmax(ua @ ub.T, axis=1)
        correct += int((pair.instance_ids[nearest] == pair.instance_ids).sum())
        total += len(pair.instance_ids)
    return correct / total if total else 0.0


def held_out_pairs(frames: list, aug: AugmentParams, seed: int) -> list:
    return [make_view_pair(f, aug, seed) for f in frames]


# -- synthetic single-frame data ------------------------------------------------

def single_frame_dataset(n_frames: int, seed: int = 0, base=None, max_objects: int = 6,
                         single_object_share: float = 0.2) -> list:
    """Frames with per-frame instance ids only, cut from synthetic scenarios.

    A share of frames keeps just one annotated object, matching the practice
    of retaining single-object frames for positive-pair learning.
    """
    from .synth import ScenarioConfig, generate_scenario

    base = base or ScenarioConfig()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x5F])))
    out = []
    while len(out) < n_frames:
        k = int(rng.integers(1, max_objects + 1))
        cfg = replace(base, seed=int(rng.integers(0, 2**62)), n_objects=k, n_frames=2, fp_rate=0.0,
                      det_miss_prob=0.0, twins=min(base.twins, k // 2))
        sc = generate_scenario(cfg)
        feats = sc.features[0]
        src = np.array(sc.sources[0])
        if len(src) == 0:
            continue
        if rng.random() < single_object_share:
            pick = int(rng.integers(0, len(src)))
            feats, src = feats[pick:pick + 1], src[pick:pick + 1]
        out.append(FrameInstances(feats, src + 1, len(out)))
    return out


def embed_features(seq: Sequence, features: list, head: ProjectionHead) -> Sequence:
    """Replace detection embeddings with projected raw features."""
    frames = []
    for fr, feats in zip(seq.frames, features):
        if len(fr.detections) == 0:
            frames.append(fr)
            continue
        emb = head.embed(feats)
        dets = tuple(d.replace(embedding=l2_normalize(e)) for d, e in zip(fr.detections, emb))
        frames.append(replace(fr, detections=dets))
    return replace(seq, frames=frames)


# -- serialization --------------------------------------------------------------

def save_head(path, head: ProjectionHead) -> None:
    lines = [f"{head.in_dim} {head.out_dim}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in head.weight]
    lines.append(" ".join(repr(float(v)) for v in head.bias))
    _write_text(path, lines)


def load_head(path) -> ProjectionHead:
    lines = [l for l in _read_lines(path) if l.strip()]
    try:
        in_dim, out_dim = (int(t) for t in lines[0].split())
        rows = [[float(t) for t in l.split()] for l in lines[1:]]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed head file: {exc}", None, path) from exc
    if len(rows) != in_dim + 1 or any(len(r) != out_dim for r in rows):
        raise ParseError("head file shape does not match its header", None, path)
    return ProjectionHead(np.array(rows[:in_dim]), np.array(rows[in_dim]))


def save_curve(path, curve) -> None:
    _write_text(path, ["epoch,loss"] + [f"{i},{float(v)!r}" for i, v in enumerate(curve)])


def load_curve(path) -> list:
    lines = _read_lines(path)
    return [float(l.split(",")[1]) for l in lines[1:] if l.strip()]
