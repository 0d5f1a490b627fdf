"""Deterministic synthetic UAV-like scenarios.

Objects move on piecewise-linear world paths under a panning, jumping and
zooming camera. Detections are degraded copies of the ground truth, and each
detection carries an identity embedding

    l2_normalize((1 - rho) * identity + rho * context + sigma * noise)

where ``context`` is a world-anchored descriptor of the object's
surroundings (slowly drifting scene vector plus a smooth positional code).

Randomness comes from numpy's PCG64 bit generator. Independent streams are
spawned from ``SeedSequence(seed)`` for the world, camera, detections,
embeddings and raw features, so changing a noise level does not move boxes.

Camera defaults (pan 4 px/frame, jump probability 0.05, jump scale 200 px at
30 fps) are modelling assumptions, not measured statistics.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .core import BoundingBox, ClassId, Detection, TrackEntry, iou, l2_normalize
from .mot_io import DecimationSpec, Frame, Sequence, decimate

_STREAMS = ("world", "camera", "detections", "embeddings", "features")


@dataclass(frozen=True)
class CameraModel:
    pan_velocity: tuple = (4.0, 0.0)
    jump_prob: float = 0.05
    jump_scale: float = 200.0
    zoom_drift: float = 1.0
    max_offset: tuple = (300.0, 150.0)

    def __post_init__(self):
        if not self.zoom_drift > 0:
            raise ValueError("zoom_drift must be positive")
        if not 0.0 <= self.jump_prob <= 1.0:
            raise ValueError("jump_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_objects: int = 4
    n_frames: int = 300
    fps: float = 30.0
    width: float = 1280.0
    height: float = 736.0
    camera: CameraModel = field(default_factory=CameraModel)
    det_miss_prob: float = 0.0
    fp_rate: float = 0.0
    box_jitter_std: float = 0.0
    embed_dim: int = 64
    embed_noise_std: float = 0.0
    context_weight: float = 0.0
    twins: int = 0
    object_speed: float = 1.0
    object_size: tuple = (30.0, 60.0)
    segment_frames: int = 60
    context_scale: float = 150.0
    context_drift: float = 0.01
    local_dim: int = 48
    context_dim: int = 16
    feature_noise_std: float = 0.0
    min_visibility: float = 0.5
    name: str = "synth"

    def __post_init__(self):
        if not 0.0 <= self.det_miss_prob < 1.0:
            raise ValueError("det_miss_prob must lie in [0, 1)")
        if self.fp_rate < 0 or self.embed_noise_std < 0 or self.box_jitter_std < 0:
            raise ValueError("noise rates must be non-negative")
        if not 0.0 <= self.context_weight <= 1.0:
            raise ValueError("context_weight must lie in [0, 1]")
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if self.n_frames < 2 or self.n_objects < 1:
            raise ValueError("need n_frames >= 2 and n_objects >= 1")
        if 2 * self.twins > self.n_objects:
            raise ValueError("too many twin pairs for n_objects")

    @property
    def feature_dim(self) -> int:
        return self.local_dim + self.context_dim


@dataclass
class SyntheticWorld:
    identities: np.ndarray  # (n_objects, d) unit rows
    local_features: np.ndarray  # (n_objects, local_dim) unit rows
    classes: list
    sizes: np.ndarray  # (n_objects, 2) width, height in pixels
    positions: np.ndarray  # (n_frames, n_objects, 2) world top-left corner
    camera_offsets: np.ndarray  # (n_frames, 2)
    camera_scales: np.ndarray  # (n_frames,)
    jump_frames: list  # frames t whose offset jumped relative to t-1
    scene_vectors: np.ndarray  # (n_frames, d) drifting global context
    scene_features: np.ndarray  # (n_frames, context_dim)
    _pos_code: dict = field(default_factory=dict, repr=False)

    def context(self, t: int, world_xy) -> np.ndarray:
        """Unit context descriptor in embedding space at world point ``world_xy``."""
        return l2_normalize(0.5 * self.scene_vectors[t] + self._code("embed", world_xy))

    def context_features(self, t: int, world_xy) -> np.ndarray:
        return l2_normalize(0.5 * self.scene_features[t] + self._code("feat", world_xy))

    def _code(self, which, world_xy) -> np.ndarray:
        freqs, phases, mix = self._pos_code[which]
        return l2_normalize(mix @ np.cos(freqs @ np.asarray(world_xy, dtype=np.float64) + phases))


@dataclass
class Scenario:
    config: ScenarioConfig
    sequence: Sequence
    world: SyntheticWorld
    features: list  # per frame: (n_dets, feature_dim) raw features aligned with detections
    sources: list  # per frame: object index per detection, -1 for false positives


def _streams(seed):
    children = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).spawn(len(_STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(_STREAMS, children)}


def _unit_rows(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _positional_code(rng, out_dim, scale, n_waves=32):
    freqs = rng.standard_normal((n_waves, 2)) / scale
    phases = rng.uniform(0.0, 2 * np.pi, n_waves)
    mix = rng.standard_normal((out_dim, n_waves)) / np.sqrt(n_waves)
    return freqs, phases, mix


def _build_world(cfg: ScenarioConfig, rngs) -> SyntheticWorld:
    rng = rngs["world"]
    n, T, d = cfg.n_objects, cfg.n_frames, cfg.embed_dim
    identities = _unit_rows(rng, n, d)
    local = _unit_rows(rng, n, cfg.local_dim)
    for k in range(cfg.twins):
        identities[2 * k + 1] = identities[2 * k]
        local[2 * k + 1] = local[2 * k]
    classes = [ClassId(int(c)) for c in rng.integers(1, 4, n)]
    lo, hi = cfg.object_size
    widths = rng.uniform(lo, hi, n)
    heights = widths * rng.uniform(0.55, 0.9, n)
    sizes = np.stack([widths, heights], axis=1)

    # world region that stays in view for any camera offset within bounds
    mx, my = cfg.camera.max_offset
    region_lo = np.array([mx + 10.0, my + 10.0])
    region_hi = np.array([cfg.width - mx - 10.0, cfg.height - my - 10.0]) - sizes.max(axis=0)
    if np.any(region_hi <= region_lo):
        region_lo = np.array([10.0, 10.0])
        region_hi = np.array([cfg.width, cfg.height]) - sizes.max(axis=0) - 10.0
    positions = np.zeros((T, n, 2))
    pos = rng.uniform(region_lo, region_hi, (n, 2))
    vel = np.zeros((n, 2))
    for t in range(T):
        if t % cfg.segment_frames == 0:
            angle = rng.uniform(0, 2 * np.pi, n)
            speed = rng.uniform(0, cfg.object_speed, n)
            vel = np.stack([np.cos(angle), np.sin(angle)], axis=1) * speed[:, None]
        if t > 0:
            pos = pos + vel
            # reflect at region borders (keeps paths piecewise linear)
            for axis in range(2):
                low = pos[:, axis] < region_lo[axis]
                high = pos[:, axis] > region_hi[axis]
                pos[low, axis] = 2 * region_lo[axis] - pos[low, axis]
                pos[high, axis] = 2 * region_hi[axis] - pos[high, axis]
                vel[low | high, axis] *= -1
        positions[t] = pos

    scene = np.zeros((T, d))
    scene_feat = np.zeros((T, cfg.context_dim))
    g = _unit_rows(rng, 1, d)[0]
    gf = _unit_rows(rng, 1, cfg.context_dim)[0]
    for t in range(T):
        if t > 0:
            g = l2_normalize(g + cfg.context_drift * rng.standard_normal(d))
            gf = l2_normalize(gf + cfg.context_drift * rng.standard_normal(cfg.context_dim))
        scene[t], scene_feat[t] = g, gf
    codes = {
        "embed": _positional_code(rng, d, cfg.context_scale),
        "feat": _positional_code(rng, cfg.context_dim, cfg.context_scale),
    }

    offsets, scales, jumps = _camera_path(cfg, rngs["camera"])
    return SyntheticWorld(identities, local, classes, sizes, positions, offsets, scales, jumps, scene, scene_feat, codes)


def _camera_path(cfg: ScenarioConfig, rng):
    cam = cfg.camera
    T = cfg.n_frames
    bound = np.asarray(cam.max_offset, dtype=np.float64)
    pan = np.asarray(cam.pan_velocity, dtype=np.float64).copy()
    offsets = np.zeros((T, 2))
    scales = np.ones(T)
    jumps = []
    o = np.zeros(2)
    for t in range(1, T):
        o = o + pan
        for axis in range(2):
            if abs(o[axis]) > bound[axis]:
                o[axis] = np.sign(o[axis]) * (2 * bound[axis] - abs(o[axis]))
                pan[axis] = -pan[axis]
        if rng.random() < cam.jump_prob:
            angle = rng.uniform(0, 2 * np.pi)
            disp = cam.jump_scale * rng.uniform(0.75, 1.25) * np.array([np.cos(angle), np.sin(angle)])
            cand = o + disp
            if np.any(np.abs(cand) > bound):
                cand = o - disp
            o = np.clip(cand, -bound, bound)
            jumps.append(t)
        offsets[t] = o
        scales[t] = cam.zoom_drift**t
    return offsets, scales, jumps


def image_box(cfg: ScenarioConfig, world: SyntheticWorld, t: int, k: int) -> BoundingBox:
    """Unclipped image-plane box of object ``k`` at frame ``t``."""
    c = np.array([cfg.width / 2, cfg.height / 2])
    s = world.camera_scales[t]
    tl = (world.positions[t, k] - world.camera_offsets[t] - c) * s + c
    w, h = world.sizes[k] * s
    return BoundingBox(tl[0], tl[1], tl[0] + w, tl[1] + h)


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    rngs = _streams(cfg.seed)
    world = _build_world(cfg, rngs)
    r_det, r_emb, r_feat = rngs["detections"], rngs["embeddings"], rngs["features"]
    d, rho, sigma = cfg.embed_dim, cfg.context_weight, cfg.embed_noise_std
    lo, hi = cfg.object_size

    gt, frames, features, sources = [], [], [], []
    for t in range(cfg.n_frames):
        dets, feats, srcs = [], [], []
        for k in range(cfg.n_objects):
            full = image_box(cfg, world, t, k)
            box = full.clamped(cfg.width, cfg.height)
            if box is None:
                continue
            vis = box.area / full.area
            gt.append(TrackEntry(t, k + 1, box, world.classes[k], vis, 1.0))
            if vis < cfg.min_visibility:
                continue
            if r_det.random() < cfg.det_miss_prob:
                continue
            jitter = r_det.standard_normal(4) * cfg.box_jitter_std
            det_box = _jittered(box, jitter, cfg)
            conf = 0.5 + 0.5 * r_det.random()
            centre_world = world.positions[t, k] + world.sizes[k] / 2
            if rho == 0 and sigma == 0:
                # identities are already unit; skip the renormalization ulp
                emb = world.identities[k].copy()
            else:
                emb_raw = (1 - rho) * world.identities[k] + rho * world.context(t, centre_world)
                emb = l2_normalize(emb_raw + sigma * r_emb.standard_normal(d))
            feat = np.concatenate([world.local_features[k], world.context_features(t, centre_world)])
            feat = feat + cfg.feature_noise_std * r_feat.standard_normal(cfg.feature_dim)
            dets.append(Detection(t, det_box, world.classes[k], conf, emb))
            feats.append(feat)
            srcs.append(k)
        for _ in range(r_det.poisson(cfg.fp_rate) if cfg.fp_rate > 0 else 0):
            w = r_det.uniform(lo, hi)
            h = w * r_det.uniform(0.55, 0.9)
            x = r_det.uniform(0, cfg.width - w)
            y = r_det.uniform(0, cfg.height - h)
            conf = r_det.uniform(0.1, 0.6)
            cls = ClassId(int(r_det.integers(1, 4)))
            emb = l2_normalize(r_emb.standard_normal(d))
            dets.append(Detection(t, BoundingBox(x, y, x + w, y + h), cls, conf, emb))
            feats.append(r_feat.standard_normal(cfg.feature_dim) / np.sqrt(cfg.feature_dim))
            srcs.append(-1)
        order = r_det.permutation(len(dets)) if dets else np.zeros(0, dtype=int)
        frames.append(Frame(t, tuple(dets[i] for i in order), t))
        features.append(np.array([feats[i] for i in order]).reshape(len(dets), cfg.feature_dim))
        sources.append([srcs[i] for i in order])

    seq = Sequence(cfg.name, cfg.fps, cfg.width, cfg.height, frames, gt)
    return Scenario(cfg, seq, world, features, sources)


def _jittered(box: BoundingBox, jitter, cfg) -> BoundingBox:
    if not np.any(jitter):
        return box
    x1, y1, x2, y2 = np.array(box.as_tuple()) + jitter
    x1, x2 = min(x1, x2 - 1.0), max(x2, x1 + 1.0)
    y1, y2 = min(y1, y2 - 1.0), max(y2, y1 + 1.0)
    out = BoundingBox(x1, y1, x2, y2).clamped(cfg.width, cfg.height)
    return out if out is not None else box


def decimate_scenario(sc: Scenario, spec: DecimationSpec | int) -> Scenario:
    """Decimate the sequence together with its per-detection side data."""
    spec = DecimationSpec(spec) if isinstance(spec, int) else spec
    keep = [i for i in range(len(sc.sequence.frames)) if i % spec.stride == spec.phase]
    return Scenario(
        sc.config,
        decimate(sc.sequence, spec),
        sc.world,
        [sc.features[i] for i in keep],
        [sc.sources[i] for i in keep],
    )


def apply_resolution_scale(
    seq: Sequence,
    factor: float,
    embed_noise_std: float = 0.0,
    octave_multiplier: float = 1.2,
    seed: int = 0,
) -> Sequence:
    """Downscale boxes and image size by ``factor`` and degrade embeddings.

    Each octave of downscaling multiplies the embedding noise level by
    ``octave_multiplier``: the extra per-component noise added to the unit
    embeddings has std ``embed_noise_std * sqrt(m**(2*octaves) - 1)``.
    """
    if not 0 < factor <= 1:
        raise ValueError("factor must lie in (0, 1]")
    if factor == 1:
        return seq
    octaves = np.log2(1.0 / factor)
    extra = embed_noise_std * np.sqrt(max(octave_multiplier ** (2 * octaves) - 1.0, 0.0))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x5CA1E])))
    frames = []
    for fr in seq.frames:
        dets = []
        for det in fr.detections:
            emb = det.embedding
            if emb is not None and extra > 0:
                emb = l2_normalize(emb + extra * rng.standard_normal(emb.shape[0]))
            dets.append(det.replace(box=det.box.scaled(factor), embedding=emb))
        frames.append(replace(fr, detections=tuple(dets)))
    gt = None
    if seq.ground_truth is not None:
        gt = [replace(e, box=e.box.scaled(factor)) for e in seq.ground_truth]
    return replace(seq, width=seq.width * factor, height=seq.height * factor, frames=frames, ground_truth=gt)


def jumpcut_v1(seed: int = 0, **overrides) -> ScenarioConfig:
    """Camera-jump scenario family used for the low-fps robustness check.

    30 fps source meant to be decimated with stride 6. Jumps are large
    relative to box sizes so the same object's boxes do not overlap across a
    jump; :func:`generate_jumpcut` verifies this by brute force.
    """
    values = dict(
        seed=seed,
        name=f"jumpcut-v1-{seed}",
        n_objects=5,
        n_frames=300,
        fps=30.0,
        camera=CameraModel(pan_velocity=(2.0, 1.0), jump_prob=0.04, jump_scale=220.0, max_offset=(300.0, 150.0)),
        det_miss_prob=0.05,
        fp_rate=0.3,
        box_jitter_std=1.5,
        embed_dim=64,
        embed_noise_std=0.05,
        context_weight=0.3,
        object_speed=1.0,
    )
    values.update(overrides)
    return ScenarioConfig(**values)


JUMPCUT_STRIDE = 6


def jump_overlaps(sc: Scenario, stride: int = JUMPCUT_STRIDE) -> list:
    """Brute-force list of ``(t0, t1, object, iou)`` for same-object overlaps across jumps.

    Looks at every pair of consecutive kept frames (``t0``, ``t1 = t0 + stride``)
    with a camera jump in between and every object present in both.
    """
    by_frame = {}
    for e in sc.sequence.ground_truth:
        by_frame.setdefault(e.frame_index, {})[e.track_id] = e.box
    jumps = sc.world.jump_frames
    hits = []
    for t0 in range(0, sc.config.n_frames - stride, stride):
        t1 = t0 + stride
        if not any(t0 < j <= t1 for j in jumps):
            continue
        a, b = by_frame.get(t0, {}), by_frame.get(t1, {})
        for tid in sorted(set(a) & set(b)):
            overlap = iou(a[tid], b[tid])
            if overlap > 0.0:
                hits.append((t0, t1, tid, overlap))
    return hits


def generate_jumpcut(seed: int = 0, max_attempts: int = 50, **overrides) -> Scenario:
    """Generate a ``jumpcut-v1`` scenario whose jumps verifiably break overlap.

    Candidates are drawn from ``SeedSequence([seed, attempt])``-derived seeds
    until one passes :func:`jump_overlaps`; the accepted seed is stored in the
    returned config.
    """
    for attempt in range(max_attempts):
        derived = seed if attempt == 0 else int(np.random.SeedSequence([seed, attempt]).generate_state(1, np.uint64)[0])
        cfg = jumpcut_v1(derived, **overrides)
        cfg = replace(cfg, name=f"jumpcut-v1-{seed}")
        sc = generate_scenario(cfg)
        if sc.world.jump_frames and not jump_overlaps(sc):
            return sc
    raise RuntimeError(f"no overlap-free jumpcut scenario for seed {seed} in {max_attempts} attempts")


# -- config files -------------------------------------------------------------

def config_from_mapping(values: dict, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Build a config from flat ``key -> string`` pairs (``camera.*`` keys nest)."""
    base = base or ScenarioConfig()
    top, cam = {}, {}
    types = {f.name: f for f in fields(ScenarioConfig)}
    cam_types = {f.name: f for f in fields(CameraModel)}
    for key, raw in values.items():
        key = key.strip()
        if key.startswith("camera."):
            name = key[len("camera."):]
            if name not in cam_types:
                raise KeyError(f"unknown camera key {name!r}")
            cam[name] = _coerce(raw, getattr(base.camera, name))
        elif key in types and key != "camera":
            top[key] = _coerce(raw, getattr(base, key))
        else:
            raise KeyError(f"unknown scenario key {key!r}")
    camera = replace(base.camera, **cam) if cam else base.camera
    return replace(base, camera=camera, **top)


def config_to_mapping(cfg: ScenarioConfig) -> dict:
    out = {}
    for f in fields(ScenarioConfig):
        value = getattr(cfg, f.name)
        if f.name == "camera":
            for cf in fields(CameraModel):
                out[f"camera.{cf.name}"] = _render(getattr(value, cf.name))
        else:
            out[f.name] = _render(value)
    return out


def _coerce(raw, like):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if isinstance(like, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        return tuple(float(x) for x in raw.strip("()").split(",") if x.strip())
    return raw


def _render(value):
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
