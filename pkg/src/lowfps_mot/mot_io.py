"""MOTChallenge-style text I/O and frame decimation.

File layouts (all comma separated, frames 1-based on disk, 0-based in memory):

* ground truth / results: ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,class,visibility``
* detections: the same layout with ``id = -1``
* embedding sidecar: first line ``dim=<d>``, then ``frame,det_row_in_frame,v1,...,vd``
  where ``det_row_in_frame`` is the 0-based position of the detection among
  the rows of its frame in the detection file
* metadata: ``key=value`` lines (``name``, ``fps``, ``width``, ``height``,
  ``length``, ``stride``, ``phase``)
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import BoundingBox, ClassId, Detection, TrackEntry, l2_normalize
from .errors import DimensionError, DuplicateEntryError, EmbeddingJoinError, IoError, ParseError

log = logging.getLogger(__name__)

GT_FILE = "gt.txt"
DET_FILE = "det.txt"
EMB_FILE = "emb.txt"
FEAT_FILE = "feat.txt"
META_FILE = "meta.txt"


@dataclass(frozen=True)
class Frame:
    index: int
    detections: tuple = ()
    original_index: Optional[int] = None


@dataclass
class Sequence:
    name: str = "seq"
    fps: float = 30.0
    width: float = 1280.0
    height: float = 736.0
    frames: list = field(default_factory=list)
    ground_truth: Optional[list] = None
    stride: int = 1
    phase: int = 0

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        prev = -1
        for fr in self.frames:
            if fr.index <= prev:
                raise ValueError("frame indices must be strictly increasing")
            prev = fr.index

    def __len__(self):
        return len(self.frames)

    @property
    def embed_dim(self) -> Optional[int]:
        for fr in self.frames:
            for det in fr.detections:
                if det.embedding is not None:
                    return int(det.embedding.shape[0])
        return None

    @property
    def has_embeddings(self) -> bool:
        return any(det.embedding is not None for fr in self.frames for det in fr.detections)

    def metadata(self) -> dict:
        return {
            "name": self.name,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "length": len(self.frames),
            "stride": self.stride,
            "phase": self.phase,
        }


@dataclass(frozen=True)
class DecimationSpec:
    stride: int = 1
    phase: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not 0 <= self.phase < self.stride:
            raise ValueError("phase must lie in [0, stride)")


# -- low level helpers -------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def _read_lines(path) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_text(path, lines: Iterable[str]) -> None:
    text = "".join(line + "\n" for line in lines)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _split(line: str) -> list[str]:
    return [tok.strip() for tok in line.replace(" ", "").split(",")] if "," in line else line.split()


def _parse_row(line: str, lineno: int, path) -> tuple:
    parts = _split(line)
    if len(parts) < 6:
        raise ParseError(f"expected at least 6 fields, got {len(parts)}", lineno, path)
    try:
        frame = int(float(parts[0]))
        tid = int(float(parts[1]))
        left, top, w, h = (float(p) for p in parts[2:6])
        conf = float(parts[6]) if len(parts) > 6 else 1.0
        cls = ClassId.parse(parts[7]) if len(parts) > 7 else ClassId.UNKNOWN
        vis = float(parts[8]) if len(parts) > 8 else 1.0
    except ValueError as exc:
        raise ParseError(str(exc), lineno, path) from exc
    if frame < 1:
        raise ParseError(f"frame numbers are 1-based, got {frame}", lineno, path)
    if not (w > 0 and h > 0) or not all(np.isfinite([left, top, w, h])):
        raise ParseError(f"invalid box size {w}x{h}", lineno, path)
    return frame - 1, tid, BoundingBox.from_ltwh(left, top, w, h), cls, conf, vis


def _clamp(box: BoundingBox, image_size) -> Optional[BoundingBox]:
    if image_size is None:
        return box
    return box.clamped(*image_size)


def _entry_line(e: TrackEntry) -> str:
    left, top, w, h = e.box.to_ltwh()
    return ",".join(
        [
            str(e.frame_index + 1),
            str(e.track_id),
            _fmt(left),
            _fmt(top),
            _fmt(w),
            _fmt(h),
            _fmt(e.confidence),
            str(int(e.class_id)),
            _fmt(e.visibility),
        ]
    )


# -- tracks (ground truth and results) ---------------------------------------

def parse_tracks(path, image_size=None, check_duplicates: bool = True) -> list[TrackEntry]:
    """Parse a ground-truth or results file into entries sorted by (frame, id)."""
    entries = []
    seen = set()
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        frame, tid, box, cls, conf, vis = _parse_row(line, lineno, path)
        if check_duplicates:
            if (frame, tid) in seen:
                raise DuplicateEntryError(f"{path}:{lineno}: duplicate (frame={frame + 1}, id={tid})")
            seen.add((frame, tid))
        box = _clamp(box, image_size)
        if box is None:
            log.warning("%s:%d: box lies outside the image, skipped", path, lineno)
            continue
        entries.append(TrackEntry(frame, tid, box, cls, vis, conf))
    entries.sort(key=lambda e: (e.frame_index, e.track_id))
    return entries


def parse_ground_truth(path, image_size=None) -> list[TrackEntry]:
    return parse_tracks(path, image_size)


def parse_results(path, image_size=None) -> list[TrackEntry]:
    return parse_tracks(path, image_size)


def write_tracks(path, entries: Iterable[TrackEntry]) -> None:
    rows = sorted(entries, key=lambda e: (e.frame_index, e.track_id))
    _write_text(path, (_entry_line(e) for e in rows))


def write_results(path, entries: Iterable[TrackEntry]) -> None:
    rows = list(entries)
    for e in rows:
        if e.track_id < 1:
            raise ValueError(f"result row without a confirmed track id: {e}")
    write_tracks(path, rows)


write_ground_truth = write_tracks


# -- detections and embeddings ----------------------------------------------

def parse_embeddings(path) -> tuple[int, dict]:
    """Read a sidecar into ``(dim, {(frame, row): vector})`` (vectors unnormalized)."""
    lines = _read_lines(path)
    body = [(n, l) for n, l in enumerate(lines, start=1) if l.strip() and not l.lstrip().startswith("#")]
    if not body:
        raise ParseError("empty embedding sidecar", 1, path)
    lineno, header = body[0]
    if not header.strip().startswith("dim="):
        raise ParseError("missing 'dim=<d>' header", lineno, path)
    try:
        dim = int(header.strip()[4:])
    except ValueError as exc:
        raise ParseError("bad dim header", lineno, path) from exc
    rows = {}
    for lineno, line in body[1:]:
        parts = _split(line)
        try:
            frame = int(float(parts[0])) - 1
            row = int(float(parts[1]))
            values = np.array([float(p) for p in parts[2:]], dtype=np.float64)
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), lineno, path) from exc
        if values.shape[0] != dim:
            raise DimensionError(f"{path}:{lineno}: vector of dim {values.shape[0]}, header says {dim}")
        if (frame, row) in rows:
            raise DuplicateEntryError(f"{path}:{lineno}: duplicate embedding key")
        rows[(frame, row)] = values
    return dim, rows


def write_embeddings(path, dim: int, rows) -> None:
    """Write ``rows`` (iterable of ``(frame_index, row, vector)``) as a sidecar."""
    lines = [f"dim={dim}"]
    for frame, row, vec in rows:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (dim,):
            raise DimensionError(f"vector of shape {vec.shape} in a dim={dim} sidecar")
        lines.append(",".join([str(frame + 1), str(row)] + [_fmt(x) for x in vec]))
    _write_text(path, lines)


def parse_detections(path, embeddings_path=None, image_size=None, length: Optional[int] = None) -> list[Frame]:
    """Parse detections into frames; ``length`` adds empty frames up to that count.

    Embeddings from the sidecar are joined by (frame, row within frame) and
    L2-normalized.
    """
    per_frame: dict[int, list] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        frame, _tid, box, cls, conf, _vis = _parse_row(line, lineno, path)
        if not 0.0 <= conf <= 1.0:
            raise ParseError(f"confidence {conf} outside [0, 1]", lineno, path)
        per_frame.setdefault(frame, []).append((box, cls, conf))

    vectors = None
    if embeddings_path is not None:
        _dim, vectors = parse_embeddings(embeddings_path)
        n_dets = sum(len(v) for v in per_frame.values())
        if len(vectors) != n_dets:
            raise EmbeddingJoinError(f"{n_dets} detections but {len(vectors)} embedding rows")

    frames = []
    last = max(per_frame) + 1 if per_frame else 0
    if length is not None:
        if last > length:
            raise ParseError(f"detections reference frame {last} beyond length {length}", None, path)
        last = length
    for f in range(last):
        dets = []
        for row, (box, cls, conf) in enumerate(per_frame.get(f, [])):
            emb = None
            if vectors is not None:
                try:
                    emb = l2_normalize(vectors[(f, row)])
                except KeyError:
                    raise EmbeddingJoinError(f"no embedding for frame {f + 1}, row {row}") from None
            box = _clamp(box, image_size)
            if box is None:
                log.warning("%s: detection outside the image in frame %d, skipped", path, f + 1)
                continue
            dets.append(Detection(f, box, cls, conf, emb))
        frames.append(Frame(f, tuple(dets), f))
    return frames


def write_detections(path, frames, embeddings_path=None) -> None:
    lines, emb_rows, dim = [], [], None
    for fr in frames:
        for row, det in enumerate(fr.detections):
            lines.append(_entry_line(TrackEntry(fr.index, -1, det.box, det.class_id, -1.0, det.confidence)))
            if det.embedding is not None:
                dim = det.embedding.shape[0] if dim is None else dim
                emb_rows.append((fr.index, row, det.embedding))
    _write_text(path, lines)
    if embeddings_path is not None:
        if dim is None:
            raise EmbeddingJoinError("no detection carries an embedding")
        if len(emb_rows) != len(lines):
            raise EmbeddingJoinError("some detections lack embeddings")
        write_embeddings(embeddings_path, dim, emb_rows)


# -- metadata and whole sequences -------------------------------------------

def parse_metadata(path) -> dict:
    meta = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("["):
            continue
        if "=" not in line:
            raise ParseError("expected key=value", lineno, path)
        key, value = line.split("=", 1)
        meta[key.strip().lower()] = value.strip()
    return meta


def write_metadata(path, meta: dict) -> None:
    lines = []
    for key, value in meta.items():
        lines.append(f"{key}={_fmt(value) if isinstance(value, float) else value}")
    _write_text(path, lines)


def load_sequence(directory, embeddings: bool | str = True, clamp: bool = True) -> Sequence:
    """Load ``meta.txt``, ``det.txt``, optional ``gt.txt`` and sidecar from a directory.

    ``embeddings`` may be ``False`` (ignore sidecar), ``True`` (use ``emb.txt``
    when present) or a file name/path of an alternative sidecar.
    """
    directory = Path(directory)
    meta = parse_metadata(directory / META_FILE) if (directory / META_FILE).exists() else {}
    width = float(meta.get("width", 1280))
    height = float(meta.get("height", 736))
    length = int(meta["length"]) if "length" in meta else None
    image_size = (width, height) if clamp else None

    emb_path = None
    if embeddings is True:
        emb_path = directory / EMB_FILE if (directory / EMB_FILE).exists() else None
    elif embeddings:
        emb_path = Path(embeddings)
        if not emb_path.is_absolute():
            emb_path = directory / emb_path

    frames = []
    if (directory / DET_FILE).exists():
        frames = parse_detections(directory / DET_FILE, emb_path, image_size, length)
    elif length is not None:
        frames = [Frame(i, (), i) for i in range(length)]
    gt = parse_ground_truth(directory / GT_FILE, image_size) if (directory / GT_FILE).exists() else None

    stride = int(meta.get("stride", 1))
    phase = int(meta.get("phase", 0))
    frames = [replace(fr, original_index=phase + fr.index * stride) for fr in frames]
    return Sequence(
        name=meta.get("name", directory.name),
        fps=float(meta.get("fps", 30.0)),
        width=width,
        height=height,
        frames=frames,
        ground_truth=gt,
        stride=stride,
        phase=phase,
    )


def save_sequence(seq: Sequence, directory, embeddings: bool = True) -> None:
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    write_metadata(directory / META_FILE, seq.metadata())
    emb_path = directory / EMB_FILE if embeddings and seq.has_embeddings else None
    write_detections(directory / DET_FILE, seq.frames, emb_path)
    if seq.ground_truth is not None:
        write_ground_truth(directory / GT_FILE, seq.ground_truth)


# -- decimation --------------------------------------------------------------

def decimate(seq: Sequence, spec: DecimationSpec | int) -> Sequence:
    """Keep every ``stride``-th frame starting at ``phase`` and renumber from 0.

    Ground truth is decimated identically; boxes and identities are untouched.
    """
    if isinstance(spec, int):
        spec = DecimationSpec(spec)
    if spec.stride == 1 and spec.phase == 0:
        return seq
    k, ph = spec.stride, spec.phase
    frames = []
    for pos, fr in enumerate(seq.frames):
        if pos % k != ph:
            continue
        new_index = len(frames)
        dets = tuple(d.replace(frame_index=new_index) for d in fr.detections)
        original = fr.original_index if fr.original_index is not None else fr.index
        frames.append(Frame(new_index, dets, original))
    # ground truth follows the positional frame numbering of the source
    position = {fr.index: pos for pos, fr in enumerate(seq.frames)}
    gt = None
    if seq.ground_truth is not None:
        gt = []
        for e in seq.ground_truth:
            pos = position.get(e.frame_index, e.frame_index)
            if pos % k == ph:
                gt.append(replace(e, frame_index=pos // k))
    return Sequence(
        name=seq.name,
        fps=seq.fps / k,
        width=seq.width,
        height=seq.height,
        frames=frames,
        ground_truth=gt,
        stride=seq.stride * k,
        phase=seq.phase + ph * seq.stride,
    )
