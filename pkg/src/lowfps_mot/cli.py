"""Command-line entry point: ``lowfps-mot synth|track|eval|train|experiment``.

Settings come from an optional key-value config file (``key = value`` lines,
``#`` comments); command-line flags override the file. Data goes to files
and stdout, progress messages to stderr.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, EmbeddingJoinError, MotError
from .experiments import SWEEPS, ExperimentConfig, format_rows, run_sweep
from .learning import (
    AugmentParams,
    FrameInstances,
    TrainConfig,
    embed_features,
    load_head,
    save_curve,
    save_head,
    single_frame_dataset,
    train_head,
)
from .metrics import combine_reports, evaluate_entries, format_table
from .mot_io import (
    EMB_FILE,
    FEAT_FILE,
    load_sequence,
    parse_embeddings,
    parse_ground_truth,
    parse_metadata,
    parse_results,
    save_sequence,
    write_embeddings,
    write_ground_truth,
    write_metadata,
    write_results,
    decimate,
)
from .synth import config_from_mapping, config_to_mapping, decimate_scenario, generate_scenario
from .tracker import VARIANTS, TrackerConfig, run_sequence

log = logging.getLogger("lowfps_mot")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- config files -----------------------------------------------------------------

def read_config(path) -> dict:
    """Flat ``key -> string`` mapping from a key-value file (empty when ``path`` is None)."""
    if path is None:
        return {}
    return parse_metadata(path)


def _section(values: dict, prefix: str) -> dict:
    """Keys under ``prefix.`` with the prefix removed."""
    p = prefix + "."
    return {k[len(p):]: v for k, v in values.items() if k.startswith(p)}


def _bad_config(exc: Exception, path) -> DataError:
    return DataError(f"{path}: {exc}")


def _scenario_from(values: dict, path, seed=None):
    try:
        cfg = config_from_mapping(values)
    except (KeyError, ValueError, TypeError) as exc:
        raise _bad_config(exc, path) from exc
    return replace(cfg, seed=seed) if seed is not None else cfg


def _tracker_from(values: dict, path, variant=None) -> TrackerConfig:
    try:
        cfg = TrackerConfig.from_mapping(values)
        return replace(cfg, variant=variant) if variant else cfg
    except (KeyError, ValueError, TypeError) as exc:
        raise _bad_config(exc, path) from exc


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"augment"}
_AUG_KEYS = {f.name for f in fields(AugmentParams)}


def _train_from(values: dict, path, seed=None, dim=None) -> tuple[TrainConfig, dict]:
    """Train config plus the dataset keys (``frames``, ``scenario.*``)."""
    train, aug, rest = {}, {}, {}
    for key, raw in values.items():
        if key in _TRAIN_KEYS:
            train[key] = raw
        elif key.startswith("augment.") and key[8:] in _AUG_KEYS:
            aug[key[8:]] = raw
        else:
            rest[key] = raw
    try:
        base = TrainConfig()
        kw = {k: type(getattr(base, k))(v) for k, v in train.items()}
        augment = replace(base.augment, **{k: type(getattr(base.augment, k))(v) for k, v in aug.items()})
        cfg = replace(base, augment=augment, **kw)
    except (ValueError, TypeError) as exc:
        raise _bad_config(exc, path) from exc
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if dim is not None:
        cfg = replace(cfg, dim=dim)
    return cfg, rest


# -- synth ----------------------------------------------------------------------------

def cmd_synth(args) -> int:
    values = read_config(args.config)
    cfg = _scenario_from(values, args.config, args.seed)
    log.info("generating scenario seed=%d objects=%d frames=%d", cfg.seed, cfg.n_objects, cfg.n_frames)
    sc = generate_scenario(cfg)
    if args.stride > 1:
        sc = decimate_scenario(sc, args.stride)
    out = Path(args.out)
    save_sequence(sc.sequence, out)
    rows = [(fr.index, r, vec) for fr, feats in zip(sc.sequence.frames, sc.features) for r, vec in enumerate(feats)]
    write_embeddings(out / FEAT_FILE, cfg.feature_dim, rows)
    write_metadata(out / "scenario.txt", config_to_mapping(cfg))
    log.info("wrote %s (%d frames at %g fps)", out, len(sc.sequence), sc.sequence.fps)
    return EXIT_OK


# -- track ------------------------------------------------------------------------------

def _load_features(directory: Path, seq) -> list:
    """Raw feature rows aligned with the loaded detections of every frame."""
    path = directory / FEAT_FILE
    if not path.exists():
        raise EmbeddingJoinError(f"{path}: feature sidecar required to apply a trained head")
    dim, rows = parse_embeddings(path)
    feats = []
    for fr in seq.frames:
        frame_rows = [rows.get((fr.index, r)) for r in range(len(fr.detections))]
        if any(v is None for v in frame_rows) or sum(1 for k in rows if k[0] == fr.index) != len(fr.detections):
            raise EmbeddingJoinError(f"{path}: features do not line up with detections in frame {fr.index + 1}")
        feats.append(np.array(frame_rows).reshape(len(frame_rows), dim))
    return feats


def cmd_track(args) -> int:
    values = read_config(args.config)
    tcfg = _tracker_from(values, args.config, args.variant)
    head = load_head(args.head) if args.head else None
    outputs = []
    for seq_dir in args.sequences:
        seq_dir = Path(seq_dir)
        needs_emb = tcfg.variant == "embed" and head is None
        if needs_emb and not (seq_dir / EMB_FILE).exists():
            raise EmbeddingJoinError(f"{seq_dir}: the embed variant needs the {EMB_FILE} sidecar")
        seq = load_sequence(seq_dir, embeddings=needs_emb)
        if head is not None:
            seq = embed_features(seq, _load_features(seq_dir, seq), head)
        if args.stride > 1:
            seq = decimate(seq, args.stride)
        cfg = tcfg if "dt" in values else replace(tcfg, dt=seq.stride)
        log.info("tracking %s: %d frames, variant=%s, dt=%d", seq.name, len(seq), cfg.variant, cfg.dt)
        rows = run_sequence(seq, cfg)
        outputs.append((seq_dir, seq, rows))

    out = Path(args.out)
    single_file = len(outputs) == 1 and out.suffix and not out.is_dir()
    for seq_dir, seq, rows in outputs:
        target = out if single_file else out / f"{seq_dir.name}.txt"
        write_results(target, rows)
        if args.stride > 1 and seq.ground_truth is not None:
            write_ground_truth(target.with_name(target.stem + "_gt.txt"), seq.ground_truth)
        log.info("wrote %d rows to %s", len(rows), target)
    return EXIT_OK


# -- eval ---------------------------------------------------------------------------------

def cmd_eval(args) -> int:
    values = read_config(args.config)
    gts, results = list(args.gt), list(args.results)
    if len(gts) != len(results):
        raise UsageError("eval: give one --results per --gt")
    class_filter = args.class_filter if args.class_filter is not None else values.get("class_filter")
    try:
        iou_min = float(values.get("iou_min", 0.5)) if args.iou_min is None else args.iou_min
    except ValueError as exc:
        raise _bad_config(exc, args.config) from exc
    reports = []
    for g, r in zip(gts, results):
        gt = parse_ground_truth(g)
        pred = parse_results(r)
        reports.append(evaluate_entries(gt, pred, class_filter, iou_min))
    report = reports[0] if len(reports) == 1 else combine_reports(reports)
    label = Path(results[0]).stem if len(results) == 1 else "combined"
    sys.stdout.write(format_table([(label, report)]))
    if args.out:
        out = Path(args.out)
        target = out / "report.txt" if out.is_dir() or not out.suffix else out
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(report.to_keyvalue(), encoding="utf-8")
        log.info("wrote %s", target)
    return EXIT_OK


# -- train ---------------------------------------------------------------------------------

def _frames_from_dirs(dirs) -> list:
    frames = []
    for d in dirs:
        path = Path(d) / FEAT_FILE
        if not path.exists():
            raise EmbeddingJoinError(f"{path}: training data needs a feature sidecar")
        _dim, rows = parse_embeddings(path)
        by_frame = {}
        for (f, r), vec in sorted(rows.items()):
            by_frame.setdefault(f, []).append((r, vec))
        for f in sorted(by_frame):
            items = by_frame[f]
            feats = np.array([v for _, v in items])
            ids = np.array([r + 1 for r, _ in items])
            frames.append(FrameInstances(feats, ids, len(frames)))
    return frames


def cmd_train(args) -> int:
    values = read_config(args.config)
    cfg, rest = _train_from(values, args.config, args.seed, args.dim)
    if args.data:
        if _section(rest, "scenario"):
            raise UsageError("train: use either --data or scenario.* config keys, not both")
        frames = _frames_from_dirs(args.data)
    else:
        try:
            n_frames = int(rest.get("frames", 96))
        except ValueError as exc:
            raise _bad_config(exc, args.config) from exc
        base = _scenario_from(_section(rest, "scenario"), args.config)
        frames = single_frame_dataset(n_frames, seed=cfg.seed, base=base)
    log.info("training d=%d on %d frames for %d epochs", cfg.dim, len(frames), cfg.epochs)
    head, curve = train_head(frames, cfg)
    out = Path(args.out)
    save_head(out / "head.txt", head)
    save_curve(out / "curve.csv", curve)
    log.info("loss %.6g -> %.6g", curve[0], curve[-1])
    return EXIT_OK


# -- experiment ------------------------------------------------------------------------------

_EXPERIMENT_SCALARS = {"n_sequences", "stride", "octave_multiplier", "train_frames", "test_frames", "epochs", "lr"}
_EXPERIMENT_TUPLES = {"strides": int, "variants": str, "dims": int, "factors": float}


def _experiment_from(values: dict, path, seed=None, stride=None, variant=None, dim=None) -> ExperimentConfig:
    base = ExperimentConfig()
    kw = {}
    try:
        for key, raw in values.items():
            if key in _EXPERIMENT_SCALARS:
                kw[key] = type(getattr(base, key))(raw)
            elif key in _EXPERIMENT_TUPLES:
                kw[key] = tuple(_EXPERIMENT_TUPLES[key](x.strip()) for x in raw.split(",") if x.strip())
            elif key == "seed":
                kw[key] = int(raw)
            elif not (key.startswith("scenario.") or key.startswith("tracker.") or key == "sweep"):
                raise KeyError(f"unknown experiment key {key!r}")
        scenario = config_from_mapping(_section(values, "scenario"), base.scenario)
        tracker = TrackerConfig.from_mapping(_section(values, "tracker"))
        cfg = replace(base, scenario=scenario, tracker=tracker, **kw)
    except (KeyError, ValueError, TypeError) as exc:
        raise _bad_config(exc, path) from exc
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if stride is not None:
        cfg = replace(cfg, stride=stride)
    if variant is not None:
        cfg = replace(cfg, variants=(variant,))
    if dim is not None:
        cfg = replace(cfg, dims=(dim,))
    bad = [v for v in cfg.variants if v not in VARIANTS]
    if bad:
        raise _bad_config(ValueError(f"unknown variants {bad}"), path)
    return cfg


def cmd_experiment(args) -> int:
    values = read_config(args.config)
    sweep = args.sweep or values.get("sweep", "stride")
    names = sorted(SWEEPS) if sweep == "all" else [sweep]
    if any(n not in SWEEPS for n in names):
        raise UsageError(f"experiment: unknown sweep {sweep!r}")
    if args.input and _section(values, "scenario"):
        raise UsageError("experiment: use either --input or scenario.* config keys, not both")
    if args.input and names != ["stride"]:
        raise UsageError("experiment: --input only applies to the stride sweep")
    cfg = _experiment_from(values, args.config, args.seed, args.stride, args.variant, args.dim)
    sequences = [load_sequence(d) for d in args.input] if args.input else None
    out = Path(args.out) if args.out else None
    for name in names:
        log.info("running %s sweep", name)
        table = format_rows(run_sweep(name, cfg, sequences))
        sys.stdout.write(f"# {name} sweep\n{table}")
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{name}.txt").write_text(table, encoding="utf-8")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------------

def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lowfps-mot", description="Low-frame-rate multi-object tracking toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--config", help="scenario key-value file")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--stride", type=_positive, default=1, help="decimation stride applied after generation")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("track", help="run a tracker on sequence directories")
    p.add_argument("sequences", nargs="+", help="sequence directories (meta.txt, det.txt, optional emb.txt)")
    p.add_argument("--config", help="tracker key-value file")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--stride", type=_positive, default=1)
    p.add_argument("--head", help="trained head; re-embeds feat.txt features instead of using emb.txt")
    p.add_argument("--seed", type=_seed, help="accepted for uniformity; tracking is deterministic")
    p.add_argument("--out", required=True, help="results file (single sequence) or directory")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score results against ground truth")
    p.add_argument("--gt", action="append", required=True, help="ground-truth file (repeatable)")
    p.add_argument("--results", action="append", required=True, help="results file (repeatable)")
    p.add_argument("--class-filter", type=int, choices=(1, 2, 3))
    p.add_argument("--iou-min", type=float)
    p.add_argument("--config", help="key-value file with class_filter / iou_min")
    p.add_argument("--out", help="key-value report file or directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="train a projection head")
    p.add_argument("--config", help="training key-value file")
    p.add_argument("--data", action="append", help="sequence directory with feat.txt (repeatable)")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--dim", type=_positive)
    p.add_argument("--out", required=True, help="output directory for head.txt and curve.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="run an ablation sweep")
    p.add_argument("--sweep", choices=sorted(SWEEPS) + ["all"])
    p.add_argument("--config", help="experiment key-value file")
    p.add_argument("--input", action="append", help="sequence directory for the stride sweep (repeatable)")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--stride", type=_positive)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--dim", type=_positive)
    p.add_argument("--out", help="directory for <sweep>.txt tables")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except MotError as exc:  # DataError and friends
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
