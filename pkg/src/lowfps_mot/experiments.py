"""Ablation sweeps over stride, tracker variant, embedding size and resolution.

Every sweep runs on the standard synthetic benchmark (or on sequences loaded
from disk for the stride sweep) and returns rows keyed by a sortable cell
key, so the assembled table does not depend on evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .learning import (
    AugmentParams,
    TrainConfig,
    embed_features,
    eval_retrieval,
    held_out_pairs,
    single_frame_dataset,
    train_head,
)
from .metrics import MetricReport, combine_reports, evaluate_entries
from .mot_io import Sequence, decimate
from .synth import CameraModel, ScenarioConfig, apply_resolution_scale, decimate_scenario, generate_scenario
from .tracker import VARIANTS, TrackerConfig, run_sequence

# Moderately hard scene: six objects including one pair of identical-looking
# twins, missed and spurious detections, default camera motion.
STANDARD_BENCHMARK = ScenarioConfig(
    name="standard",
    n_objects=6,
    n_frames=300,
    camera=CameraModel(),
    det_miss_prob=0.1,
    fp_rate=0.5,
    box_jitter_std=2.0,
    embed_dim=64,
    embed_noise_std=0.05,
    context_weight=0.3,
    twins=1,
    feature_noise_std=0.1,
)
STANDARD_AUGMENT = AugmentParams(jitter_std=0.1, context_scale=0.3, context_dim=STANDARD_BENCHMARK.context_dim)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_sequences: int = 10
    scenario: ScenarioConfig = STANDARD_BENCHMARK
    input_dirs: tuple = ()  # load sequences from disk instead of generating them
    stride: int = 6
    strides: tuple = (1, 2, 6)
    variants: tuple = VARIANTS
    dims: tuple = (256, 64, 32)
    factors: tuple = (1.0, 0.5, 0.25, 0.125)
    octave_multiplier: float = 1.2
    train_frames: int = 96
    test_frames: int = 200
    epochs: int = 200
    lr: float = 0.1
    augment: AugmentParams = STANDARD_AUGMENT
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    def __post_init__(self):
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be positive")


@dataclass
class ExperimentRow:
    key: tuple
    label: str
    report: MetricReport
    extra: dict = field(default_factory=dict)


def benchmark_scenarios(cfg: ExperimentConfig):
    """Undecimated scenarios of the benchmark, one per derived seed."""
    seeds = np.random.SeedSequence([int(cfg.seed), 0xBE7C]).generate_state(cfg.n_sequences, np.uint64)
    return [
        generate_scenario(replace(cfg.scenario, seed=int(s), name=f"{cfg.scenario.name}-{k}"))
        for k, s in enumerate(seeds)
    ]


def _track_and_score(sequences, tracker_cfg: TrackerConfig) -> MetricReport:
    reports = []
    for seq in sequences:
        rows = run_sequence(seq, tracker_cfg)
        reports.append(evaluate_entries(seq.ground_truth, rows))
    return combine_reports(reports)


def _tracker_for(base: TrackerConfig, variant: str, stride: int) -> TrackerConfig:
    return replace(base, variant=variant, dt=stride)


def stride_sweep(cfg: ExperimentConfig, sequences: Optional[list] = None) -> list[ExperimentRow]:
    """Every (stride, variant) cell on the benchmark or the given sequences."""
    if sequences is None:
        sequences = [sc.sequence for sc in benchmark_scenarios(cfg)]
    rows = []
    for stride in sorted(cfg.strides):
        dec = [decimate(seq, stride) for seq in sequences]
        for variant in cfg.variants:
            if variant == "embed" and not all(s.has_embeddings for s in dec):
                continue
            report = _track_and_score(dec, _tracker_for(cfg.tracker, variant, stride))
            rows.append(ExperimentRow((stride, VARIANTS.index(variant)), f"stride={stride} {variant}", report))
    return rows


def dim_sweep(cfg: ExperimentConfig) -> list[ExperimentRow]:
    """Train one head per embedding size; report retrieval and embed-tracker scores."""
    base = cfg.scenario
    train = single_frame_dataset(cfg.train_frames, seed=cfg.seed * 2 + 1, base=base)
    test = single_frame_dataset(cfg.test_frames, seed=cfg.seed * 2 + 2, base=base)
    pairs = held_out_pairs(test, cfg.augment, seed=cfg.seed + 7919)
    scenarios = [decimate_scenario(sc, cfg.stride) for sc in benchmark_scenarios(cfg)]
    tracker_cfg = _tracker_for(cfg.tracker, "embed", cfg.stride)
    rows = []
    for d in cfg.dims:
        tcfg = TrainConfig(dim=d, lr=cfg.lr, epochs=cfg.epochs, seed=cfg.seed, augment=cfg.augment)
        head, curve = train_head(train, tcfg)
        seqs = [embed_features(sc.sequence, sc.features, head) for sc in scenarios]
        report = _track_and_score(seqs, tracker_cfg)
        extra = dict(retrieval=eval_retrieval(head, pairs), first_loss=curve[0], final_loss=curve[-1])
        rows.append(ExperimentRow((-d,), f"dim={d}", report, extra))
    return rows


def resolution_sweep(cfg: ExperimentConfig) -> list[ExperimentRow]:
    """Embed tracker after downscaling boxes and inflating embedding noise."""
    scenarios = [decimate_scenario(sc, cfg.stride) for sc in benchmark_scenarios(cfg)]
    tracker_cfg = _tracker_for(cfg.tracker, "embed", cfg.stride)
    rows = []
    for factor in sorted(cfg.factors, reverse=True):
        seqs = [
            apply_resolution_scale(sc.sequence, factor, cfg.scenario.embed_noise_std, cfg.octave_multiplier,
                                   seed=cfg.seed * 1009 + k)
            for k, sc in enumerate(scenarios)
        ]
        report = _track_and_score(seqs, tracker_cfg)
        w, h = seqs[0].width, seqs[0].height
        rows.append(ExperimentRow((-factor,), f"{w:g}x{h:g}", report, dict(factor=factor)))
    return rows


SWEEPS = {"stride": stride_sweep, "dim": dim_sweep, "resolution": resolution_sweep}


def run_sweep(name: str, cfg: ExperimentConfig, sequences: Optional[list[Sequence]] = None) -> list[ExperimentRow]:
    if name not in SWEEPS:
        raise KeyError(f"unknown sweep {name!r}; choose from {sorted(SWEEPS)}")
    if name == "stride":
        rows = stride_sweep(cfg, sequences)
    else:
        rows = SWEEPS[name](cfg)
    return sorted(rows, key=lambda r: r.key)


def format_rows(rows: list[ExperimentRow]) -> str:
    """Table in HOTA, MOTA, IDF1, AssA, IDSW order plus any extra numeric columns."""
    extras = []
    for r in rows:
        for k in r.extra:
            if k not in extras:
                extras.append(k)
    width = max([len(r.label) for r in rows] + [8])
    head = f"{'':<{width}}  " + "  ".join(f"{c:>7}" for c in MetricReport.TABLE_COLUMNS)
    head += "".join(f"  {k:>11}" for k in extras)
    lines = [head]
    for r in rows:
        h, m, i, a, s = r.report.table_values()
        line = f"{r.label:<{width}}  {h:7.2f}  {m:7.2f}  {i:7.2f}  {a:7.2f}  {s:7d}"
        line += "".join(f"  {r.extra[k]:11.4f}" if k in r.extra else f"  {'-':>11}" for k in extras)
        lines.append(line)
    return "\n".join(lines) + "\n"
