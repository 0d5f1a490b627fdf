import subprocess
import sys

import numpy as np
import pytest

from lowfps_mot.cli import main
from lowfps_mot.metrics import MetricReport
from lowfps_mot.mot_io import load_sequence, parse_embeddings, parse_metadata, parse_results


def _write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture()
def scenario_cfg(tmp_path):
    return _write(tmp_path / "scenario.cfg", "# small scene\nn_objects = 3\nn_frames = 60\ncamera.jump_prob = 0\n")


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["synth"]) == 1  # --out missing
    assert main(["track", "x", "--out", "y", "--variant", "kcf"]) == 1
    assert main(["eval", "--gt", "a", "--gt", "b", "--results", "c"]) == 1


def test_data_errors_exit_2(tmp_path, scenario_cfg):
    assert main(["eval", "--gt", str(tmp_path / "missing.txt"), "--results", str(tmp_path / "r.txt")]) == 2
    bad = _write(tmp_path / "bad.cfg", "no_such_key = 1\n")
    assert main(["synth", "--config", bad, "--out", str(tmp_path / "s")]) == 2
    # embed variant without an embedding sidecar
    assert main(["synth", "--config", scenario_cfg, "--out", str(tmp_path / "s")]) == 0
    (tmp_path / "s" / "emb.txt").unlink()
    assert main(["track", str(tmp_path / "s"), "--variant", "embed", "--out", str(tmp_path / "r.txt")]) == 2
    # motion trackers do not need it
    assert main(["track", str(tmp_path / "s"), "--variant", "sort", "--out", str(tmp_path / "r.txt")]) == 0


def test_synth_round_trip_and_stride(tmp_path, scenario_cfg):
    out = tmp_path / "s"
    assert main(["synth", "--config", scenario_cfg, "--seed", "5", "--out", str(out)]) == 0
    seq = load_sequence(out)
    assert len(seq) == 60 and seq.fps == 30.0 and seq.has_embeddings
    dim, feats = parse_embeddings(out / "feat.txt")
    assert len(feats) == sum(len(f.detections) for f in seq.frames)
    assert parse_metadata(out / "scenario.txt")["seed"] == "5"
    assert main(["synth", "--config", scenario_cfg, "--seed", "5", "--stride", "6", "--out", str(tmp_path / "d")]) == 0
    meta = parse_metadata(tmp_path / "d" / "meta.txt")
    assert float(meta["fps"]) == 5.0
    assert len(load_sequence(tmp_path / "d")) == 10


def test_track_and_eval_pipeline(tmp_path, scenario_cfg, capsys):
    out = tmp_path / "s"
    assert main(["synth", "--config", scenario_cfg, "--seed", "1", "--out", str(out)]) == 0
    res = tmp_path / "res.txt"
    assert main(["track", str(out), "--variant", "embed", "--out", str(res)]) == 0
    assert parse_results(res)
    capsys.readouterr()
    assert main(["eval", "--gt", str(out / "gt.txt"), "--results", str(res), "--out", str(tmp_path / "rep.txt")]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0].split() == ["HOTA", "MOTA", "IDF1", "AssA", "IDSW"]
    report = MetricReport.from_keyvalue((tmp_path / "rep.txt").read_text())
    assert report.idsw == 0


def test_eval_gt_against_itself(tmp_path, scenario_cfg, capsys):
    out = tmp_path / "s"
    main(["synth", "--config", scenario_cfg, "--out", str(out)])
    gt = str(out / "gt.txt")
    assert main(["eval", "--gt", gt, "--results", gt, "--out", str(tmp_path)]) == 0
    report = MetricReport.from_keyvalue((tmp_path / "report.txt").read_text())
    assert (report.hota, report.mota, report.idf1, report.idsw) == (1.0, 1.0, 1.0, 0)
    again = MetricReport.from_keyvalue(report.to_keyvalue())
    assert again.to_keyvalue() == report.to_keyvalue()
    row = capsys.readouterr().out.splitlines()[1].split()
    assert row[1:] == ["100.00", "100.00", "100.00", "100.00", "0"]


def test_track_with_stride_writes_decimated_gt(tmp_path, scenario_cfg):
    out = tmp_path / "s"
    main(["synth", "--config", scenario_cfg, "--out", str(out)])
    assert main(["track", str(out), "--variant", "byte", "--stride", "6", "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "s.txt").exists()
    assert (tmp_path / "r" / "s_gt.txt").exists()


def test_train_and_track_with_head(tmp_path, scenario_cfg):
    out = tmp_path / "s"
    main(["synth", "--config", scenario_cfg, "--out", str(out)])
    cfg = _write(tmp_path / "train.cfg", "epochs = 3\nframes = 8\nscenario.n_frames = 2\n")
    assert main(["train", "--config", cfg, "--dim", "16", "--seed", "2", "--out", str(tmp_path / "h")]) == 0
    head = (tmp_path / "h" / "head.txt").read_text().splitlines()
    assert head[0].split()[1] == "16"
    assert len((tmp_path / "h" / "curve.csv").read_text().splitlines()) == 4
    assert main(["train", "--config", _write(tmp_path / "t2.cfg", "epochs = 2\n"), "--data", str(out),
                 "--out", str(tmp_path / "h2")]) == 0
    assert main(["train", "--config", cfg, "--data", str(out), "--out", str(tmp_path / "h3")]) == 1
    assert main(["track", str(out), "--head", str(tmp_path / "h" / "head.txt"), "--out",
                 str(tmp_path / "r.txt")]) == 0


def test_experiment_stride_table(tmp_path, capsys):
    cfg = _write(tmp_path / "exp.cfg", "n_sequences = 1\nscenario.n_frames = 60\n")
    assert main(["experiment", "--sweep", "stride", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    lines = (tmp_path / "a" / "stride.txt").read_text().splitlines()
    assert len(lines) == 1 + 9
    assert [l.split()[0] for l in lines[1:]] == ["stride=1"] * 3 + ["stride=2"] * 3 + ["stride=6"] * 3
    assert main(["experiment", "--sweep", "stride", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "stride.txt").read_bytes() == (tmp_path / "b" / "stride.txt").read_bytes()
    assert main(["experiment", "--sweep", "dim", "--input", str(tmp_path), "--config", cfg]) == 1


def test_experiment_on_loaded_sequences(tmp_path, scenario_cfg, capsys):
    main(["synth", "--config", scenario_cfg, "--out", str(tmp_path / "s")])
    capsys.readouterr()
    assert main(["experiment", "--sweep", "stride", "--input", str(tmp_path / "s"), "--variant", "sort"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "# stride sweep"
    assert len(out) == 2 + 3


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lowfps_mot.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "0.1.0" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "lowfps_mot.cli", "eval"], capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stdout == ""
