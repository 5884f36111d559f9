import json
import os

import numpy as np
import pytest

from fecgos.cli import main
from fecgos.records import Record, save_record


def run(argv):
    return main(argv)


def test_version(capsys):
    try:
        code = run(["--version"])
    except SystemExit as exc:  # argparse may exit directly
        code = exc.code
    assert code == 0
    assert "0.1.0" in capsys.readouterr().out


def test_no_command_is_usage_error(capsys):
    assert run([]) == 1


def test_missing_input_exit_2(tmp_path, capsys):
    code = run(["rpeaks", "--in", str(tmp_path / "nope.csv")])
    assert code == 2
    assert "nope.csv" in capsys.readouterr().err


def test_malformed_input_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("not a header\n1,2\n")
    assert run(["rpeaks", "--in", str(bad)]) == 2


def test_shrink_roundtrip(tmp_path, capsys):
    rng = np.random.default_rng(0)
    src = tmp_path / "m.csv"
    np.savetxt(src, rng.standard_normal((40, 80)), delimiter=",")
    dst = tmp_path / "out.csv"
    assert run(["shrink", "--in", str(src), "--out", str(dst), "--c-noise", "1.0"]) == 0
    got = np.loadtxt(dst, delimiter=",", ndmin=2)
    assert got.shape == (40, 80)
    assert "kept_rank=" in capsys.readouterr().err


def test_simulate_decompose_evaluate_chain(tmp_path, ecg_donor, vcg_donors, capsys):
    sim_dir = tmp_path / "sim"
    assert (
        run(
            ["simulate", "--synthetic", "2", "--count", "2", "--r", "0.25",
             "--snr", "20", "--seed", "4", "--duration", "40", "--out", str(sim_dir)]
        )
        == 0
    )
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert len(manifest["records"]) == 2
    for entry in manifest["records"]:
        assert 19.0 <= entry["measured_snr_db"] <= 21.0
        assert (sim_dir / f"{entry['name']}.csv").exists()
        assert (sim_dir / f"{entry['name']}.truth.csv").exists()
        assert (sim_dir / f"{entry['name']}.ann.json").exists()

    dec_dir = tmp_path / "dec"
    name = manifest["records"][0]["name"]
    assert (
        run(["decompose", "--in", str(sim_dir / f"{name}.csv"), "--out", str(dec_dir)]) == 0
    )
    for fn in ("mecg.csv", "rfecg.csv", "fecg.csv", "fetal_peaks.json",
               f"{name}_fetal_peaks.json", "maternal_peaks.json", "sqi.json",
               "theta_star.json", "run_meta.json"):
        assert (dec_dir / fn).exists(), fn
    pngs = [f for f in os.listdir(dec_dir) if f.endswith(".png")]
    assert pngs, "decompose must render a figure"

    rep_path = tmp_path / "report.json"
    assert (
        run(
            ["evaluate", "--truth", str(sim_dir), "--est", str(dec_dir),
             "--windows", "10,25,50", "--out", str(rep_path)]
        )
        == 0
    )
    rep = json.loads(rep_path.read_text())
    assert any(k.startswith("f1@50ms") for k in rep["aggregates"])


def test_rpeaks_stdout(tmp_path, ecg_donor, capsys):
    src = tmp_path / "e.csv"
    save_record(str(src), Record([ecg_donor.channels[0][:40000]], fs=1000, name="e"))
    assert run(["rpeaks", "--in", str(src)]) == 0
    times = json.loads(capsys.readouterr().out)
    assert len(times) > 30
    assert all(b > a for a, b in zip(times, times[1:]))


def test_evaluate_missing_est_dir_exit_2(tmp_path, capsys):
    (tmp_path / "t").mkdir()
    code = run(["evaluate", "--truth", str(tmp_path / "t"), "--est", str(tmp_path / "e")])
    assert code == 2


def test_pipeline_smoke_and_outputs(tmp_path):
    out = tmp_path / "pipe"
    assert (
        run(
            ["pipeline", "--records", "1", "--r", "0.25", "--snr", "20",
             "--seed", "7", "--duration", "40", "--jobs", "1", "--out", str(out)]
        )
        == 0
    )
    for fn in ("report.json", "metrics.csv", "condition_summary.csv",
               "f1_boxplots.png", "nmae_boxplots.png", "nmde_boxplots.png"):
        assert (out / fn).exists(), fn
    rep = json.loads((out / "report.json").read_text())
    assert rep["aggregates"]["f1(1)"]["median"] >= 0.9
