import csv
import json
import subprocess
import sys

import numba
import numpy as np
import pytest

from tofunwrap import cli
from tofunwrap import io as tio
from tofunwrap._kernels import THREADS_ENV, configure_threads

SMALL = ["--set", "scene.width=24", "--set", "scene.height=20"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--preset", "lecture-analog", *SMALL, "--frames", 2, "--seed", 4, "--out", out) == 0
    return out


def test_simulate_outputs(sim_dir):
    names = sorted(p.name for p in sim_dir.iterdir())
    assert names == ["config.json", "frame_0000.tof", "frame_0001.tof", "manifest.json", "truth.tof"]
    man = json.loads((sim_dir / "manifest.json").read_text())
    assert man["subcommand"] == "simulate" and man["seed"] == 4
    assert man["overrides"] == ["scene.width=24", "scene.height=20"]
    assert not any("time" in k or "date" in k for k in man)
    assert isinstance(tio.read_frame(sim_dir / "frame_0000.tof"), tio.VoltageFrame)


def test_pipeline_and_reproducibility(sim_dir, tmp_path):
    frames = [sim_dir / "frame_0000.tof", sim_dir / "frame_0001.tof"]
    for tag in ("a", "b"):
        assert run("decode", *frames, "--preset", "lecture-analog", "--out", tmp_path / tag) == 0
        depths = sorted((tmp_path / tag).glob("*.depth.tof"))
        assert run("evaluate", *depths, "--truth", sim_dir / "truth.tof", "--out", tmp_path / tag / "ev" / "r.csv") == 0
    for name in ("frame_0000.depth.tof", "frame_0001.pgm", "manifest.json", "ev/r.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "a" / "ev" / "r.csv")))
    assert float(rows[0]["threshold"]) == 0.0
    assert 0.5 < float(rows[0]["inlier_rate"]) <= 1.0


def test_simulate_reproducible(tmp_path):
    for tag in ("a", "b"):
        assert run("simulate", "--preset", "kitchen-analog", *SMALL, "--out", tmp_path / tag) == 0
    for name in ("frame_0000.tof", "truth.tof", "config.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_crt_equals_argmin_noiseless(tmp_path):
    assert run("simulate", "--preset", "library-analog", *SMALL, "--set", "sim.sigma_v=0", "--out", tmp_path / "s") == 0
    for m in ("crt", "argmin-j"):
        assert run("decode", tmp_path / "s" / "frame_0000.tof", "--preset", "library-analog", "--method", m,
                   "--no-pgm", "--out", tmp_path / m) == 0
    a = tio.read_frame(tmp_path / "crt" / "frame_0000.depth.tof")
    b = tio.read_frame(tmp_path / "argmin-j" / "frame_0000.depth.tof")
    assert np.array_equal(a.distance, b.distance, equal_nan=True)
    assert a.valid.all()


def test_sweep_single_point_matches_decode_evaluate(tmp_path):
    common = ["--preset", "lecture-analog", *SMALL, "--set", "kde.r=3"]
    assert run("sweep", *common, "--seed", 7, "--conf-threshold", "0.2", "--out", tmp_path / "sw.csv") == 0
    assert run("simulate", *common, "--seed", 7, "--store", "phase", "--out", tmp_path / "s") == 0
    assert run("decode", tmp_path / "s" / "frame_0000.tof", *common, "--no-pgm", "--out", tmp_path / "d") == 0
    assert run("evaluate", tmp_path / "d" / "frame_0000.depth.tof", "--truth", tmp_path / "s" / "truth.tof",
               "--thresholds", "0.2", "--out", tmp_path / "e.csv") == 0
    sweep = list(csv.DictReader(open(tmp_path / "sw.csv")))
    ev = list(csv.DictReader(open(tmp_path / "e.csv")))
    assert len(sweep) == 1 and len(ev) == 1
    for key in ("inlier_rate", "outlier_rate", "valid_count"):
        assert float(sweep[0][key]) == float(ev[0][key])


def test_sweep_grid(tmp_path):
    assert run("sweep", "--preset", "lecture-analog", *SMALL, "--method", "kde,crt", "--r", "2,3",
               "--hypotheses", "1,2", "--out", tmp_path / "g.csv") == 0
    rows = list(csv.DictReader(open(tmp_path / "g.csv")))
    assert len(rows) == 8
    assert list(rows[0]) == cli.SWEEP_FIELDS


def test_calibrate(tmp_path):
    assert run("calibrate", "--preset", "lecture-analog", "--set", "sim.sigma_v=4", "--frames", 40,
               "--out-params", tmp_path / "p.json", "--out-csv", tmp_path / "c.csv") == 0
    cfg = tio.load_config(tmp_path / "p.json")
    assert cfg["noise"]["model_kind"] == "sigma_point"
    assert cfg["noise"]["sigma_z_amp"] == pytest.approx(4 * np.sqrt(2 / 3), rel=0.1)
    a, s = tio.read_calibration_csv(tmp_path / "c.csv")
    assert a.size >= 10 and np.all(s > 0)
    assert (tmp_path / "manifest.json").exists()


def test_set_beats_config(tmp_path, sim_dir):
    tio.save_json(tmp_path / "c.json", {"kde": {"r": 2}, "decode": {"method": "argmin-j"}})
    assert run("decode", sim_dir / "frame_0000.tof", "--config", tmp_path / "c.json", "--set", "kde.r=4",
               "--no-pgm", "--out", tmp_path / "o") == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["resolved_config"]["kde"]["r"] == 4
    assert man["resolved_config"]["decode"]["method"] == "argmin-j"


def test_exit_codes(tmp_path, sim_dir):
    frame = sim_dir / "frame_0000.tof"
    assert run("decode", tmp_path / "missing.tof", "--out", tmp_path) == cli.EXIT_MISSING_FILE
    assert run("decode", frame, "--config", tmp_path / "nope.json", "--out", tmp_path) == cli.EXIT_MISSING_FILE
    assert run("decode", frame, "--set", "kde.radius=3", "--out", tmp_path) == cli.EXIT_INVALID_CONFIG
    assert run("decode", frame, "--set", "kde.r=0", "--out", tmp_path) == cli.EXIT_INVALID_CONFIG
    assert run("decode", frame, "--method", "median", "--out", tmp_path) == cli.EXIT_UNKNOWN_METHOD
    (tmp_path / "bad.tof").write_bytes(b"garbage" * 20)
    assert run("decode", tmp_path / "bad.tof", "--out", tmp_path) == cli.EXIT_BAD_FRAME
    assert run("evaluate", frame, "--truth", sim_dir / "truth.tof", "--out", tmp_path / "x.csv") == cli.EXIT_BAD_FRAME
    assert run("simulate", "--out", tmp_path / "z") == cli.EXIT_INVALID_CONFIG
    codes = {cli.EXIT_MISSING_FILE, cli.EXIT_INVALID_CONFIG, cli.EXIT_UNKNOWN_METHOD, cli.EXIT_BAD_FRAME}
    assert len(codes) == 4 and 0 not in codes


def test_help_documents_every_flag():
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in text
            assert action.help, f"{name}: {action.dest} has no help"


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "tofunwrap.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("simulate", "calibrate", "decode", "evaluate", "sweep", THREADS_ENV):
        assert cmd in out.stdout


def test_thread_env(monkeypatch):
    before = numba.get_num_threads()
    monkeypatch.setenv(THREADS_ENV, "1")
    assert configure_threads() == 1
    assert numba.get_num_threads() == 1
    monkeypatch.delenv(THREADS_ENV)
    assert configure_threads() == 1
    configure_threads(before)
