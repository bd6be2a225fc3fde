import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tofunwrap import io as tio
from tofunwrap.core import PhaseFrame, VoltageFrame
from tofunwrap.evaluation import EvalReport, ThresholdRecord
from tofunwrap.kde import DepthFrame
from tofunwrap.simulator import Scene

f32 = st.floats(-1e6, 1e6, width=32)


def depth_frame(d, conf):
    valid = np.isfinite(d)
    return DepthFrame(d, conf, valid)


def assert_same(a, b):
    assert type(a) is type(b)
    if isinstance(a, VoltageFrame):
        assert a.samples.tobytes() == b.samples.tobytes()
    elif isinstance(a, PhaseFrame):
        assert a.z.tobytes() == b.z.tobytes()
    elif isinstance(a, DepthFrame):
        assert np.array_equal(a.distance, b.distance, equal_nan=True)
        assert a.confidence.tobytes() == b.confidence.tobytes()
        assert np.array_equal(a.valid, b.valid)
    else:
        assert a.distance.tobytes() == b.distance.tobytes()
        assert a.reflectivity.tobytes() == b.reflectivity.tobytes()
        assert np.array_equal(a.valid, b.valid)


@given(hnp.arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(2, 3), st.integers(3, 5)),
                  elements=f32))
def test_voltage_round_trip(tmp_path_factory, v):
    path = tmp_path_factory.mktemp("v") / "f.tof"
    frame = VoltageFrame(v.astype(np.float64))
    tio.write_frame(path, frame)
    assert_same(frame, tio.read_frame(path))


@given(hnp.arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 5), st.just(3), st.just(2)), elements=f32))
def test_phase_round_trip(tmp_path_factory, parts):
    path = tmp_path_factory.mktemp("p") / "f.tof"
    z = np.empty(parts.shape[:3], dtype=complex)
    z.real, z.imag = parts[..., 0], parts[..., 1]
    frame = PhaseFrame(z)
    tio.write_frame(path, frame)
    back = tio.read_frame(path)
    assert_same(frame, back)
    raw = path.read_bytes()
    tio.write_frame(path, back)
    assert path.read_bytes() == raw


def test_depth_and_truth_round_trip(tmp_path, rng):
    d = rng.uniform(0, 18, (7, 9)).astype(np.float32).astype(float)
    d[2, 3] = np.nan
    conf = rng.uniform(0, 1, (7, 9)).astype(np.float32).astype(float)
    frame = depth_frame(d, conf)
    tio.write_frame(tmp_path / "d.tof", frame)
    assert_same(frame, tio.read_frame(tmp_path / "d.tof"))

    valid = rng.uniform(size=(7, 9)) > 0.2
    dist = (np.where(valid, d, 1.0) + 0.5).astype(np.float32).astype(float)
    scene = Scene(dist, conf, valid)
    tio.write_frame(tmp_path / "t.tof", scene)
    assert_same(scene, tio.read_frame(tmp_path / "t.tof"))


def test_rewrite_is_byte_identical(tmp_path, rng):
    frame = VoltageFrame(rng.normal(size=(4, 6, 3, 3)))
    tio.write_frame(tmp_path / "a.tof", frame)
    tio.write_frame(tmp_path / "b.tof", tio.read_frame(tmp_path / "a.tof"))
    assert (tmp_path / "a.tof").read_bytes() == (tmp_path / "b.tof").read_bytes()


def test_depth_file_size(tmp_path):
    frame = DepthFrame(np.ones((424, 512)), np.ones((424, 512)), np.ones((424, 512), dtype=bool))
    tio.write_frame(tmp_path / "d.tof", frame)
    assert (tmp_path / "d.tof").stat().st_size == 64 + 512 * 424 * 2 * 4


def test_header_layout(tmp_path):
    frame = VoltageFrame(np.zeros((2, 5, 3, 3)))
    tio.write_frame(tmp_path / "v.tof", frame)
    raw = (tmp_path / "v.tof").read_bytes()
    assert raw[:4] == b"TOFF"
    h = tio.FrameFileHeader.unpack(raw[:64])
    assert (h.width, h.height, h.planes, h.kind, h.version) == (5, 2, 9, tio.KIND_VOLTAGE, 1)
    pf = PhaseFrame(np.ones((2, 2, 3), dtype=complex))
    tio.write_frame(tmp_path / "p.tof", pf)
    assert tio.FrameFileHeader.unpack((tmp_path / "p.tof").read_bytes()[:64]).planes == 9


@pytest.fixture
def good_file(tmp_path):
    path = tmp_path / "g.tof"
    tio.write_frame(path, VoltageFrame(np.ones((3, 4, 3, 3))))
    return path


def test_bad_magic(good_file):
    raw = bytearray(good_file.read_bytes())
    raw[:4] = b"NOPE"
    good_file.write_bytes(bytes(raw))
    with pytest.raises(tio.BadMagicError):
        tio.read_frame(good_file)


def test_truncated(good_file):
    raw = good_file.read_bytes()
    good_file.write_bytes(raw[:-1])
    with pytest.raises(tio.TruncatedFrameError):
        tio.read_frame(good_file)
    good_file.write_bytes(raw[:30])
    with pytest.raises(tio.TruncatedFrameError):
        tio.read_frame(good_file)


def test_future_version(good_file):
    raw = bytearray(good_file.read_bytes())
    struct.pack_into("<H", raw, 4, 99)
    good_file.write_bytes(bytes(raw))
    with pytest.raises(tio.UnsupportedVersionError):
        tio.read_frame(good_file)


def test_dimension_overflow(good_file):
    raw = bytearray(good_file.read_bytes())
    struct.pack_into("<III", raw, 12, 0xFFFFFFFF, 0xFFFFFFFF, 9)
    good_file.write_bytes(bytes(raw))
    with pytest.raises(tio.DimensionOverflowError):
        tio.read_frame(good_file)
    raw = bytearray(tio.FrameFileHeader(tio.KIND_DEPTH, 2, 2, 2).pack()) + bytes(64)
    good_file.write_bytes(bytes(raw))
    with pytest.raises(tio.DimensionOverflowError):
        tio.read_frame(good_file)


def test_errors_distinct():
    errs = {tio.BadMagicError, tio.TruncatedFrameError, tio.DimensionOverflowError, tio.UnsupportedVersionError}
    assert len(errs) == 4
    assert all(issubclass(e, tio.FrameFormatError) for e in errs)


def test_pgm_export(tmp_path):
    d = DepthFrame(np.array([[1.0, np.nan, 70.0, 0.0004]]), np.ones((1, 4)), np.array([[True, False, True, True]]))
    tio.export_depth_pgm(d, tmp_path / "d.pgm", scale=1000.0)
    raw = (tmp_path / "d.pgm").read_bytes()
    assert raw.startswith(b"P5\n4 1\n65535\n")
    assert tio.read_pgm(tmp_path / "d.pgm").tolist() == [[1000, 0, 65535, 0]]
    with pytest.raises(ValueError):
        tio.export_depth_pgm(d, tmp_path / "x.pgm", scale=0)


def test_config_validation(tmp_path):
    cfg = {"kde": {"r": 3}, "noise": {"sigma_z_amp": 2.0}}
    tio.save_json(tmp_path / "c.json", cfg)
    assert tio.load_config(tmp_path / "c.json") == cfg
    tio.save_json(tmp_path / "bad.json", {"kde": {"radius": 3}})
    with pytest.raises(tio.InvalidConfigError):
        tio.load_config(tmp_path / "bad.json")
    tio.save_json(tmp_path / "bad2.json", {"camera": {}})
    with pytest.raises(tio.InvalidConfigError):
        tio.load_config(tmp_path / "bad2.json")


def test_overrides():
    cfg = tio.apply_overrides({"kde": {"r": 3}}, ["kde.r=5", "kde.h=0.5", "decode.method=crt"])
    assert cfg == {"kde": {"r": 5, "h": 0.5}, "decode": {"method": "crt"}}
    with pytest.raises(tio.InvalidConfigError):
        tio.apply_overrides({}, ["kde.nope=1"])
    with pytest.raises(tio.InvalidConfigError):
        tio.apply_overrides({}, ["r=5"])


def test_calibration_csv(tmp_path):
    a, s = np.array([1.5, 2.25, 100.0]), np.array([0.7, 0.5, 0.01])
    tio.write_calibration_csv(tmp_path / "c.csv", a, s)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "amplitude,sigma_phi"
    a2, s2 = tio.read_calibration_csv(tmp_path / "c.csv")
    assert np.array_equal(a, a2) and np.array_equal(s, s2)


def test_report_csv(tmp_path):
    rep = EvalReport([ThresholdRecord(0.0, 0.75, 0.25, 100), ThresholdRecord(0.5, 0.1, 0.0, 10)], 100, "kde")
    tio.write_report_csv(tmp_path / "r.csv", rep)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "threshold,inlier_rate,outlier_rate,valid_count"
    back = tio.read_report_csv(tmp_path / "r.csv", "kde", 100)
    assert back.records == rep.records
