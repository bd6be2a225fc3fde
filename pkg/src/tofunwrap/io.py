"""Binary frame files, PGM export, JSON configs and CSV tables.

Frame files start with a fixed 64-byte little-endian header followed by a
float32 payload laid out as ``(height, width, planes)`` in C order.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tofunwrap.core import FrequencyConfig, PhaseFrame, VoltageFrame
from tofunwrap.evaluation import EvalReport, ThresholdRecord
from tofunwrap.kde import DepthFrame, KdeParams
from tofunwrap.noise import NoiseModelParams
from tofunwrap.simulator import Scene, SimParams

MAGIC = b"TOFF"
VERSION = 1
HEADER_SIZE = 64
DTYPE_FLOAT32 = 1
LITTLE_ENDIAN = 0
MAX_PAYLOAD_VALUES = 1 << 31

# magic, version, dtype, kind, endianness, pad, width, height, planes, n_freq, n_sub
_HEADER = struct.Struct("<4sHHHBBIIIHH")

KIND_VOLTAGE = 1
KIND_PHASE = 2
KIND_DEPTH = 3
KIND_TRUTH = 4


class FrameFormatError(ValueError):
    pass


class BadMagicError(FrameFormatError):
    pass


class UnsupportedVersionError(FrameFormatError):
    pass


class TruncatedFrameError(FrameFormatError):
    pass


class DimensionOverflowError(FrameFormatError):
    pass


class InvalidConfigError(KeyError):
    pass


@dataclass(frozen=True)
class FrameFileHeader:
    kind: int
    width: int
    height: int
    planes: int
    n_freq: int = 0
    n_sub: int = 0
    version: int = VERSION
    dtype_code: int = DTYPE_FLOAT32
    endianness: int = LITTLE_ENDIAN

    def pack(self) -> bytes:
        raw = _HEADER.pack(MAGIC, self.version, self.dtype_code, self.kind, self.endianness, 0,
                           self.width, self.height, self.planes, self.n_freq, self.n_sub)
        return raw.ljust(HEADER_SIZE, b"\0")

    @classmethod
    def unpack(cls, raw: bytes) -> "FrameFileHeader":
        if len(raw) < HEADER_SIZE:
            raise TruncatedFrameError(f"header is {len(raw)} bytes, expected {HEADER_SIZE}")
        magic, version, dtype_code, kind, endian, _, w, h, planes, nf, ns = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}")
        if version > VERSION or version < 1:
            raise UnsupportedVersionError(f"frame version {version} not supported (max {VERSION})")
        if dtype_code != DTYPE_FLOAT32 or endian != LITTLE_ENDIAN:
            raise FrameFormatError(f"unsupported dtype {dtype_code} / endianness {endian}")
        if kind not in (KIND_VOLTAGE, KIND_PHASE, KIND_DEPTH, KIND_TRUTH):
            raise FrameFormatError(f"unknown frame kind {kind}")
        if w == 0 or h == 0 or planes == 0 or w * h * planes > MAX_PAYLOAD_VALUES:
            raise DimensionOverflowError(f"implausible dimensions {w}x{h}x{planes}")
        return cls(kind, w, h, planes, nf, ns, version, dtype_code, endian)

    @property
    def payload_bytes(self) -> int:
        return self.width * self.height * self.planes * 4


def _frame_payload(frame):
    if isinstance(frame, VoltageFrame):
        H, W, M, N = frame.samples.shape
        return FrameFileHeader(KIND_VOLTAGE, W, H, M * N, M, N), frame.samples.reshape(H, W, M * N)
    if isinstance(frame, PhaseFrame):
        H, W, M = frame.z.shape
        planes = np.concatenate([frame.z.real, frame.z.imag, np.abs(frame.z)], axis=-1)
        return FrameFileHeader(KIND_PHASE, W, H, 3 * M, M, 0), planes
    if isinstance(frame, DepthFrame):
        H, W = frame.shape
        d = np.where(frame.valid, frame.distance, np.nan)
        return FrameFileHeader(KIND_DEPTH, W, H, 2), np.stack([d, frame.confidence], axis=-1)
    if isinstance(frame, Scene):
        H, W = frame.distance.shape
        planes = np.stack([frame.distance, frame.reflectivity, frame.valid.astype(np.float64)], axis=-1)
        return FrameFileHeader(KIND_TRUTH, W, H, 3), planes
    raise TypeError(f"cannot serialize {type(frame).__name__}")


def write_frame(path, frame) -> None:
    """Write a voltage, phase, depth or ground-truth frame."""
    header, planes = _frame_payload(frame)
    payload = np.ascontiguousarray(planes, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header.pack())
        fh.write(payload.tobytes())


def read_frame(path):
    """Read a frame written by :func:`write_frame`.

    Raises
    ------
    BadMagicError, UnsupportedVersionError, TruncatedFrameError,
    DimensionOverflowError
    """
    raw = Path(path).read_bytes()
    header = FrameFileHeader.unpack(raw[:HEADER_SIZE])
    body = raw[HEADER_SIZE:]
    if len(body) < header.payload_bytes:
        raise TruncatedFrameError(f"payload is {len(body)} bytes, expected {header.payload_bytes}")
    if len(body) > header.payload_bytes:
        raise DimensionOverflowError("payload longer than the header dimensions allow")
    data = np.frombuffer(body, dtype="<f4").reshape(header.height, header.width, header.planes)
    data = data.astype(np.float64)
    if header.kind == KIND_VOLTAGE:
        if header.n_freq * header.n_sub != header.planes:
            raise DimensionOverflowError("voltage planes do not match M x N")
        return VoltageFrame(data.reshape(header.height, header.width, header.n_freq, header.n_sub))
    if header.kind == KIND_PHASE:
        M = header.n_freq
        if 3 * M != header.planes:
            raise DimensionOverflowError("phase planes do not match 3 x M")
        z = np.empty(data.shape[:2] + (M,), dtype=np.complex128)
        z.real = data[..., :M]
        z.imag = data[..., M:2 * M]
        return PhaseFrame(z)
    if header.kind == KIND_DEPTH:
        d, conf = data[..., 0], data[..., 1]
        return DepthFrame(d, conf, np.isfinite(d))
    return Scene(data[..., 0], data[..., 1], data[..., 2] > 0.5)


def export_depth_pgm(depth: DepthFrame, path, scale: float = 1000.0) -> None:
    """16-bit binary PGM of ``distance * scale``; invalid pixels are 0, overflow clamps to 65535."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    d = np.where(depth.valid & np.isfinite(depth.distance), depth.distance, 0.0)
    img = np.clip(np.rint(d * scale), 0, 65535).astype(">u2")
    H, W = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n65535\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise FrameFormatError("not a binary PGM")
    W, H, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(parts[4], dtype=dtype, count=W * H).reshape(H, W)


# --- configs ---------------------------------------------------------------

CONFIG_SECTIONS = ("frequency", "noise", "kde", "sim", "scene", "decode")
_DECODE_KEYS = {"method", "prefilter_spatial_sigma_px", "prefilter_range_sigma_amp", "crt_order"}


def _check_keys(section: str, d: dict, allowed) -> None:
    extra = set(d) - set(allowed)
    if extra:
        raise InvalidConfigError(f"unknown keys in [{section}]: {sorted(extra)}")


def validate_config(cfg: dict) -> dict:
    """Reject unknown sections and keys; returns ``cfg`` unchanged."""
    _check_keys("top level", cfg, CONFIG_SECTIONS)
    _check_keys("frequency", cfg.get("frequency", {}), FrequencyConfig().to_dict())
    _check_keys("noise", cfg.get("noise", {}), NoiseModelParams().to_dict())
    _check_keys("kde", cfg.get("kde", {}), KdeParams().to_dict())
    _check_keys("sim", cfg.get("sim", {}), SimParams().to_dict())
    _check_keys("scene", cfg.get("scene", {}), {"kind", "width", "height", "depth_range_m", "reflectivity", "steps"})
    _check_keys("decode", cfg.get("decode", {}), _DECODE_KEYS)
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InvalidConfigError("config root must be an object")
    return validate_config(cfg)


def save_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings; values parse as JSON when possible."""
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in cfg.items()}
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise InvalidConfigError(f"override {item!r} is not of the form section.key=value")
        key, raw = item.split("=", 1)
        section, name = key.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out.setdefault(section, {})[name] = value
    return validate_config(out)


# --- CSV tables ------------------------------------------------------------

def write_calibration_csv(path, amplitudes, sigma_phi) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["amplitude", "sigma_phi"])
        for a, s in zip(amplitudes, sigma_phi):
            w.writerow([repr(float(a)), repr(float(s))])


def read_calibration_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    a = np.array([float(r["amplitude"]) for r in rows])
    s = np.array([float(r["sigma_phi"]) for r in rows])
    return a, s


REPORT_FIELDS = ["threshold", "inlier_rate", "outlier_rate", "valid_count"]


def write_report_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for r in report.records:
            w.writerow([repr(r.conf_threshold), repr(r.inlier_rate), repr(r.outlier_rate), r.valid_count])


def read_report_csv(path, method: str = "", gt_valid_count: int = 0) -> EvalReport:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    records = [ThresholdRecord(float(r["threshold"]), float(r["inlier_rate"]), float(r["outlier_rate"]),
                               int(r["valid_count"])) for r in rows]
    return EvalReport(records, gt_valid_count, method)
