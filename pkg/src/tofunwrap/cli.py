"""Command-line driver: simulate, calibrate, decode, evaluate and sweep.

Configuration precedence, lowest to highest: built-in defaults, ``--preset``,
``--config`` file, ``--set section.key=value`` overrides, then dedicated
flags such as ``--seed`` or ``--method``.

Exit codes: 0 success, 1 other error, 2 usage error, 3 missing file,
4 invalid config key or value, 5 unknown method, 6 malformed frame file.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from tofunwrap import __version__
from tofunwrap import io as tio
from tofunwrap._kernels import THREADS_ENV, configure_threads
from tofunwrap.core import FrequencyConfig, PhaseFrame, VoltageFrame, phase_frame_from_voltages
from tofunwrap.evaluation import DEFAULT_INLIER_TOL, average_reports, default_thresholds, sweep_thresholds
from tofunwrap.kde import METHODS, DepthFrame, KdeParams, UnknownMethodError, decode_frame
from tofunwrap.noise import NoiseFitError, NoiseModelKind, NoiseModelParams, calibration_samples, fit_noise_model
from tofunwrap.simulator import PRESETS, Scene, SimParams, load_preset, scene_from_dict, simulate_voltages

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID_CONFIG = 4
EXIT_UNKNOWN_METHOD = 5
EXIT_BAD_FRAME = 6

MANIFEST_NAME = "manifest.json"
FRAME_SUFFIX = ".tof"
DEFAULT_CALIBRATION_SCENE = {
    "kind": "StaircasePlanes", "width": 64, "height": 64, "depth_range_m": [1.0, 18.0],
    "reflectivity": [0.1, 1.0], "steps": 16,
}


@dataclass
class RunManifest:
    """Everything needed to rerun a subcommand; deliberately has no timestamps."""

    subcommand: str
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    config_path: str | None = None
    preset: str | None = None
    seed: int | None = None
    overrides: list[str] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    resolved_config: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        tio.save_json(path, asdict(self))
        return path


# --- config resolution -----------------------------------------------------

def resolve_config(args) -> dict:
    cfg: dict = {}
    if getattr(args, "preset", None):
        cfg = _merge(cfg, tio.validate_config(load_preset(args.preset)))
    if getattr(args, "config", None):
        cfg = _merge(cfg, tio.load_config(args.config))
    return tio.apply_overrides(cfg, getattr(args, "set", None))


def _merge(base: dict, extra: dict) -> dict:
    out = {k: dict(v) for k, v in base.items()}
    for section, values in extra.items():
        out.setdefault(section, {}).update(values)
    return out


def _build(cls, section: str, cfg: dict, default):
    values = cfg.get(section)
    if not values:
        return default
    try:
        return cls.from_dict({**default.to_dict(), **values})
    except (TypeError, ValueError) as exc:
        raise tio.InvalidConfigError(f"invalid [{section}] values: {exc}") from exc


def frequency_config(cfg: dict) -> FrequencyConfig:
    return _build(FrequencyConfig, "frequency", cfg, FrequencyConfig.kinect_v2())


def noise_params(cfg: dict) -> NoiseModelParams:
    return _build(NoiseModelParams, "noise", cfg, NoiseModelParams())


def kde_params(cfg: dict) -> KdeParams:
    return _build(KdeParams, "kde", cfg, KdeParams())


def sim_params(cfg: dict) -> SimParams:
    return _build(SimParams, "sim", cfg, SimParams())


def scene(cfg: dict, default: dict | None = None) -> Scene:
    d = cfg.get("scene") or default
    if d is None:
        raise tio.InvalidConfigError("no [scene] section; use --preset or --config")
    try:
        return scene_from_dict(d)
    except KeyError as exc:
        raise tio.InvalidConfigError(f"invalid [scene]: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise tio.InvalidConfigError(f"invalid [scene] values: {exc}") from exc


def resolved_dict(cfg: dict) -> dict:
    """Full configuration with defaults filled in, as recorded in manifests."""
    out = {
        "frequency": frequency_config(cfg).to_dict(),
        "noise": noise_params(cfg).to_dict(),
        "kde": kde_params(cfg).to_dict(),
        "sim": sim_params(cfg).to_dict(),
    }
    for section in ("scene", "decode"):
        if cfg.get(section):
            out[section] = dict(cfg[section])
    return out


def check_method(method: str) -> str:
    if method not in METHODS:
        raise UnknownMethodError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return method


def _prefilter(cfg: dict):
    dec = cfg.get("decode", {})
    if "prefilter_spatial_sigma_px" in dec or "prefilter_range_sigma_amp" in dec:
        return (float(dec.get("prefilter_spatial_sigma_px", 1.0)), float(dec.get("prefilter_range_sigma_amp", 1.0)))
    return None


def _to_phase(frame, config: FrequencyConfig) -> PhaseFrame:
    if isinstance(frame, VoltageFrame):
        return phase_frame_from_voltages(frame, config)
    if isinstance(frame, PhaseFrame):
        return frame
    raise tio.FrameFormatError(f"expected a voltage or phase frame, got {type(frame).__name__}")


def _read(path, expected=None):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    frame = tio.read_frame(p)
    if expected is not None and not isinstance(frame, expected):
        raise tio.FrameFormatError(f"{path} holds a {type(frame).__name__}, expected {expected.__name__}")
    return frame


# --- subcommands -----------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    config = frequency_config(cfg)
    sim = sim_params(cfg)
    if args.seed is not None:
        sim = SimParams.from_dict({**sim.to_dict(), "seed": args.seed})
    scn = scene(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    truth_path = out / f"truth{FRAME_SUFFIX}"
    tio.write_frame(truth_path, scn)
    outputs.append(truth_path.name)
    for i in range(args.frames):
        s = SimParams.from_dict({**sim.to_dict(), "seed": sim.seed + i})
        frame = simulate_voltages(scn, config, s)
        if args.store == "phase":
            frame = phase_frame_from_voltages(frame, config)
        path = out / f"frame_{i:04d}{FRAME_SUFFIX}"
        tio.write_frame(path, frame)
        outputs.append(path.name)
    resolved = resolved_dict({**cfg, "sim": sim.to_dict(), "scene": cfg["scene"]})
    tio.save_json(out / "config.json", resolved)
    outputs.append("config.json")
    RunManifest("simulate", [], outputs, args.config, args.preset, sim.seed, list(args.set or []),
                {"frames": args.frames, "store": args.store}, resolved).write(out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = resolve_config(args)
    config = frequency_config(cfg)
    sim = sim_params(cfg)
    if args.seed is not None:
        sim = SimParams.from_dict({**sim.to_dict(), "seed": args.seed})
    if not sim.sigma_v > 0:
        raise tio.InvalidConfigError("calibration needs sim.sigma_v > 0")
    scn = scene(cfg, DEFAULT_CALIBRATION_SCENE)
    z = np.stack([
        phase_frame_from_voltages(
            simulate_voltages(scn, config, SimParams.from_dict({**sim.to_dict(), "seed": sim.seed + i})), config).z
        for i in range(args.frames)
    ])
    amp, sig = calibration_samples(z[:, scn.valid], n_bins=args.bins, min_count=args.min_count)
    params = fit_noise_model(amp, sig, NoiseModelKind(args.model))
    out_params = Path(args.out_params)
    out_params.parent.mkdir(parents=True, exist_ok=True)
    resolved = resolved_dict({**cfg, "noise": params.to_dict()})
    tio.save_json(out_params, resolved)
    outputs = [str(out_params)]
    if args.out_csv:
        Path(args.out_csv).parent.mkdir(parents=True, exist_ok=True)
        tio.write_calibration_csv(args.out_csv, amp, sig)
        outputs.append(str(args.out_csv))
    RunManifest("calibrate", [], outputs, args.config, args.preset, sim.seed, list(args.set or []),
                {"frames": args.frames, "bins": args.bins, "min_count": args.min_count, "model": args.model},
                resolved).write(out_params.parent)
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = resolve_config(args)
    method = check_method(args.method or cfg.get("decode", {}).get("method", "kde"))
    config = frequency_config(cfg)
    npar = noise_params(cfg)
    kpar = kde_params(cfg)
    order = cfg.get("decode", {}).get("crt_order")
    prefilter = _prefilter(cfg)
    frames = [_read(p) for p in args.frames]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for path, frame in zip(args.frames, frames):
        depth = decode_frame(_to_phase(frame, config), config, npar, kpar, method, prefilter=prefilter,
                             crt_order=order)
        stem = Path(path).name.removesuffix(FRAME_SUFFIX)
        dpath = out / f"{stem}.depth{FRAME_SUFFIX}"
        tio.write_frame(dpath, depth)
        outputs.append(dpath.name)
        if not args.no_pgm:
            ppath = out / f"{stem}.pgm"
            tio.export_depth_pgm(depth, ppath, args.pgm_scale)
            outputs.append(ppath.name)
    resolved = resolved_dict(cfg)
    resolved["decode"] = {**resolved.get("decode", {}), "method": method}
    RunManifest("decode", [str(p) for p in args.frames], outputs, args.config, args.preset, None,
                list(args.set or []), {"pgm_scale": args.pgm_scale, "no_pgm": args.no_pgm}, resolved).write(out)
    return EXIT_OK


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise tio.InvalidConfigError(f"not a comma-separated number list: {text!r}") from exc


def cmd_evaluate(args) -> int:
    truth = _read(args.truth, Scene)
    depths = [_read(p, DepthFrame) for p in args.depth]
    thr = np.sort(_parse_floats(args.thresholds)) if args.thresholds else default_thresholds()
    reports = [sweep_thresholds(d, truth, thr, args.inlier_tol) for d in depths]
    report = average_reports(reports)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tio.write_report_csv(out, report)
    RunManifest("evaluate", [args.truth, *args.depth], [out.name], None, None, None, [],
                {"thresholds": args.thresholds, "inlier_tol": args.inlier_tol}, {}).write(out.parent)
    return EXIT_OK


SWEEP_FIELDS = ["method", "r", "hypothesis_count", "h", "s1", "s2", "conf_threshold",
                "inlier_rate", "outlier_rate", "valid_count", "inlier_std", "outlier_std"]


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    config = frequency_config(cfg)
    npar = noise_params(cfg)
    base = kde_params(cfg)
    sim = sim_params(cfg)
    if args.seed is not None:
        sim = SimParams.from_dict({**sim.to_dict(), "seed": args.seed})
    methods = [check_method(m) for m in args.method.split(",")]
    scn = scene(cfg)
    prefilter = _prefilter(cfg)
    frames = [
        phase_frame_from_voltages(
            simulate_voltages(scn, config, SimParams.from_dict({**sim.to_dict(), "seed": sim.seed + i})), config)
        for i in range(args.seeds)
    ]

    def grid(flag, default):
        return _parse_floats(flag) if flag else [default]

    axes = [grid(args.r, base.r), grid(args.hypotheses, base.hypothesis_count), grid(args.h, base.h),
            grid(args.s1, base.s1), grid(args.s2, base.s2), grid(args.conf_threshold, base.conf_threshold)]
    rows = []
    for method in methods:
        for r, nh, h, s1, s2, thr in itertools.product(*axes):
            try:
                kp = KdeParams(r=int(r), hypothesis_count=int(nh), h=h, s1=s1, s2=s2, p_min=base.p_min)
            except ValueError as exc:
                raise tio.InvalidConfigError(str(exc)) from exc
            reports = [
                sweep_thresholds(decode_frame(f, config, npar, kp, method, prefilter=prefilter), scn, [thr],
                                 args.inlier_tol)
                for f in frames
            ]
            avg = average_reports(reports)
            rec = avg.records[0]
            rows.append([method, int(r), int(nh), h, s1, s2, thr, rec.inlier_rate, rec.outlier_rate,
                         rec.valid_count, float(avg.inlier_std[0]), float(avg.outlier_std[0])])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_FIELDS)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    RunManifest("sweep", [], [out.name], args.config, args.preset, sim.seed, list(args.set or []),
                {"seeds": args.seeds, "method": args.method, "r": args.r, "hypotheses": args.hypotheses,
                 "h": args.h, "s1": args.s1, "s2": args.s2, "conf_threshold": args.conf_threshold,
                 "inlier_tol": args.inlier_tol},
                resolved_dict(cfg)).write(out.parent)
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=PRESETS, help="bundled scene/simulation/noise config")
    p.add_argument("--config", help="pipeline config JSON; overrides the preset")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable; JSON-parsed); beats --config and --preset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tofunwrap",
        description="Multi-frequency time-of-flight depth decoding with KDE phase unwrapping.",
        epilog=f"Thread count: --threads, else ${THREADS_ENV}, else all cores.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, help=f"worker threads for the decode kernels (default ${THREADS_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scene to voltage frames plus a ground-truth file")
    _config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="noise seed of the first frame (later frames use seed+i)")
    p.add_argument("--frames", type=int, default=1, help="number of noisy frames (default 1)")
    p.add_argument("--store", choices=("voltage", "phase"), default="voltage",
                   help="write raw voltage frames or extracted phase frames (default voltage)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit a phase-noise model to Monte-Carlo repeats")
    _config_flags(p)
    p.add_argument("--out-params", required=True, help="output config JSON with the fitted [noise] section")
    p.add_argument("--out-csv", help="optional amplitude,sigma_phi table")
    p.add_argument("--seed", type=int, help="seed of the first repeat")
    p.add_argument("--frames", type=int, default=40, help="repeated frames (default 40)")
    p.add_argument("--bins", type=int, default=64, help="log-spaced amplitude bins (default 64)")
    p.add_argument("--min-count", type=int, default=20, help="drop bins with fewer samples (default 20)")
    p.add_argument("--model", default="sigma_point", choices=[k.value for k in NoiseModelKind],
                   help="noise model to fit (default sigma_point)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("decode", help="decode voltage or phase frames into depth frames and PGMs")
    _config_flags(p)
    p.add_argument("frames", nargs="+", help="input frame files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--method", help="kde, crt or argmin-j (default: decode.method from config, else kde)")
    p.add_argument("--pgm-scale", type=float, default=1000.0, help="PGM counts per meter (default 1000)")
    p.add_argument("--no-pgm", action="store_true", help="skip PGM export")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="inlier/outlier rates per confidence threshold")
    p.add_argument("depth", nargs="+", help="depth frame files (averaged)")
    p.add_argument("--truth", required=True, help="ground-truth frame file")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--thresholds", help="comma-separated confidence thresholds (default dense grid over [0, 1])")
    p.add_argument("--inlier-tol", type=float, default=DEFAULT_INLIER_TOL, help="inlier tolerance in m (default 0.30)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid over selection parameters on simulated frames")
    _config_flags(p)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--seed", type=int, help="seed of the first frame")
    p.add_argument("--seeds", type=int, default=1, help="frames per grid point (default 1)")
    p.add_argument("--method", default="kde", help="comma-separated methods (default kde)")
    p.add_argument("--r", help="comma-separated neighborhood radii")
    p.add_argument("--hypotheses", help="comma-separated hypothesis counts |I|")
    p.add_argument("--h", help="comma-separated kernel scales")
    p.add_argument("--s1", help="comma-separated unwrap-likelihood scales")
    p.add_argument("--s2", help="comma-separated phase-likelihood scales")
    p.add_argument("--conf-threshold", help="comma-separated confidence thresholds")
    p.add_argument("--inlier-tol", type=float, default=DEFAULT_INLIER_TOL, help="inlier tolerance in m (default 0.30)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_threads(args.threads)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except UnknownMethodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_METHOD
    except tio.FrameFormatError as exc:
        print(f"error: bad frame file: {exc}", file=sys.stderr)
        return EXIT_BAD_FRAME
    except (tio.InvalidConfigError, json.JSONDecodeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except (ValueError, NoiseFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
