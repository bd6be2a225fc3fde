"""Synthetic scenes with known distance, rendered to noisy voltage frames."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from tofunwrap.core import (
    SPEED_OF_LIGHT,
    TWO_PI,
    FrequencyConfig,
    PhaseFrame,
    VoltageFrame,
    phase_frame_from_voltages,
)


class SceneKind(str, enum.Enum):
    STAIRCASE_PLANES = "StaircasePlanes"
    SLANTED_PLANE = "SlantedPlane"
    SPHERE_FIELD = "SphereField"
    STEP_EDGES = "StepEdges"


@dataclass(frozen=True)
class Scene:
    distance: np.ndarray
    reflectivity: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distance, dtype=np.float64)
        rho = np.asarray(self.reflectivity, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if d.ndim != 2 or d.shape != rho.shape or d.shape != v.shape:
            raise ValueError("distance, reflectivity and valid must be 2-d arrays of one shape")
        if np.any(rho < 0):
            raise ValueError("reflectivity must be non-negative")
        if np.any(d[v] <= 0):
            raise ValueError("valid distances must be positive")
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "reflectivity", rho)
        object.__setattr__(self, "valid", v)

    @property
    def height(self) -> int:
        return self.distance.shape[0]

    @property
    def width(self) -> int:
        return self.distance.shape[1]

    def truth(self) -> np.ndarray:
        """Ground-truth distance with NaN where no truth exists."""
        return np.where(self.valid, self.distance, np.nan)


@dataclass(frozen=True)
class SimParams:
    """Forward-model constants.

    ``amplitude = amplitude_at_1m * reflectivity / distance**falloff``.
    ``noise_dof`` switches the voltage noise from Gaussian to a Student-t
    with that many degrees of freedom, scaled to the same ``sigma_v``.
    """

    sigma_v: float = 0.0
    amplitude_at_1m: float = 1000.0
    falloff: float = 2.0
    dc_offset: float = 0.0
    seed: int = 0
    noise_dof: float | None = None

    def __post_init__(self):
        if self.sigma_v < 0:
            raise ValueError("sigma_v must be non-negative")
        if not self.amplitude_at_1m > 0:
            raise ValueError("amplitude_at_1m must be positive")
        if self.noise_dof is not None and not self.noise_dof > 2:
            raise ValueError("noise_dof must exceed 2 for a finite variance")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        return cls(**d)

    def z_sigma(self, config: FrequencyConfig) -> float:
        """Per-component std of ``z`` implied by ``sigma_v``."""
        return self.sigma_v * np.sqrt(2.0 / config.subphase_count)


def make_scene(kind, width: int, height: int, depth_range, reflectivity=1.0, steps: int = 30) -> Scene:
    """Build a deterministic test scene.

    Parameters
    ----------
    kind : SceneKind or str
        ``StaircasePlanes``: ``steps`` fronto-parallel slabs, one per column
        band, evenly spaced over ``depth_range``. ``SlantedPlane``: depth
        linear in the row index. ``SphereField``: spheres protruding from a
        back plane. ``StepEdges``: a grid of flat blocks with sharp depth
        discontinuities.
    depth_range : (float, float)
        Nearest and farthest distance in meters.
    reflectivity : float or (float, float)
        Constant, or a ``(low, high)`` pair giving a log-spaced gradient
        across columns.
    """
    kind = SceneKind(kind)
    lo, hi = (float(depth_range[0]), float(depth_range[1]))
    if not (0 < lo <= hi):
        raise ValueError(f"empty or non-positive depth range {depth_range}")
    if width < 1 or height < 1:
        raise ValueError("scene must have at least one pixel")
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    u = cols / max(width - 1, 1)
    v = rows / max(height - 1, 1)

    if kind is SceneKind.STAIRCASE_PLANES:
        n = max(1, min(int(steps), width))
        band = np.minimum((cols * n // width).astype(np.int64), n - 1)
        levels = np.linspace(lo, hi, n) if n > 1 else np.array([lo])
        d = levels[band]
    elif kind is SceneKind.SLANTED_PLANE:
        d = lo + (hi - lo) * v
    elif kind is SceneKind.SPHERE_FIELD:
        d = np.full((height, width), hi)
        n_side = 3
        radius = 0.5 / n_side
        centers = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), n_side * n_side)
        for idx in range(n_side * n_side):
            cy = (idx // n_side + 0.5) / n_side
            cx = (idx % n_side + 0.5) / n_side
            rho2 = (u - cx) ** 2 + (v - cy) ** 2
            inside = rho2 < radius ** 2
            bump = centers[idx] - (hi - lo) * 0.1 * np.sqrt(np.clip(1.0 - rho2 / radius ** 2, 0, 1))
            d = np.where(inside, np.minimum(d, np.maximum(bump, lo)), d)
    else:
        n_side = 4
        by = np.minimum((v * n_side).astype(np.int64), n_side - 1)
        bx = np.minimum((u * n_side).astype(np.int64), n_side - 1)
        # fixed permutation so adjacent blocks jump by several meters
        order = np.array([7, 2, 12, 5, 14, 0, 9, 3, 11, 6, 15, 1, 8, 13, 4, 10])
        levels = np.linspace(lo, hi, n_side * n_side)[order]
        d = levels[by * n_side + bx]

    if width == 1 and height == 1:
        d = np.full((1, 1), lo)

    if np.ndim(reflectivity) == 0:
        rho = np.full((height, width), float(reflectivity))
    else:
        r_lo, r_hi = (float(reflectivity[0]), float(reflectivity[1]))
        if r_lo <= 0 or r_hi <= 0:
            raise ValueError("reflectivity gradient endpoints must be positive")
        rho = np.exp(np.log(r_lo) + (np.log(r_hi) - np.log(r_lo)) * u)
    return Scene(d, rho, np.ones((height, width), dtype=bool))


def scene_amplitude(scene: Scene, sim: SimParams) -> np.ndarray:
    d = np.where(scene.valid, scene.distance, 1.0)
    return np.where(scene.valid, sim.amplitude_at_1m * scene.reflectivity / d ** sim.falloff, 0.0)


def _row_noise(shape, sim: SimParams) -> np.ndarray:
    # one independent stream per row so row tiles can be generated in any order
    H = shape[0]
    children = np.random.SeedSequence(sim.seed).spawn(H)
    out = np.empty(shape)
    for y, ss in enumerate(children):
        rng = np.random.Generator(np.random.Philox(ss))
        if sim.noise_dof is None:
            out[y] = rng.standard_normal(shape[1:])
        else:
            nu = sim.noise_dof
            out[y] = rng.standard_t(nu, shape[1:]) * np.sqrt((nu - 2.0) / nu)
    return out * sim.sigma_v


def simulate_voltages(scene: Scene, config: FrequencyConfig, sim: SimParams) -> VoltageFrame:
    """Correlation samples ``B + a cos(4 pi f d / c + p_o + 2 pi k / N) + noise``."""
    N = config.subphase_count
    f = np.asarray(config.frequencies_hz, dtype=np.float64)
    a = scene_amplitude(scene, sim)
    d = np.where(scene.valid, scene.distance, 0.0)
    theta = 4.0 * np.pi * f * d[..., None] / SPEED_OF_LIGHT
    steps = config.phase_offset + TWO_PI * np.arange(N) / N
    v = sim.dc_offset + a[..., None, None] * np.cos(theta[..., None] + steps)
    if sim.sigma_v > 0:
        v = v + _row_noise(v.shape, sim)
    return VoltageFrame(v)


def simulate_phase_frame(scene: Scene, config: FrequencyConfig, sim: SimParams) -> PhaseFrame:
    return phase_frame_from_voltages(simulate_voltages(scene, config, sim), config)


PRESETS = ("kitchen-analog", "lecture-analog", "library-analog")


def load_preset(name: str) -> dict:
    """Bundled scene/simulation config for one of :data:`PRESETS`."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; expected one of {PRESETS}")
    text = resources.files("tofunwrap").joinpath("data", f"{name}.json").read_text()
    return json.loads(text)


def scene_from_dict(d: dict) -> Scene:
    known = {"kind", "width", "height", "depth_range_m", "reflectivity", "steps"}
    extra = set(d) - known
    if extra:
        raise KeyError(f"unknown scene keys: {sorted(extra)}")
    return make_scene(d["kind"], int(d["width"]), int(d["height"]), d["depth_range_m"],
                      reflectivity=d.get("reflectivity", 1.0), steps=int(d.get("steps", 30)))
