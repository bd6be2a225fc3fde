"""Frequency configuration, frame containers and the exact phase/distance math."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
TWO_PI = 2.0 * np.pi

KINECT_V2_FREQUENCIES_HZ = (80_000_000, 16_000_000, 120_000_000)


class RangeError(ValueError):
    """Raised when a distance lies outside the unambiguous range."""


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


@dataclass(frozen=True)
class FrequencyConfig:
    """Modulation frequencies and the integer quantities derived from them.

    Parameters
    ----------
    frequencies_hz : tuple of int
        Modulation frequencies in Hz, in sensor order.
    subphase_count : int
        Number of phase-stepped reference signals per frequency.
    phase_offset : float
        Common phase offset of the reference signals, in radians.
    """

    frequencies_hz: tuple[int, ...] = KINECT_V2_FREQUENCIES_HZ
    subphase_count: int = 3
    phase_offset: float = 0.0

    def __post_init__(self):
        freqs = tuple(int(f) for f in self.frequencies_hz)
        if any(f != g for f, g in zip(freqs, self.frequencies_hz)):
            raise ValueError("frequencies must be integer Hz")
        if len(freqs) < 2:
            raise ValueError("at least two modulation frequencies are required")
        if any(f <= 0 for f in freqs):
            raise ValueError("frequencies must be positive")
        if len(set(freqs)) != len(freqs):
            raise ValueError("frequencies must be distinct")
        if int(self.subphase_count) < 3:
            raise ValueError("subphase_count must be >= 3")
        object.__setattr__(self, "frequencies_hz", freqs)
        object.__setattr__(self, "subphase_count", int(self.subphase_count))
        object.__setattr__(self, "phase_offset", float(self.phase_offset))

    @classmethod
    def kinect_v2(cls) -> "FrequencyConfig":
        return cls(KINECT_V2_FREQUENCIES_HZ, subphase_count=3, phase_offset=0.0)

    @property
    def n_frequencies(self) -> int:
        return len(self.frequencies_hz)

    @property
    def common_freq(self) -> int:
        """Least common multiple of the frequencies (Hz)."""
        return reduce(_lcm, self.frequencies_hz)

    @property
    def base_freq(self) -> int:
        """Greatest common divisor of the frequencies (Hz)."""
        return reduce(math.gcd, self.frequencies_hz)

    @property
    def k_coeffs(self) -> tuple[int, ...]:
        F = self.common_freq
        return tuple(F // f for f in self.frequencies_hz)

    @property
    def unambiguous_range(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.base_freq)

    @property
    def periods(self) -> tuple[int, ...]:
        # exact integer form of round(range / (c / 2f))
        g = self.base_freq
        return tuple(f // g for f in self.frequencies_hz)

    @property
    def pseudo_range(self) -> float:
        """Width of the unambiguous interval on the pseudo-distance axis."""
        return TWO_PI * self.common_freq / self.base_freq

    @property
    def cell_count(self) -> int:
        """Number of 2*pi-wide candidate cells along the pseudo-distance axis."""
        return self.common_freq // self.base_freq

    @property
    def cell_width(self) -> float:
        """Metric width of one candidate cell, c / (2F)."""
        return SPEED_OF_LIGHT / (2.0 * self.common_freq)

    def to_dict(self) -> dict:
        return {
            "frequencies_hz": list(self.frequencies_hz),
            "subphase_count": self.subphase_count,
            "phase_offset_rad": self.phase_offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyConfig":
        return cls(
            tuple(d.get("frequencies_hz", KINECT_V2_FREQUENCIES_HZ)),
            subphase_count=d.get("subphase_count", 3),
            phase_offset=d.get("phase_offset_rad", 0.0),
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class VoltageFrame:
    """Raw correlation samples, shape ``(height, width, M, N)``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 4 or s.shape[0] < 1 or s.shape[1] < 1:
            raise ValueError(f"voltage samples must have shape (H, W, M, N), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("voltage samples must be finite")
        object.__setattr__(self, "samples", _readonly(s))

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class PhaseFrame:
    """Per-pixel complex phase vectors ``z``, shape ``(height, width, M)``.

    Wrapped phase and amplitude are derived from ``z`` so that they can
    never disagree with it.
    """

    z: np.ndarray
    _phase: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.complex128)
        if z.ndim != 3 or z.shape[0] < 1 or z.shape[1] < 1:
            raise ValueError(f"z must have shape (H, W, M), got {z.shape}")
        object.__setattr__(self, "z", _readonly(z))
        object.__setattr__(self, "_phase", _readonly(wrapped_angle(z)))

    @property
    def height(self) -> int:
        return self.z.shape[0]

    @property
    def width(self) -> int:
        return self.z.shape[1]

    @property
    def phase(self) -> np.ndarray:
        return self._phase

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.z)

    @property
    def valid(self) -> np.ndarray:
        """Pixels where every frequency has non-zero amplitude."""
        return np.all(self.amplitude > 0, axis=-1)


def wrapped_angle(z) -> np.ndarray:
    """``arg z`` mapped onto ``[0, 2*pi)``."""
    phi = np.mod(np.angle(z), TWO_PI)
    # mod can round tiny negative angles up to exactly 2*pi
    return np.where(phi >= TWO_PI, 0.0, phi)


def extract_phase(voltages, config: FrequencyConfig):
    """Least-squares phase vector from phase-stepped voltage samples.

    Parameters
    ----------
    voltages : array_like, shape (..., M, N)
        Correlation samples; the last axis runs over the ``N`` sub-phases.
    config : FrequencyConfig

    Returns
    -------
    z : ndarray of complex, shape (..., M)
    phase : ndarray, shape (..., M)
        Wrapped phase in ``[0, 2*pi)``.
    amplitude : ndarray, shape (..., M)
    """
    v = np.asarray(voltages, dtype=np.float64)
    N = config.subphase_count
    if v.shape[-1] != N:
        raise ValueError(f"expected {N} sub-phase samples, got {v.shape[-1]}")
    if v.ndim < 2 or v.shape[-2] != config.n_frequencies:
        raise ValueError(f"expected {config.n_frequencies} frequencies on axis -2")
    k = np.arange(N)
    basis = np.exp(-1j * (config.phase_offset + TWO_PI * k / N))
    z = (2.0 / N) * (v @ basis)
    return z, wrapped_angle(z), np.abs(z)


def phase_frame_from_voltages(frame: VoltageFrame, config: FrequencyConfig) -> PhaseFrame:
    z, _, _ = extract_phase(frame.samples, config)
    return PhaseFrame(z)


def meters_to_pseudo(distance, config: FrequencyConfig):
    return np.asarray(distance, dtype=np.float64) * (4.0 * np.pi * config.common_freq / SPEED_OF_LIGHT)


def pseudo_to_meters(t, config: FrequencyConfig):
    """Convert a fused pseudo-distance to radial distance in meters."""
    return np.asarray(t, dtype=np.float64) * (SPEED_OF_LIGHT / (4.0 * np.pi * config.common_freq))


def wrap_phase(distance, frequency_hz: float, max_range: float | None = None):
    """Wrapped phase and period index for a true distance.

    Returns ``(phase_wrapped, n)`` with ``phase_wrapped`` in ``[0, 2*pi)``.
    Raises :class:`RangeError` for negative distances or distances at or
    beyond ``max_range``.
    """
    d = np.asarray(distance, dtype=np.float64)
    if np.any(d < 0) or (max_range is not None and np.any(d >= max_range)):
        raise RangeError(f"distance outside [0, {max_range}) m")
    unwrapped = 4.0 * np.pi * frequency_hz * d / SPEED_OF_LIGHT
    n = np.floor(unwrapped / TWO_PI)
    wrapped = unwrapped - TWO_PI * n
    # floor on a value just under a multiple of 2*pi can leave wrapped == 2*pi
    over = wrapped >= TWO_PI
    n = np.where(over, n + 1, n)
    wrapped = np.where(over, wrapped - TWO_PI, wrapped)
    if d.ndim == 0:
        return float(wrapped), int(n)
    return wrapped, n.astype(np.int64)


def true_unwrapping(distance, config: FrequencyConfig):
    """Phases and unwrapping vectors a noiseless sensor would produce.

    Returns arrays of shape ``(..., M)``.
    """
    d = np.asarray(distance, dtype=np.float64)
    phases, ns = [], []
    for f in config.frequencies_hz:
        p, n = wrap_phase(d, f, config.unambiguous_range)
        phases.append(np.asarray(p))
        ns.append(np.asarray(n))
    return np.stack(phases, axis=-1), np.stack(ns, axis=-1).astype(np.int64)
