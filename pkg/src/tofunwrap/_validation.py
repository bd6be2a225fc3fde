"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from tofunwrap.core import FrequencyConfig, PhaseFrame, VoltageFrame


def check_amplitudes(X) -> np.ndarray:
    """Accept ``(n,)`` or ``(n, 1)`` amplitudes; return a flat float array."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    a = check_array(a, ensure_2d=False, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"amplitudes must be 1-d or a single column, got shape {a.shape}")
    return a


def check_positive(name: str, value, strict: bool = True):
    v = float(value)
    if not np.isfinite(v) or (v <= 0 if strict else v < 0):
        raise ValueError(f"{name} must be {'positive' if strict else 'non-negative'}, got {value!r}")
    return v


def as_phase_frame(X, config: FrequencyConfig) -> PhaseFrame:
    """Coerce decoder input to a :class:`PhaseFrame`.

    Accepts a PhaseFrame, a VoltageFrame, a complex ``(H, W, M)`` array of
    phase vectors or a real ``(H, W, M, N)`` voltage array.
    """
    from tofunwrap.core import phase_frame_from_voltages

    if isinstance(X, PhaseFrame):
        frame = X
    elif isinstance(X, VoltageFrame):
        frame = phase_frame_from_voltages(X, config)
    else:
        arr = np.asarray(X)
        if np.iscomplexobj(arr) and arr.ndim == 3:
            frame = PhaseFrame(arr)
        elif arr.ndim == 4:
            frame = phase_frame_from_voltages(VoltageFrame(arr), config)
        else:
            raise ValueError(
                "expected PhaseFrame, VoltageFrame, complex (H, W, M) or real (H, W, M, N) array, "
                f"got array of shape {arr.shape} and dtype {arr.dtype}"
            )
    if frame.z.shape[-1] != config.n_frequencies:
        raise ValueError(f"frame has {frame.z.shape[-1]} frequencies, config has {config.n_frequencies}")
    return frame
