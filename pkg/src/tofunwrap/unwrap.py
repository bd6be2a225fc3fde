"""Pairwise unwrapping constraints, CRT baseline and hypothesis enumeration.

Pseudo-distance ``t`` is measured on the common axis ``k_m * unwrapped_phase_m``
(radians at the common frequency ``F``); one unambiguous range spans
``2*pi*F/gcd`` on this axis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from tofunwrap.core import TWO_PI, FrequencyConfig, pseudo_to_meters


def pair_indices(M: int) -> list[tuple[int, int]]:
    """Constraint pairs ``(i, j)`` with ``i > j``: (1,0), (2,0), (2,1), ..."""
    return [(i, j) for i in range(1, M) for j in range(i)]


def pair_variances(config: FrequencyConfig, sigma_phi=1.0) -> np.ndarray:
    """Residual variances for each constraint pair.

    ``sigma_phi`` is a scalar (equal phase noise, the default relative
    units) or one value per frequency.
    """
    k = np.asarray(config.k_coeffs, dtype=np.float64)
    s = np.broadcast_to(np.asarray(sigma_phi, dtype=np.float64), k.shape)
    return np.array([(k[i] * s[i] / TWO_PI) ** 2 + (k[j] * s[j] / TWO_PI) ** 2
                     for i, j in pair_indices(config.n_frequencies)])


def constraint_residuals(phases, n, config: FrequencyConfig) -> np.ndarray:
    """Residuals of ``k_i n_i - k_j n_j = (k_j phi_j - k_i phi_i) / 2pi``.

    Broadcasts over leading axes; the last axis of ``phases`` and ``n`` is
    the frequency axis. Returns shape ``(..., M(M-1)/2)``.
    """
    phi = np.asarray(phases, dtype=np.float64)
    nn = np.asarray(n, dtype=np.float64)
    k = np.asarray(config.k_coeffs, dtype=np.float64)
    out = [(k[j] * phi[..., j] - k[i] * phi[..., i]) / TWO_PI - (k[i] * nn[..., i] - k[j] * nn[..., j])
           for i, j in pair_indices(config.n_frequencies)]
    return np.stack(out, axis=-1)


def cost_J(residuals, variances) -> np.ndarray:
    """Variance-normalized sum of squared constraint residuals."""
    e = np.asarray(residuals, dtype=np.float64)
    out = np.sum(e * e / np.asarray(variances, dtype=np.float64), axis=-1)
    return out[()] if out.ndim == 0 else out


def unwrap_likelihood(J, s1: float):
    return np.exp(-np.asarray(J, dtype=np.float64) / (2.0 * s1 * s1))


def fuse_phases(phases, n, config: FrequencyConfig):
    """Weighted average of the per-frequency pseudo-distances ``k_m (phi_m + 2 pi n_m)``.

    Weights are ``1 / k_m**2`` (equal phase noise on every frequency).
    """
    phi = np.asarray(phases, dtype=np.float64)
    nn = np.asarray(n, dtype=np.float64)
    k = np.asarray(config.k_coeffs, dtype=np.float64)
    w = 1.0 / (k * k)
    out = np.sum(k * (phi + TWO_PI * nn) * w, axis=-1) / np.sum(w)
    return out[()] if out.ndim == 0 else out


def all_unwrapping_vectors(config: FrequencyConfig) -> np.ndarray:
    """Every vector with ``0 <= n_m < P_m``; shape ``(prod P, M)``."""
    return np.array(list(itertools.product(*(range(p) for p in config.periods))), dtype=np.int64)


def default_crt_order(config: FrequencyConfig) -> tuple[int, ...]:
    """Coarsest frequency (largest k) first."""
    k = config.k_coeffs
    return tuple(sorted(range(len(k)), key=lambda m: (-k[m], m)))


def unwrap_crt(phases, config: FrequencyConfig, order=None) -> np.ndarray:
    """Sequential pairwise CRT unwrapping.

    The first frequency in ``order`` anchors the estimate; each following
    phase is unwrapped against the fused pseudo-distance of the phases
    already unwrapped, by rounding ``(T - k_i phi_i) / (2 pi k_i)``. Where
    the running estimate is itself only known modulo a period shorter than
    the new frequency's, the branch whose rounding residual is smallest is
    taken. Early rounding errors propagate, as in any sequential scheme.

    Works on a single pixel (``phases`` of shape ``(M,)``) or on arrays of
    shape ``(..., M)``. Returns integer vectors of the same shape.
    """
    phi = np.asarray(phases, dtype=np.float64)
    order = tuple(default_crt_order(config) if order is None else order)
    M = config.n_frequencies
    if sorted(order) != list(range(M)):
        raise ValueError(f"order must be a permutation of 0..{M - 1}")
    k = config.k_coeffs
    flat = phi.reshape(-1, M)
    n = np.zeros(flat.shape, dtype=np.int64)

    first = order[0]
    period = k[first]                      # ambiguity of T, in units of 2*pi
    T = k[first] * flat[:, first]
    done = [first]
    for i in order[1:]:
        span = np.lcm(period, k[i]) // period
        meas = k[i] * flat[:, i]
        best_q = np.zeros(flat.shape[0], dtype=np.int64)
        best_err = np.full(flat.shape[0], np.inf)
        for q in range(span):
            x = (T + TWO_PI * period * q - meas) / (TWO_PI * k[i])
            err = np.abs(x - np.round(x))
            better = err < best_err
            best_q = np.where(better, q, best_q)
            best_err = np.where(better, err, best_err)
        shift = TWO_PI * period * best_q
        T = T + shift
        for m in done:
            n[:, m] += best_q * (period // k[m])
        n[:, i] = np.round((T - meas) / (TWO_PI * k[i])).astype(np.int64)
        done.append(i)
        period = np.lcm(period, k[i])
        kk = np.array([k[m] for m in done], dtype=np.float64)
        unwrapped = np.stack([kk[c] * (flat[:, m] + TWO_PI * n[:, m]) for c, m in enumerate(done)], axis=1)
        w = 1.0 / kk ** 2
        T = unwrapped @ w / w.sum()
    n %= np.asarray(config.periods, dtype=np.int64)
    return n.reshape(phi.shape)


@dataclass(frozen=True)
class Hypothesis:
    n: tuple[int, ...]
    t_star: float
    cost_J: float
    unwrap_likelihood: float
    combined_weight_factor: float

    def distance(self, config: FrequencyConfig) -> float:
        return float(pseudo_to_meters(self.t_star, config))


def enumerate_hypotheses(phases, config: FrequencyConfig, count: int = 2, s1: float = 1.0,
                         phase_lik: float = 1.0, valid: bool = True) -> list[Hypothesis]:
    """Rank all unwrapping vectors of one pixel by ``J`` and keep ``count``.

    Every vector inside the unambiguous range is scored, so the global
    minimizer of ``J`` is always the first entry. Ties in ``J`` go to the
    smaller pseudo-distance.
    """
    if not valid or phase_lik <= 0:
        return []
    phi = np.asarray(phases, dtype=np.float64)
    vecs = all_unwrapping_vectors(config)
    J = cost_J(constraint_residuals(phi, vecs, config), pair_variances(config))
    t = fuse_phases(phi, vecs, config)
    idx = np.lexsort((t, J))[:count]
    lu = unwrap_likelihood(J[idx], s1)
    return [Hypothesis(tuple(int(v) for v in vecs[i]), float(t[i]), float(J[i]), float(l), float(l * phase_lik))
            for i, l in zip(idx, lu)]


def cell_index(t, config: FrequencyConfig):
    """Index of the 2*pi-wide candidate cell containing pseudo-distance ``t``."""
    return np.clip(np.floor(np.asarray(t) / TWO_PI).astype(np.int64), 0, config.cell_count - 1)


def cell_hypotheses(phases, config: FrequencyConfig) -> np.ndarray:
    """One unwrapping vector per candidate cell along the range axis.

    For cell ``c`` the vector makes each ``k_m * unwrapped_phase_m`` land
    as close as possible to the cell center ``2 pi (c + 1/2)``; the true
    vector of a noiseless measurement is always among them. Shape
    ``(cell_count, M)``.
    """
    phi = np.asarray(phases, dtype=np.float64)
    k = np.asarray(config.k_coeffs, dtype=np.float64)
    centers = TWO_PI * (np.arange(config.cell_count) + 0.5)
    n = np.round((centers[:, None] / k - phi) / TWO_PI).astype(np.int64)
    return np.mod(n, np.asarray(config.periods, dtype=np.int64))


def range_axis_cells(config: FrequencyConfig, n_points: int = 20000) -> np.ndarray:
    """Sorted distinct candidate-cell boundaries visited by a distance sweep (m).

    A noiseless sweep over the unambiguous range is unwrapped exactly; the
    returned array holds the metric start of every cell that the fused
    pseudo-distances fall into.
    """
    from tofunwrap.core import true_unwrapping

    d = np.linspace(0.0, config.unambiguous_range, n_points, endpoint=False)
    phi, n = true_unwrapping(d, config)
    cells = np.unique(cell_index(fuse_phases(phi, n, config), config))
    return pseudo_to_meters(TWO_PI * cells, config)

