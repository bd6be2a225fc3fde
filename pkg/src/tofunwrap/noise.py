"""Phase-noise prediction from amplitude, model calibration and z prefiltering.

Three predictors are provided, all mapping an amplitude ``a`` to a phase
standard deviation in radians:

* reciprocal: ``gamma / a``
* sigma-point: ``atan(sqrt(1 / ((a / sigma_z)**2 - 1)))``, i.e.
  ``asin(sigma_z / a)``, with the reciprocal fallback
  ``(sigma_z * pi / 2) / a`` for ``a <= sigma_z``
* bilateral-quadratic: the sigma-point form with ``a / sigma_z`` replaced
  by ``g0 + g1*a + g2*a**2``

Fitting is done in the inverse (amplitude) domain, which keeps the large
phase deviations of weak pixels from dominating the fit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from tofunwrap._validation import check_amplitudes
from tofunwrap.core import PhaseFrame

HALF_PI = 0.5 * np.pi


class NoiseFitError(ValueError):
    """Raised when calibration samples cannot determine a model."""


class NoiseModelKind(str, enum.Enum):
    RECIPROCAL = "reciprocal"
    SIGMA_POINT = "sigma_point"
    BILATERAL_QUADRATIC = "bilateral_quadratic"


@dataclass(frozen=True)
class NoiseModelParams:
    gamma: float = 1.0
    sigma_z: float = 1.0
    bilateral_coeffs: tuple[float, float, float] = (0.0, 1.0, 0.0)
    model_kind: NoiseModelKind = NoiseModelKind.SIGMA_POINT

    def __post_init__(self):
        object.__setattr__(self, "model_kind", NoiseModelKind(self.model_kind))
        object.__setattr__(self, "bilateral_coeffs", tuple(float(c) for c in self.bilateral_coeffs))
        if len(self.bilateral_coeffs) != 3:
            raise ValueError("bilateral_coeffs must have three entries")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.sigma_z > 0:
            raise ValueError("sigma_z must be positive")

    def predict(self, amplitude) -> np.ndarray:
        return predict_sigma(amplitude, self)

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind.value,
            "gamma_rad_amp": self.gamma,
            "sigma_z_amp": self.sigma_z,
            "bilateral_coeffs": list(self.bilateral_coeffs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModelParams":
        return cls(
            gamma=d.get("gamma_rad_amp", 1.0),
            sigma_z=d.get("sigma_z_amp", 1.0),
            bilateral_coeffs=tuple(d.get("bilateral_coeffs", (0.0, 1.0, 0.0))),
            model_kind=d.get("model_kind", "sigma_point"),
        )


def predict_sigma_reciprocal(amplitude, params: NoiseModelParams):
    """``gamma / a``; non-positive amplitudes map to ``inf``."""
    a = np.asarray(amplitude, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.where(a > 0, params.gamma / np.where(a > 0, a, 1.0), np.inf)
    return out[()] if out.ndim == 0 else out


def _tangent_angle(ratio):
    # atan(sqrt(1/(r^2 - 1))) written as asin(1/r): same value for r > 1,
    # without the cancellation in r^2 - 1 near the circle
    return np.arcsin(1.0 / ratio)


def predict_sigma_sigmapoint(amplitude, params: NoiseModelParams):
    a = np.asarray(amplitude, dtype=np.float64)
    sz = params.sigma_z
    inside = a > sz
    safe = np.where(inside, a, 2.0 * sz)
    main = _tangent_angle(safe / sz)
    with np.errstate(divide="ignore"):
        fallback = np.where(a > 0, (sz * HALF_PI) / np.where(a > 0, a, 1.0), np.inf)
    out = np.where(inside, main, fallback)
    return out[()] if out.ndim == 0 else out


def predict_sigma_bilateral(amplitude, params: NoiseModelParams, return_flags: bool = False):
    """Quadratic-polynomial tangent model.

    Where ``g0 + g1*a + g2*a**2 <= 1`` the geometric model is undefined;
    those pixels are clamped to ``pi/2`` and reported in the optional flag
    array as low-confidence.
    """
    a = np.asarray(amplitude, dtype=np.float64)
    g0, g1, g2 = params.bilateral_coeffs
    ratio = g0 + g1 * a + g2 * a * a
    low = ~(ratio > 1.0)
    out = np.where(low, HALF_PI, _tangent_angle(np.where(low, 2.0, ratio)))
    out = out[()] if out.ndim == 0 else out
    if return_flags:
        return out, low
    return out


def predict_sigma(amplitude, params: NoiseModelParams):
    kind = params.model_kind
    if kind is NoiseModelKind.RECIPROCAL:
        return predict_sigma_reciprocal(amplitude, params)
    if kind is NoiseModelKind.SIGMA_POINT:
        return predict_sigma_sigmapoint(amplitude, params)
    return predict_sigma_bilateral(amplitude, params)


def phase_likelihood(amplitudes, params: NoiseModelParams, s2: float):
    """Product over frequencies of ``exp(-0.5 * sigma_hat**2 / s2**2)``.

    ``amplitudes`` has the frequencies on its last axis. Any zero amplitude
    makes the pixel's likelihood exactly zero.
    """
    a = np.asarray(amplitudes, dtype=np.float64)
    sig = np.asarray(predict_sigma(a, params), dtype=np.float64)
    invalid = np.any(~(a > 0), axis=-1)
    sig = np.where(np.isfinite(sig), sig, 0.0)
    lik = np.exp(-0.5 * np.sum(sig * sig, axis=-1) / (s2 * s2))
    out = np.where(invalid, 0.0, lik)
    return out[()] if out.ndim == 0 else out


# --- inverse-domain fitting ------------------------------------------------

def inverse_amplitude(sigma_phi, params: NoiseModelParams):
    """Amplitude at which the model predicts ``sigma_phi``."""
    s = np.asarray(sigma_phi, dtype=np.float64)
    kind = params.model_kind
    if kind is NoiseModelKind.RECIPROCAL:
        return params.gamma / s
    if kind is NoiseModelKind.SIGMA_POINT:
        sz = params.sigma_z
        return np.where(s <= HALF_PI, sz / np.sin(np.minimum(s, HALF_PI)), sz * HALF_PI / s)
    g0, g1, g2 = params.bilateral_coeffs
    u = 1.0 / np.sin(np.minimum(s, HALF_PI))
    return _quadratic_root(g0, g1, g2, u)


def _quadratic_root(g0, g1, g2, u):
    # root of g2*a^2 + g1*a + g0 = u that is continuous in g2 at g2 = 0
    rhs = u - g0
    disc = np.maximum(g1 * g1 + 4.0 * g2 * rhs, 0.0)
    den = g1 + np.sqrt(disc)
    den = np.where(np.abs(den) < 1e-300, 1e-300, den)
    return 2.0 * rhs / den


def inverse_rms(amplitudes, sigma_phi, params: NoiseModelParams) -> float:
    """RMS of amplitude-domain residuals ``a_i - a_hat(sigma_i)``."""
    a = np.asarray(amplitudes, dtype=np.float64)
    r = a - inverse_amplitude(sigma_phi, params)
    return float(np.sqrt(np.mean(r * r)))


def _params_from_vector(theta, kind: NoiseModelKind) -> NoiseModelParams:
    if kind is NoiseModelKind.RECIPROCAL:
        return NoiseModelParams(gamma=abs(theta[0]) or 1e-300, model_kind=kind)
    if kind is NoiseModelKind.SIGMA_POINT:
        sz = abs(theta[0]) or 1e-300
        return NoiseModelParams(gamma=sz * HALF_PI, sigma_z=sz, model_kind=kind)
    return NoiseModelParams(bilateral_coeffs=tuple(theta), model_kind=kind)


def fit_noise_model(amplitudes, sigma_phi, kind=NoiseModelKind.SIGMA_POINT) -> NoiseModelParams:
    """Fit one of the phase-noise models by inverse-domain least squares.

    Parameters
    ----------
    amplitudes, sigma_phi : array_like, shape (n,)
        Calibration pairs, at least ten, ideally spanning a decade of
        amplitude.
    kind : NoiseModelKind or str

    Returns
    -------
    NoiseModelParams
        Parameters minimizing ``sum (a_i - a_hat(sigma_i; theta))**2``.
        The reciprocal and sigma-point fits also fill ``gamma`` and
        ``sigma_z`` consistently; the bilateral fit leaves them at their
        defaults.
    """
    kind = NoiseModelKind(kind)
    a = np.asarray(amplitudes, dtype=np.float64).ravel()
    s = np.asarray(sigma_phi, dtype=np.float64).ravel()
    if a.shape != s.shape:
        raise NoiseFitError("amplitudes and sigma_phi differ in length")
    keep = np.isfinite(a) & np.isfinite(s) & (a > 0) & (s > 0)
    a, s = a[keep], s[keep]
    if a.size < 10:
        raise NoiseFitError(f"need at least 10 valid samples, got {a.size}")
    if np.ptp(a) <= 1e-12 * np.max(a):
        raise NoiseFitError("all samples share one amplitude; model is undetermined")

    def residuals(theta):
        return a - inverse_amplitude(s, _params_from_vector(theta, kind))

    # linear least-squares seeds; each one-parameter model is linear in theta
    if kind is NoiseModelKind.RECIPROCAL:
        x = 1.0 / s
        seed = np.array([np.dot(a, x) / np.dot(x, x)])
    elif kind is NoiseModelKind.SIGMA_POINT:
        x = np.where(s <= HALF_PI, 1.0 / np.sin(np.minimum(s, HALF_PI)), HALF_PI / s)
        seed = np.array([np.dot(a, x) / np.dot(x, x)])
    else:
        u = 1.0 / np.sin(np.minimum(s, HALF_PI))
        design = np.stack([np.ones_like(a), a, a * a], axis=1)
        seed = np.linalg.lstsq(design, u, rcond=None)[0]

    starts = [seed * scale for scale in np.logspace(-1, 1, 3)]
    if kind is NoiseModelKind.BILATERAL_QUADRATIC:
        sp = fit_noise_model(a, s, NoiseModelKind.SIGMA_POINT)
        starts.append(np.array([0.0, 1.0 / sp.sigma_z, 0.0]))

    best = None
    for x0 in starts:
        try:
            res = least_squares(residuals, x0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=2000)
        except ValueError:
            continue
        cost = float(np.sum(res.fun ** 2))
        if np.isfinite(cost) and (best is None or cost < best[0]):
            best = (cost, res.x)
    if best is None:
        raise NoiseFitError("least squares failed from every start")
    return _params_from_vector(best[1], kind)


class PhaseNoiseModel(RegressorMixin, BaseEstimator):
    """Amplitude-to-phase-noise regressor.

    Parameters
    ----------
    kind : {'reciprocal', 'sigma_point', 'bilateral_quadratic'}

    Attributes
    ----------
    params_ : NoiseModelParams
        Fitted parameters.
    """

    def __init__(self, kind="sigma_point"):
        self.kind = kind

    def fit(self, X, y):
        a = check_amplitudes(X)
        self.params_ = fit_noise_model(a, y, self.kind)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return predict_sigma(check_amplitudes(X), self.params_)

    def inverse_rms(self, X, y) -> float:
        check_is_fitted(self, "params_")
        return inverse_rms(check_amplitudes(X), y, self.params_)


# --- calibration statistics ------------------------------------------------

def circular_std(phases, axis=0):
    """``sqrt(-2 ln R)`` where ``R`` is the mean resultant length."""
    R = np.abs(np.mean(np.exp(1j * np.asarray(phases)), axis=axis))
    return np.sqrt(-2.0 * np.log(np.clip(R, 1e-300, 1.0)))


def calibration_samples(z_stack, n_bins: int = 64, min_count: int = 20):
    """Binned ``(amplitude, sigma_phi)`` pairs from repeated frames.

    Parameters
    ----------
    z_stack : array_like of complex, shape (n_frames, ...)
        Repeated measurements of a static scene; every trailing element is
        treated as an independent pixel/frequency sample.
    n_bins : int
        Log-spaced amplitude bins.
    min_count : int
        Bins with fewer samples are dropped.

    Returns
    -------
    amplitude, sigma_phi : ndarray
        Per-bin mean amplitude and RMS circular phase deviation.
    """
    z = np.asarray(z_stack)
    if z.ndim < 2 or z.shape[0] < 2:
        raise ValueError("need at least two repeated frames")
    z = z.reshape(z.shape[0], -1)
    amp = np.abs(z).mean(axis=0)
    sig = circular_std(np.angle(z), axis=0)
    ok = amp > 0
    amp, sig = amp[ok], sig[ok]
    if amp.size == 0:
        return np.empty(0), np.empty(0)
    edges = np.logspace(np.log10(amp.min()), np.log10(amp.max()), n_bins + 1)
    idx = np.clip(np.searchsorted(edges, amp, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    a_sum = np.bincount(idx, weights=amp, minlength=n_bins)
    s2_sum = np.bincount(idx, weights=sig * sig, minlength=n_bins)
    keep = counts >= min_count
    return a_sum[keep] / counts[keep], np.sqrt(s2_sum[keep] / counts[keep])


def monte_carlo_phase_std(amplitude: float, sigma_z: float, n_trials: int, rng) -> float:
    """Circular std of ``arg(a + n)`` with per-component Gaussian ``n``."""
    noise = rng.normal(scale=sigma_z, size=(2, n_trials))
    return float(circular_std(np.arctan2(noise[1], amplitude + noise[0])))


# --- bilateral prefilter on z ----------------------------------------------

def bilateral_filter_z(frame: PhaseFrame, spatial_sigma: float = 1.0, range_sigma: float = 1.0) -> PhaseFrame:
    """3x3 bilateral filter applied independently to each frequency's z.

    Weights are ``exp(-|dx|^2 / 2 spatial_sigma^2) * exp(-|z_c - z_n|^2 /
    2 range_sigma^2)``. Neighbors outside the image or with zero amplitude
    are skipped; zero-amplitude centers are left untouched.
    """
    if spatial_sigma <= 0 or range_sigma <= 0:
        raise ValueError("filter sigmas must be positive")
    z = frame.z
    H, W, _ = z.shape
    valid = np.abs(z) > 0
    num = np.zeros_like(z)
    den = np.zeros(z.shape, dtype=np.float64)
    zp = np.pad(z, ((1, 1), (1, 1), (0, 0)))
    vp = np.pad(valid, ((1, 1), (1, 1), (0, 0)))
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            zn = zp[1 + dy:1 + dy + H, 1 + dx:1 + dx + W]
            vn = vp[1 + dy:1 + dy + H, 1 + dx:1 + dx + W]
            diff = np.abs(z - zn)
            w = np.exp(-(dx * dx + dy * dy) / (2.0 * spatial_sigma ** 2)) * np.exp(-diff * diff / (2.0 * range_sigma ** 2))
            w = np.where(vn, w, 0.0)
            num += w * zn
            den += w
    out = np.where(valid, num / np.where(den > 0, den, 1.0), z)
    return PhaseFrame(out)


class BilateralZFilter(BaseEstimator):
    """Transformer wrapper around :func:`bilateral_filter_z`."""

    def __init__(self, spatial_sigma=1.0, range_sigma=1.0):
        self.spatial_sigma = spatial_sigma
        self.range_sigma = range_sigma

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        frame = X if isinstance(X, PhaseFrame) else PhaseFrame(X)
        return bilateral_filter_z(frame, self.spatial_sigma, self.range_sigma)

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)


def with_kind(params: NoiseModelParams, kind) -> NoiseModelParams:
    return replace(params, model_kind=NoiseModelKind(kind))
