"""Spatial kernel-density hypothesis selection and the frame decoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from tofunwrap import _kernels
from tofunwrap._validation import as_phase_frame, check_positive
from tofunwrap.core import FrequencyConfig, PhaseFrame, pseudo_to_meters
from tofunwrap.noise import NoiseModelParams, bilateral_filter_z, phase_likelihood
from tofunwrap.unwrap import (
    Hypothesis,
    all_unwrapping_vectors,
    constraint_residuals,
    cost_J,
    fuse_phases,
    pair_indices,
    pair_variances,
    unwrap_crt,
    unwrap_likelihood,
)

METHODS = ("kde", "crt", "argmin-j")


class UnknownMethodError(ValueError):
    pass


@dataclass(frozen=True)
class KdeParams:
    r: int = 5
    h: float = 1.0
    s1: float = 1.0
    s2: float = 2.0
    p_min: float = 0.5
    conf_threshold: float = 0.0
    hypothesis_count: int = 2

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError("r must be an integer >= 1")
        if int(self.hypothesis_count) != self.hypothesis_count or self.hypothesis_count < 1:
            raise ValueError("hypothesis_count must be an integer >= 1")
        for name in ("h", "s1", "s2", "p_min"):
            check_positive(name, getattr(self, name))
        check_positive("conf_threshold", self.conf_threshold, strict=False)
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "hypothesis_count", int(self.hypothesis_count))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KdeParams":
        return cls(**d)


def spatial_weights(r: int) -> np.ndarray:
    """Gaussian table over the ``(2r+1, 2r+1)`` window, sigma ``r/2``, summing to 1."""
    ax = np.arange(-r, r + 1, dtype=np.float64)
    sigma = r / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


@dataclass(frozen=True)
class HypothesisField:
    """Pass-one output: the best ``|I|`` hypotheses of every pixel.

    Arrays ``t``, ``cost`` and ``unwrap_lik`` have shape ``(H, W, |I|)``
    with the best hypothesis first; ``vectors`` has shape ``(H, W, |I|, M)``.
    Invalid pixels hold NaN (and -1 in ``vectors``).
    """

    t: np.ndarray
    cost: np.ndarray
    unwrap_lik: np.ndarray
    phase_lik: np.ndarray
    vectors: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    @property
    def weights(self) -> np.ndarray:
        """Per-hypothesis sample weight without the spatial factor."""
        w = self.unwrap_lik * self.phase_lik[..., None]
        return np.where(self.valid[..., None], w, 0.0)

    def hypotheses(self, y: int, x: int) -> list[Hypothesis]:
        if not self.valid[y, x]:
            return []
        pl = float(self.phase_lik[y, x])
        return [Hypothesis(tuple(int(v) for v in self.vectors[y, x, i]), float(self.t[y, x, i]),
                           float(self.cost[y, x, i]), float(self.unwrap_lik[y, x, i]),
                           float(self.unwrap_lik[y, x, i] * pl))
                for i in range(self.t.shape[-1])]


@dataclass(frozen=True)
class DepthFrame:
    """Radial distance (m), confidence and validity per pixel.

    ``distance`` is NaN wherever ``valid`` is false.
    """

    distance: np.ndarray
    confidence: np.ndarray
    valid: np.ndarray
    candidates: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    def thresholded(self, conf_threshold: float) -> "DepthFrame":
        """Copy with pixels below ``conf_threshold`` marked invalid."""
        valid = self.valid & (self.confidence >= conf_threshold)
        return DepthFrame(np.where(valid, self.distance, np.nan), self.confidence, valid, self.candidates)


def build_hypothesis_field(frame: PhaseFrame, config: FrequencyConfig, noise_params: NoiseModelParams,
                           params: KdeParams) -> HypothesisField:
    """Pass one: score every unwrapping vector per pixel, keep the best ``|I|``."""
    phi = np.ascontiguousarray(frame.phase)
    amp = frame.amplitude
    pl = phase_likelihood(amp, noise_params, params.s2)
    valid = np.ascontiguousarray(frame.valid)
    vecs = all_unwrapping_vectors(config)
    n_keep = min(params.hypothesis_count, vecs.shape[0])
    pairs = pair_indices(config.n_frequencies)
    H, W = valid.shape
    t = np.empty((H, W, n_keep))
    cost = np.empty((H, W, n_keep))
    idx = np.empty((H, W, n_keep), dtype=np.int64)
    _kernels.hypotheses_pass(
        phi, valid, np.asarray(config.k_coeffs, dtype=np.float64), vecs,
        np.array([p[0] for p in pairs], dtype=np.int64), np.array([p[1] for p in pairs], dtype=np.int64),
        1.0 / pair_variances(config), n_keep, t, cost, idx,
    )
    vectors = np.where(idx[..., None] >= 0, vecs[np.maximum(idx, 0)], -1)
    lu = np.where(valid[..., None], unwrap_likelihood(cost, params.s1), np.nan)
    return HypothesisField(t, cost, lu, np.where(valid, pl, 0.0), vectors, valid)


def kde_evaluate(field: HypothesisField, x: tuple[int, int], t_i: float, params: KdeParams) -> float:
    """Kernel density of pseudo-distance ``t_i`` at pixel ``x = (row, col)``.

    Straight summation over the square window; the compiled decoder does the
    same arithmetic for all pixels at once.
    """
    num, den = _kde_sums(field, x, t_i, params)
    return num / den if den > 0 else 0.0


def _kde_sums(field: HypothesisField, x, t_i, params: KdeParams):
    y0, x0 = x
    r = params.r
    g = spatial_weights(r)
    w_all = field.weights
    H, W = field.shape
    num = den = 0.0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            yy, xx = y0 + dy, x0 + dx
            if not (0 <= yy < H and 0 <= xx < W) or not field.valid[yy, xx]:
                continue
            for j in range(field.t.shape[-1]):
                w = g[dy + r, dx + r] * w_all[yy, xx, j]
                den += w
                num += w * np.exp(-(t_i - field.t[yy, xx, j]) ** 2 / (2.0 * params.h ** 2))
    return num, den


def select_hypothesis(field: HypothesisField, x: tuple[int, int], params: KdeParams):
    """Return ``(i_star, confidence)`` for one pixel, or ``(-1, 0.0)`` if invalid.

    Ties in density go to the lower-cost (earlier) hypothesis.
    """
    y0, x0 = x
    if not field.valid[y0, x0]:
        return -1, 0.0
    best, best_num, den = 0, -np.inf, 0.0
    for i in range(field.t.shape[-1]):
        num, den = _kde_sums(field, x, field.t[y0, x0, i], params)
        if num > best_num:
            best, best_num = i, num
    return best, best_num / max(params.p_min, den)


def select_pass(field: HypothesisField, params: KdeParams):
    """Pass two over the whole field: ``(selected index, confidence, density)``."""
    H, W = field.shape
    sel = np.empty((H, W), dtype=np.int64)
    conf = np.empty((H, W))
    dens = np.empty((H, W))
    _kernels.kde_select_pass(
        np.ascontiguousarray(np.where(field.valid[..., None], field.t, 0.0)),
        np.ascontiguousarray(field.weights), np.ascontiguousarray(field.valid),
        spatial_weights(params.r), params.r, 1.0 / (2.0 * params.h ** 2), params.p_min, sel, conf, dens,
    )
    return sel, conf, dens


def decode_frame(phase_frame: PhaseFrame, config: FrequencyConfig, noise_params: NoiseModelParams,
                 kde_params: KdeParams, method: str = "kde", prefilter: tuple[float, float] | None = None,
                 crt_order=None, return_field: bool = False):
    """Decode a phase frame into radial distances.

    Parameters
    ----------
    method : {'kde', 'crt', 'argmin-j'}
        ``kde`` selects among the pixel's ``|I|`` lowest-cost hypotheses by
        spatial kernel density; ``argmin-j`` keeps the lowest-cost vector;
        ``crt`` uses sequential CRT. The two baselines report the pixel's
        own sample weight (unwrap times phase likelihood) as confidence.
    prefilter : (spatial_sigma, range_sigma), optional
        Apply the 3x3 bilateral filter to ``z`` first.
    return_field : bool
        Also return the pass-one :class:`HypothesisField`.
    """
    if method not in METHODS:
        raise UnknownMethodError(f"unknown method {method!r}; expected one of {METHODS}")
    if phase_frame.z.shape[-1] != config.n_frequencies:
        raise ValueError("phase frame and frequency config disagree on the number of frequencies")
    if prefilter is not None:
        phase_frame = bilateral_filter_z(phase_frame, *prefilter)

    if method == "kde":
        field = build_hypothesis_field(phase_frame, config, noise_params, kde_params)
        sel, conf, _ = select_pass(field, kde_params)
        t_sel = np.take_along_axis(field.t, np.maximum(sel, 0)[..., None], axis=-1)[..., 0]
    else:
        one = KdeParams(**{**kde_params.to_dict(), "hypothesis_count": 1})
        field = build_hypothesis_field(phase_frame, config, noise_params, one)
        if method == "crt":
            n = unwrap_crt(phase_frame.phase, config, order=crt_order)
            J = cost_J(constraint_residuals(phase_frame.phase, n, config), pair_variances(config))
            t_crt = fuse_phases(phase_frame.phase, n, config)
            valid = field.valid
            field = HypothesisField(
                np.where(valid, t_crt, np.nan)[..., None], np.where(valid, J, np.nan)[..., None],
                np.where(valid, unwrap_likelihood(J, kde_params.s1), np.nan)[..., None],
                field.phase_lik, np.where(valid[..., None], n, -1)[..., None, :], valid,
            )
        t_sel = field.t[..., 0]
        conf = np.where(field.valid, field.weights[..., 0], 0.0)

    depth = DepthFrame(
        np.where(field.valid, pseudo_to_meters(t_sel, config), np.nan),
        conf, field.valid.copy(), pseudo_to_meters(field.t, config),
    )
    if kde_params.conf_threshold > 0:
        depth = depth.thresholded(kde_params.conf_threshold)
    if return_field:
        return depth, field
    return depth


class DepthDecoder(TransformerMixin, BaseEstimator):
    """Multi-frequency ToF depth decoder with an estimator interface.

    ``fit`` only validates and freezes the configuration; decoding is
    stateless per frame. Inputs to ``predict``/``transform`` may be a
    :class:`PhaseFrame`, a :class:`VoltageFrame`, a complex ``(H, W, M)``
    array or a real ``(H, W, M, N)`` voltage array.

    Parameters
    ----------
    method : {'kde', 'crt', 'argmin-j'}
    r, n_hypotheses, h, s1, s2, p_min, conf_threshold
        Selection parameters, see :class:`KdeParams`.
    config : FrequencyConfig, optional
        Defaults to the Kinect v2 frequency triple.
    noise_params : NoiseModelParams, optional
        Phase-noise model for the phase likelihood.
    prefilter : (float, float), optional
        Bilateral ``(spatial_sigma, range_sigma)`` applied to ``z``.
    crt_order : sequence of int, optional
        Frequency order for the CRT baseline.

    Attributes
    ----------
    config_, noise_params_, kde_params_
        Validated settings used by ``predict``.
    """

    def __init__(self, method="kde", r=5, n_hypotheses=2, h=1.0, s1=1.0, s2=2.0, p_min=0.5,
                 conf_threshold=0.0, config=None, noise_params=None, prefilter=None, crt_order=None):
        self.method = method
        self.r = r
        self.n_hypotheses = n_hypotheses
        self.h = h
        self.s1 = s1
        self.s2 = s2
        self.p_min = p_min
        self.conf_threshold = conf_threshold
        self.config = config
        self.noise_params = noise_params
        self.prefilter = prefilter
        self.crt_order = crt_order

    def fit(self, X=None, y=None):
        if self.method not in METHODS:
            raise UnknownMethodError(f"unknown method {self.method!r}; expected one of {METHODS}")
        self.config_ = self.config if self.config is not None else FrequencyConfig.kinect_v2()
        self.noise_params_ = self.noise_params if self.noise_params is not None else NoiseModelParams()
        self.kde_params_ = KdeParams(r=self.r, h=self.h, s1=self.s1, s2=self.s2, p_min=self.p_min,
                                     conf_threshold=self.conf_threshold, hypothesis_count=self.n_hypotheses)
        if X is not None:
            as_phase_frame(X, self.config_)
        return self

    def decode(self, X) -> DepthFrame:
        check_is_fitted(self, "kde_params_")
        frame = as_phase_frame(X, self.config_)
        return decode_frame(frame, self.config_, self.noise_params_, self.kde_params_, self.method,
                            prefilter=self.prefilter, crt_order=self.crt_order)

    def predict(self, X) -> np.ndarray:
        """Radial distance per pixel, NaN where suppressed."""
        return self.decode(X).distance

    def transform(self, X) -> np.ndarray:
        """Stack of ``(distance, confidence)`` with shape ``(H, W, 2)``."""
        d = self.decode(X)
        return np.stack([d.distance, d.confidence], axis=-1)

    def score(self, X, y, inlier_tol=0.30) -> float:
        """Inlier rate against ground-truth distances ``y`` (NaN = no truth) or a Scene."""
        from tofunwrap.evaluation import score_arrays

        if hasattr(y, "valid") and hasattr(y, "distance"):
            y = np.where(y.valid, y.distance, np.nan)
        gt = np.asarray(y, dtype=np.float64)
        inl, _ = score_arrays(self.predict(X), gt, inlier_tol)
        n_gt = int(np.count_nonzero(np.isfinite(gt)))
        return inl / n_gt if n_gt else 0.0
