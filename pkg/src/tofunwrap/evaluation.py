"""Inlier/outlier scoring against ground truth and confidence-threshold sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tofunwrap.kde import DepthFrame
from tofunwrap.simulator import Scene

DEFAULT_INLIER_TOL = 0.30


@dataclass(frozen=True)
class ThresholdRecord:
    conf_threshold: float
    inlier_rate: float
    outlier_rate: float
    valid_count: int


@dataclass
class EvalReport:
    """Inlier and outlier rates per confidence threshold.

    Rates are normalized by ``gt_valid_count``; ``valid_count`` counts the
    decoded pixels that also have ground truth, so
    ``inlier_rate + outlier_rate == valid_count / gt_valid_count``.
    """

    records: list[ThresholdRecord]
    gt_valid_count: int
    method: str = ""
    inlier_std: np.ndarray | None = field(default=None, repr=False)
    outlier_std: np.ndarray | None = field(default=None, repr=False)

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([r.conf_threshold for r in self.records])

    @property
    def inlier_rates(self) -> np.ndarray:
        return np.array([r.inlier_rate for r in self.records])

    @property
    def outlier_rates(self) -> np.ndarray:
        return np.array([r.outlier_rate for r in self.records])

    @property
    def valid_counts(self) -> np.ndarray:
        return np.array([r.valid_count for r in self.records])

    def inlier_at_outlier(self, target):
        return inlier_at_outlier(self, target)


def score_arrays(distance, truth, inlier_tol: float = DEFAULT_INLIER_TOL) -> tuple[int, int]:
    """Count inliers and outliers; NaN marks invalid pixels in either array."""
    d = np.asarray(distance, dtype=np.float64)
    gt = np.asarray(truth, dtype=np.float64)
    if d.shape != gt.shape:
        raise ValueError(f"shape mismatch: decoded {d.shape} vs truth {gt.shape}")
    counted = np.isfinite(d) & np.isfinite(gt)
    inl = counted & (np.abs(d - gt) < inlier_tol)
    return int(np.count_nonzero(inl)), int(np.count_nonzero(counted & ~inl))


def score_frame(decoded: DepthFrame, truth: Scene, inlier_tol: float = DEFAULT_INLIER_TOL) -> tuple[int, int]:
    """``(inliers, outliers)`` among decoded-valid pixels that have ground truth."""
    if decoded.shape != truth.distance.shape:
        raise ValueError(f"shape mismatch: decoded {decoded.shape} vs truth {truth.distance.shape}")
    d = np.where(decoded.valid, decoded.distance, np.nan)
    return score_arrays(d, truth.truth(), inlier_tol)


def sweep_thresholds(decoded: DepthFrame, truth: Scene, thresholds, inlier_tol: float = DEFAULT_INLIER_TOL,
                     method: str = "") -> EvalReport:
    """Score ``decoded`` after suppressing pixels below each threshold.

    ``decoded`` should be the unthresholded decoder output (confidence
    threshold 0).
    """
    thr = np.asarray(thresholds, dtype=np.float64)
    if thr.ndim != 1 or np.any(np.diff(thr) < 0):
        raise ValueError("thresholds must be a 1-d ascending sequence")
    if decoded.shape != truth.distance.shape:
        raise ValueError(f"shape mismatch: decoded {decoded.shape} vs truth {truth.distance.shape}")
    gt = truth.truth()
    has_gt = np.isfinite(gt)
    n_gt = int(np.count_nonzero(has_gt))
    base = decoded.valid & has_gt & np.isfinite(decoded.distance)
    is_in = base & (np.abs(np.where(base, decoded.distance, 0.0) - np.where(has_gt, gt, 0.0)) < inlier_tol)
    conf = decoded.confidence
    records = []
    for t in thr:
        keep = base & (conf >= t)
        n_in = int(np.count_nonzero(keep & is_in))
        n_valid = int(np.count_nonzero(keep))
        denom = max(n_gt, 1)
        records.append(ThresholdRecord(float(t), n_in / denom, (n_valid - n_in) / denom, n_valid))
    return EvalReport(records, n_gt, method)


def average_reports(reports: list[EvalReport]) -> EvalReport:
    """Mean rates over repeated frames; stds are kept on the result."""
    if not reports:
        raise ValueError("no reports to average")
    thr = reports[0].thresholds
    for r in reports[1:]:
        if not np.array_equal(r.thresholds, thr):
            raise ValueError("reports use different thresholds")
    inl = np.stack([r.inlier_rates for r in reports])
    out = np.stack([r.outlier_rates for r in reports])
    cnt = np.stack([r.valid_counts for r in reports])
    records = [ThresholdRecord(float(t), float(i), float(o), int(round(c)))
               for t, i, o, c in zip(thr, inl.mean(0), out.mean(0), cnt.mean(0))]
    return EvalReport(records, reports[0].gt_valid_count, reports[0].method, inl.std(0), out.std(0))


def inlier_at_outlier(report: EvalReport, target):
    """Inlier rate at a given outlier rate, linearly interpolated along the curve.

    Beyond the largest outlier rate a method reaches, its curve is flat at
    its unthresholded inlier rate.
    """
    o = report.outlier_rates
    i = report.inlier_rates
    # upper envelope: best inlier rate for each distinct outlier rate
    uo = np.unique(o)
    ui = np.array([i[o == v].max() for v in uo])
    return np.interp(target, uo, ui)


def default_thresholds(n: int = 501) -> np.ndarray:
    """Ascending thresholds from 0 to just above 1 (which suppresses everything).

    Linear spacing plus a log-spaced tail towards zero, where the
    confidences of weak pixels concentrate.
    """
    grid = np.union1d(np.linspace(0.0, 1.0, n), np.logspace(-6, 0, n // 2))
    return np.append(grid, 1.0 + 1e-9)
