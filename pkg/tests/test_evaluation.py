import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tofunwrap.evaluation import (
    EvalReport,
    ThresholdRecord,
    average_reports,
    default_thresholds,
    inlier_at_outlier,
    score_arrays,
    score_frame,
    sweep_thresholds,
)
from tofunwrap.kde import DepthFrame, KdeParams, decode_frame
from tofunwrap.noise import NoiseModelParams
from tofunwrap.simulator import Scene, SimParams, make_scene, simulate_phase_frame


def frame(d, conf=None, valid=None):
    d = np.asarray(d, dtype=float)
    valid = np.isfinite(d) if valid is None else np.asarray(valid)
    conf = np.ones_like(d) if conf is None else np.asarray(conf, dtype=float)
    return DepthFrame(np.where(valid, d, np.nan), conf, valid)


def truth(d, valid=None):
    d = np.asarray(d, dtype=float)
    return Scene(d, np.ones_like(d), np.ones_like(d, dtype=bool) if valid is None else np.asarray(valid))


def test_tolerance_boundary():
    gt = truth([[5.0, 5.0]])
    assert score_frame(frame([[5.29, 5.31]]), gt) == (1, 1)
    assert score_frame(frame([[4.71, 4.69]]), gt) == (1, 1)


def test_all_suppressed():
    assert score_frame(frame([[np.nan, np.nan]]), truth([[1.0, 2.0]])) == (0, 0)


def test_gt_invalid_ignored():
    gt = truth([[1.0, 2.0, 3.0]], valid=[[True, False, True]])
    assert score_frame(frame([[1.0, 9.0, 9.0]]), gt) == (1, 1)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        score_frame(frame([[1.0]]), truth([[1.0, 2.0]]))
    with pytest.raises(ValueError):
        score_arrays(np.ones(3), np.ones(4))


def test_noiseless_decode_scores_perfect(kinect):
    s = make_scene("StaircasePlanes", 60, 4, (0.5, 18.5))
    pf = simulate_phase_frame(s, kinect, SimParams())
    d = decode_frame(pf, kinect, NoiseModelParams(sigma_z=0.01), KdeParams())
    assert score_frame(d, s) == (s.valid.sum(), 0)


def test_sweep_examples():
    gt = truth(np.full((2, 3), 4.0))
    d = frame([[4.0, 4.1, 9.0], [4.0, np.nan, 1.0]], conf=[[0.9, 0.2, 0.5], [0.1, 0.0, 0.95]])
    rep = sweep_thresholds(d, gt, [0.0, 0.3, 0.6, 1.0 + 1e-9])
    inl, out = score_frame(d, gt)
    assert rep.records[0].inlier_rate == inl / 6 and rep.records[0].outlier_rate == out / 6
    assert rep.records[1] == ThresholdRecord(0.3, 1 / 6, 2 / 6, 3)
    assert rep.records[2] == ThresholdRecord(0.6, 1 / 6, 1 / 6, 2)
    assert rep.records[-1].inlier_rate == 0 and rep.records[-1].outlier_rate == 0
    with pytest.raises(ValueError):
        sweep_thresholds(d, gt, [0.5, 0.1])


sweep_inputs = st.integers(1, 40).flatmap(lambda n: st.tuples(
    hnp.arrays(float, n, elements=st.floats(0, 20)),
    hnp.arrays(float, n, elements=st.floats(0, 20)),
    hnp.arrays(float, n, elements=st.floats(0, 1)),
    hnp.arrays(bool, n),
    hnp.arrays(bool, n),
))


@given(sweep_inputs)
def test_sweep_monotone_and_accounting(arrs):
    d, gt, conf, dv, gv = arrs
    rep = sweep_thresholds(frame(d[None], conf[None], dv[None]), truth(gt[None] + 0.1, gv[None]),
                           default_thresholds(41))
    for seq in (rep.inlier_rates, rep.outlier_rates, rep.valid_counts):
        assert np.all(np.diff(seq) <= 0)
    n_gt = max(rep.gt_valid_count, 1)
    assert np.allclose(rep.inlier_rates + rep.outlier_rates, rep.valid_counts / n_gt)
    assert np.all((rep.inlier_rates >= 0) & (rep.inlier_rates <= 1))
    assert rep.valid_counts[-1] == 0


@given(sweep_inputs, st.randoms())
def test_score_permutation_invariant(arrs, rnd):
    d, gt, _, dv, gv = arrs
    perm = list(range(d.size))
    rnd.shuffle(perm)
    a = score_frame(frame(d[None], valid=dv[None]), truth(gt[None] + 0.1, gv[None]))
    b = score_frame(frame(d[perm][None], valid=dv[perm][None]), truth(gt[perm][None] + 0.1, gv[perm][None]))
    assert a == b


def test_inlier_at_outlier_interpolation():
    recs = [ThresholdRecord(0.0, 0.8, 0.10, 90), ThresholdRecord(0.5, 0.6, 0.02, 62),
            ThresholdRecord(0.9, 0.4, 0.0, 40)]
    rep = EvalReport(recs, 100)
    assert inlier_at_outlier(rep, 0.01) == pytest.approx(0.5)
    assert inlier_at_outlier(rep, 0.06) == pytest.approx(0.7)
    assert inlier_at_outlier(rep, 0.5) == pytest.approx(0.8)
    assert np.allclose(rep.inlier_at_outlier([0.0, 0.02]), [0.4, 0.6])


def test_average_reports():
    a = EvalReport([ThresholdRecord(0.0, 0.5, 0.1, 60)], 100)
    b = EvalReport([ThresholdRecord(0.0, 0.7, 0.3, 100)], 100)
    m = average_reports([a, b])
    assert m.records[0].inlier_rate == pytest.approx(0.6)
    assert m.inlier_std[0] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        average_reports([a, EvalReport([ThresholdRecord(0.5, 0.7, 0.3, 100)], 100)])
    with pytest.raises(ValueError):
        average_reports([])


def test_default_thresholds():
    t = default_thresholds()
    assert t[0] == 0.0 and t[-1] > 1.0
    assert np.all(np.diff(t) > 0)
