import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rdcal.estimators import ModelBasedCalibrator, RandomDemodulator, SparseRecovery
from rdcal.rd import apply_phi
from rdcal.calibrate import calibration_system
from rdcal.rd import generate_multitone


def small_rd(**kw):
    params = dict(n_grid=4200, n_measurements=350, grid_rate_hz=4200.0, chipping_seed=3)
    params.update(kw)
    return RandomDemodulator(**params).fit()


def test_params_and_clone():
    rd = RandomDemodulator(n_grid=4200, n_measurements=350)
    assert rd.get_params()["n_measurements"] == 350
    rd.set_params(filter="chebyshev")
    assert clone(rd).filter == "chebyshev"


def test_transform_matches_forward_model():
    rd = small_rd()
    X = np.random.default_rng(0).standard_normal((3, 4200))
    Y = rd.transform(X)
    assert Y.shape == (3, 350)
    assert np.allclose(Y[1], apply_phi(rd.system_, X[1]))
    assert rd.transform(X[0]).shape == (1, 350)
    assert rd.system_.L == 108


def test_transform_validation():
    with pytest.raises(NotFittedError):
        RandomDemodulator().transform(np.ones((1, 12600)))
    rd = small_rd()
    with pytest.raises(ValueError):
        rd.transform(np.ones((1, 100)))
    with pytest.raises(ValueError):
        RandomDemodulator(n_grid=100, n_measurements=7).fit()
    with pytest.raises(ValueError):
        RandomDemodulator(filter="bessel").fit()


def test_filter_variants():
    assert small_rd(filter="accumulate-and-dump").system_.L == 12
    assert small_rd(filter="chebyshev").system_.L == 228
    assert small_rd(impulse_response=[1.0, 0.5]).system_.L == 2


def test_pipeline_round_trip():
    rd = small_rd()
    x = generate_multitone(5, 4, grid_rate=4200.0).samples
    y = rd.transform(x)
    rec = SparseRecovery(system=rd).fit().transform(y)
    err = np.linalg.norm(rec[0] - x) / np.linalg.norm(x)
    assert err < 1e-4
    assert rd.operator().shape == (350, 4200)


def test_sparse_recovery_requires_system():
    with pytest.raises(TypeError):
        SparseRecovery(system="nope").fit()


def test_calibrator_recovers_planted_error():
    rd = small_rd()
    rng = np.random.default_rng(1)
    e = 1e-4 * rng.standard_normal(108)
    actual = calibration_system(rd.system_, 189, rd.system_.h.samples + e)
    x = generate_multitone(10, 2, grid_rate=4200.0, n_samples=actual.N).samples
    cal = ModelBasedCalibrator(system=rd).fit(x, apply_phi(actual, x))
    assert cal.branch_ == "least-squares"
    assert np.allclose(cal.h_ring_.samples, rd.system_.h.samples + e, atol=1e-10)
    X = rng.standard_normal((2, 4200))
    assert np.allclose(cal.predict(X), apply_phi(rd.system_.with_h(cal.h_ring_), X.T).T)
    with pytest.raises(ValueError):
        ModelBasedCalibrator(system=rd).fit(x[:-1], apply_phi(actual, x))
