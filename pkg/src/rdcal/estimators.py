"""scikit-learn style wrappers around the acquisition model, BPDN recovery and MBC."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_divides, check_positive_int, check_signals, check_vector
from .calibrate import CalibrationInput, calibration_system, mbc_calibrate
from .discretize import DEFAULT_LENGTHS, accumulate_and_dump_response, discrete_impulse_response
from .filters import lc_transfer_function, synthesize_nominal
from .rd import FourierDictionary, RdSystem, apply_phi, generate_chipping, measurement_operator
from .solvers import BpdnConfig, solve_bpdn

__all__ = ["RandomDemodulator", "SparseRecovery", "ModelBasedCalibrator"]


class RandomDemodulator(BaseEstimator, TransformerMixin):
    """Maps grid signals (rows of ``X``) to their sub-Nyquist measurements.

    Parameters
    ----------
    n_grid, n_measurements : int
        ``N`` and ``M``; ``N`` must be a multiple of ``M``.
    filter : {"butterworth", "chebyshev", "accumulate-and-dump"}
    impulse_length : int, optional
        Taps kept from the discretized filter.  Defaults per filter.
    grid_rate_hz : float
    chipping_seed : int
    impulse_response : array-like, optional
        Use these taps instead of synthesizing ``filter``.
    """

    def __init__(
        self,
        n_grid=12600,
        n_measurements=1050,
        filter="butterworth",
        impulse_length=None,
        grid_rate_hz=12600.0,
        chipping_seed=0,
        impulse_response=None,
    ):
        self.n_grid = n_grid
        self.n_measurements = n_measurements
        self.filter = filter
        self.impulse_length = impulse_length
        self.grid_rate_hz = grid_rate_hz
        self.chipping_seed = chipping_seed
        self.impulse_response = impulse_response

    def fit(self, X=None, y=None):
        R = check_divides(self.n_grid, self.n_measurements)
        if self.impulse_response is not None:
            h = check_vector(self.impulse_response, name="impulse_response")
        elif self.filter == "accumulate-and-dump":
            h = accumulate_and_dump_response(R, self.grid_rate_hz).samples
        elif self.filter in DEFAULT_LENGTHS:
            L = self.impulse_length or DEFAULT_LENGTHS[self.filter]
            L = check_positive_int(L, "impulse_length")
            tf = lc_transfer_function(synthesize_nominal(self.filter))
            h = discrete_impulse_response(tf, self.grid_rate_hz, length=L).samples
        else:
            raise ValueError(f"unknown filter {self.filter!r}")
        chip = generate_chipping(self.n_grid, self.chipping_seed)
        self.system_ = RdSystem(chip, h, self.n_grid, self.n_measurements)
        self.n_features_in_ = self.n_grid
        return self

    def transform(self, X):
        check_is_fitted(self, "system_")
        X = check_signals(X, self.system_.N)
        return apply_phi(self.system_, X.T).T

    def operator(self, dictionary: bool = True):
        """The measurement operator, optionally composed with the Fourier dictionary."""
        check_is_fitted(self, "system_")
        return measurement_operator(self.system_, FourierDictionary(self.system_.N) if dictionary else None)


class SparseRecovery(BaseEstimator, TransformerMixin):
    """BPDN recovery of frequency-sparse grid signals from measurements.

    ``transform`` takes measurement rows and returns real grid signals.
    """

    def __init__(self, system=None, zeta_relative=1e-6, max_iterations=2500, optimality_tolerance=1e-4):
        self.system = system
        self.zeta_relative = zeta_relative
        self.max_iterations = max_iterations
        self.optimality_tolerance = optimality_tolerance

    def fit(self, X=None, y=None):
        system = self.system.system_ if isinstance(self.system, RandomDemodulator) else self.system
        if not isinstance(system, RdSystem):
            raise TypeError("system must be an RdSystem or a fitted RandomDemodulator")
        self.system_ = system
        self.dictionary_ = FourierDictionary(system.N)
        self.operator_ = measurement_operator(system, self.dictionary_)
        self.config_ = BpdnConfig(
            relative_zeta=self.zeta_relative,
            max_iterations=self.max_iterations,
            optimality_tolerance=self.optimality_tolerance,
        )
        return self

    def transform(self, Y):
        check_is_fitted(self, "operator_")
        Y = check_signals(Y, self.system_.M, name="Y")
        out = np.empty((Y.shape[0], self.system_.N))
        self.results_ = []
        for i, y in enumerate(Y):
            res = solve_bpdn(self.operator_, y, self.config_)
            self.results_.append(res)
            out[i] = self.dictionary_.synthesize(res.x).real
        return out


class ModelBasedCalibrator(BaseEstimator):
    """Fit the filter error from one known-signal record.

    ``fit(x_known, y_measured)`` takes the ``M_q * R`` grid samples of the
    known signal and the ``M_q`` measured samples.  ``predict`` then
    simulates measurements with the calibrated model.
    """

    def __init__(self, system=None, regularizer=None):
        self.system = system
        self.regularizer = regularizer

    def fit(self, X, y):
        system = self.system.system_ if isinstance(self.system, RandomDemodulator) else self.system
        if not isinstance(system, RdSystem):
            raise TypeError("system must be an RdSystem or a fitted RandomDemodulator")
        x = check_vector(X, name="X")
        y = check_vector(y, name="y")
        if x.size != y.size * system.R:
            raise ValueError(f"known signal has {x.size} samples, expected {y.size * system.R}")
        model_q = calibration_system(system, y.size)
        g = None if self.regularizer is None else np.asarray(self.regularizer, dtype=float)
        self.result_ = mbc_calibrate(CalibrationInput(x, model_q, y), g=g)
        self.e_hat_ = self.result_.e_hat
        self.h_ring_ = self.result_.h_ring
        self.branch_ = self.result_.branch
        self.calibrated_system_ = system.with_h(self.h_ring_)
        return self

    def predict(self, X):
        check_is_fitted(self, "calibrated_system_")
        X = check_signals(X, self.calibrated_system_.N)
        return apply_phi(self.calibrated_system_, X.T).T
