"""Random-demodulator simulation with model-based filter calibration."""
from importlib.metadata import PackageNotFoundError, version

from .calibrate import (
    CalibrationInput,
    CalibrationResult,
    build_d_matrix,
    calibration_system,
    dftti_calibrate,
    mbc_calibrate,
)
from .discretize import (
    ImpulseResponse,
    bilinear_transform,
    discrete_impulse_response,
    impulse_response,
    partial_fractions,
)
from .estimators import ModelBasedCalibrator, RandomDemodulator, SparseRecovery
from .experiments import ExperimentConfig, rmse, snr
from .filters import LcComponents, ToleranceModel, lc_transfer_function, perturb_components, synthesize_nominal
from .rd import FourierDictionary, RdSystem, apply_phi, generate_chipping, generate_multitone
from .solvers import BpdnConfig, solve_bpdn, solve_least_squares, solve_tikhonov

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "BpdnConfig",
    "CalibrationInput",
    "CalibrationResult",
    "ExperimentConfig",
    "FourierDictionary",
    "ImpulseResponse",
    "LcComponents",
    "ModelBasedCalibrator",
    "RandomDemodulator",
    "RdSystem",
    "SparseRecovery",
    "ToleranceModel",
    "apply_phi",
    "bilinear_transform",
    "build_d_matrix",
    "calibration_system",
    "dftti_calibrate",
    "discrete_impulse_response",
    "generate_chipping",
    "generate_multitone",
    "impulse_response",
    "lc_transfer_function",
    "mbc_calibrate",
    "partial_fractions",
    "perturb_components",
    "rmse",
    "snr",
    "solve_bpdn",
    "solve_least_squares",
    "solve_tikhonov",
    "synthesize_nominal",
]
