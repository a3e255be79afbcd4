import numpy as np
import pytest

from rdcal.experiments import ExperimentConfig
from rdcal.rd import RdSystem, generate_chipping


def random_system(rng, N=None, R=None, L=None):
    R = R or int(rng.integers(1, 6))
    M = int(rng.integers(2, 12))
    N = N or M * R
    L = L or int(rng.integers(1, N + 1))
    return RdSystem(generate_chipping(N, int(rng.integers(1 << 31))), rng.standard_normal(L), N, N // R)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    # 4200-sample grid keeps the 1500 Hz tone below Nyquist and R = 12
    return ExperimentConfig(
        filter="butterworth",
        trials=2,
        seed=7,
        grid_rate_hz=4200.0,
        sample_rate_hz=350.0,
        m_q=189,
        max_iterations=400,
    )
