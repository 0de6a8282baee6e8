import numpy as np
import pytest

from fdpnsim.oscillator import OscillatorModel, calibrate_to_ici_target, default_pll


@pytest.fixture(scope="session")
def fr_50():
    """Free-running model of the combined process at -50 dBc over 64 subcarriers."""
    return calibrate_to_ici_target(OscillatorModel.free_running(1e-18), -50.0, 64)


@pytest.fixture(scope="session")
def pll_40():
    return calibrate_to_ici_target(default_pll(64), -40.0, 64)


def model_with_sigma2(sigma2, **kw):
    """Free-running model with per-sample increment variance ``sigma2``."""
    base = OscillatorModel.free_running(1.0, **kw)
    return base.scaled(sigma2 / base.increment_variance)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
