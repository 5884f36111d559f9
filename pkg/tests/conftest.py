import numpy as np
import pytest

from fecgos.simulate import (
    SimConfig,
    generate_record,
    synthetic_ecg_donor,
    synthetic_vcg_donor,
)


@pytest.fixture(scope="session")
def ecg_donor():
    """One clean synthetic two-channel ECG record, 60 s at 1 kHz."""
    return synthetic_ecg_donor(60.0, 1000.0, seed=3)


@pytest.fixture(scope="session")
def vcg_donors():
    maternal = synthetic_vcg_donor(60.0, 1000.0, seed=1)
    fetal = synthetic_vcg_donor(120.0, 1000.0, seed=2)
    return maternal, fetal


@pytest.fixture(scope="session")
def sim_good(vcg_donors):
    """Simulated abdominal record at the easy corner (r=1/4, 20 dB)."""
    maternal, fetal = vcg_donors
    cfg = SimConfig(r=0.25, snr_db=20.0, seed=11)
    return generate_record(maternal, fetal, cfg, index=0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
