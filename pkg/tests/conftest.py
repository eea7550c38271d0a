import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from urichards import constitutive as cm  # noqa: E402


@pytest.fixture
def clay_loam():
    return cm.HydraulicModel(theta_s=0.41, theta_r=0.095, n=1.31, K_s=0.0624, alpha=1.9)


@pytest.fixture
def vg2():
    return cm.HydraulicModel(theta_s=0.41, theta_r=0.095, n=2.0, K_s=0.0624, alpha=1.9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def model_zoo():
    """One bounded model per family and relative-permeability variant."""
    return [
        cm.HydraulicModel(family=cm.GARDNER, alpha=1.0, K_s=1.0),
        cm.HydraulicModel(family=cm.BROOKS_COREY, alpha=2.0, lambda_bc=0.5, B=4.0, K_s=1.0),
        cm.HydraulicModel(family=cm.HAVERKAMP, alpha=1.0, beta=2.0, gamma=3.5, A=1.0, K_s=1.0),
        cm.HydraulicModel(theta_s=0.41, theta_r=0.095, n=1.31, K_s=0.0624, alpha=1.9),
        cm.HydraulicModel(theta_s=0.5, theta_r=0.12, n=3.0, K_s=0.25, alpha=0.028),
        cm.HydraulicModel(kr_variant=cm.POWER_LAW, theta_s=0.95, n=4.0, K_s=0.01, h_cap=342.0, B=4.6),
    ]


#: one ``(criterion, passed, detail)`` entry per acceptance check that ran
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
