import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("stimd", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow],
                          derandomize=True)
settings.load_profile("stimd")


@pytest.fixture
def t1000():
    return np.linspace(0.0, 1.0, 1000)


def rel(a, b):
    """Relative l2 error of ``a`` against reference ``b``."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


def rel_rms(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - b) ** 2) / np.mean(np.asarray(b) ** 2)))
