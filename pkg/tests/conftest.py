import numpy as np
import pytest

from driftcal.batch import ETA_FIXED, aci_path, ensemble_path


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the jitted paths once so timed tests measure steady state."""
    b = np.array([0.3, 0.7, 0.5])
    g = np.array([0.01, 0.02])
    aci_path(b, 0.01, 0.1, 0.1)
    ensemble_path(
        b, g, 0.1, np.full(2, 0.1), np.full(2, 0.5), ETA_FIXED,
        2.0, 0.001, 0.0, 0.0, 500, True, np.array([0.5, 0.5, 0.5]), True,
    )
    yield
