import numpy as np
import pytest

from pagarch import _kernels_python, kernels
from pagarch.model import ArmaParams, GarchParams, ModelOrders

BACKENDS = ["python"]
try:
    from pagarch import _kernels

    BACKENDS.insert(0, "compiled")
except ImportError:  # pragma: no cover - extension not built
    _kernels = None


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    impl = _kernels if request.param == "compiled" else _kernels_python
    monkeypatch.setattr(kernels, "_impl", impl)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def design_params(n, seed=0, omega_range=(1.0, 3.0)):
    """ARMA(1,1)-GARCH(1,1) design with one regressor used across the tests."""
    r = np.random.default_rng(seed)
    orders = ModelOrders(1, 1, 1, 1, 1)
    arma = ArmaParams(mu=r.standard_normal(n), beta=[3.0], phi=[0.3], psi=[0.3])
    garch = GarchParams(omega=r.uniform(*omega_range, n), tau=[0.2], nu=[0.4])
    return orders, arma, garch
