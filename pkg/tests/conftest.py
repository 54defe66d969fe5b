import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sixvertex import flow  # noqa: E402


@pytest.fixture(scope="session")
def surf_eta1():
    """Free-energy surface at eta=1 for Legendre/action tests (single u)."""
    return flow.build_surface(1.0, (0.32, 0.48), (-0.12, 0.12), (0.4, 0.4),
                              degrees=(40, 18, 1), M=64, n_probes=6, workers=2)


@pytest.fixture(scope="session")
def surf_eta35():
    """Deep massive-regime surface (eta=3.5) for conservation experiments."""
    return flow.build_surface(3.5, (0.45, 0.495), (-0.18, 0.18), (0.24, 0.62),
                              degrees=(40, 22, 18), M=64, n_probes=6, workers=2)
