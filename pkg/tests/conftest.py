import pytest

from ghost_optics.config.settings import setting
from ghost_optics.models.biphoton import BiphotonModel, GeometryConfig
from ghost_optics.models.optics import DoubleSlitSpec
from ghost_optics.services.biphoton import klyshko_interference_pattern
from ghost_optics.services.estimators import divergence_to_single_uncertainty
from ghost_optics.services.optics import make_grid

WAVELENGTH = 702.2e-9
MM = 1e-3
PER_MM = 1e3


@pytest.fixture(scope="session")
def slit():
    return DoubleSlitSpec(slit_width_a=0.165 * MM, slit_separation_d=0.4 * MM)


@pytest.fixture(scope="session")
def geometry(slit):
    """Published lengths, point-like detectors."""
    return GeometryConfig(slit=slit, a1=0.325, a2=0.465, b=1.42, f_imaging=0.510, f_collection=0.500)


@pytest.fixture(scope="session")
def sigma_single():
    return divergence_to_single_uncertainty(2.6e-3, WAVELENGTH)


@pytest.fixture(scope="session")
def reference_model(sigma_single):
    return BiphotonModel(sigma_sum=2.5 * PER_MM, sigma_single=sigma_single)


@pytest.fixture(scope="session")
def ideal_model(sigma_single):
    return BiphotonModel(sigma_sum=0.0, sigma_single=sigma_single)


@pytest.fixture(scope="session")
def default_grid():
    return make_grid(4096, 20 * MM)


@pytest.fixture(scope="session")
def fine_grid():
    """0.25 um spacing: every slit edge of the published double slit lands on a sample."""
    return make_grid(2 ** 17, 32.768 * MM)


@pytest.fixture(scope="session")
def ideal_pattern(ideal_model, geometry, fine_grid):
    return klyshko_interference_pattern(ideal_model, geometry, fine_grid)


@pytest.fixture
def fast_bootstrap(monkeypatch):
    """Fewer bootstrap resamples to keep fit tests quick."""
    monkeypatch.setattr(setting, "GHOST_OPTICS_BOOTSTRAP", 20)
    return 20
