import math

import pytest

from quasi2d.services.scattering import RadialProfile, ScatteringService
from quasi2d.services.transverse import ConfinementPotential, TransverseService

SOFT_SPHERE_A = 1.0 - math.tanh(1.0)
HARMONIC_QUARTIC = math.sqrt(1.0 / (2.0 * math.pi))


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """Keep the environment layer and the run ledger inside the test's tmp dir."""
    for key in ("QUASI2D_OUTPUT_DIR", "QUASI2D_JOBS", "QUASI2D_SEED", "QUASI2D_LOG_LEVEL",
                "QUASI2D_LEDGER"):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv("QUASI2D_DB_PATH", str(tmp_path / "ledger.db"))
    monkeypatch.chdir(tmp_path)


@pytest.fixture(scope="session")
def scattering():
    return ScatteringService()


@pytest.fixture(scope="session")
def soft_sphere():
    """V0=2, R=1 soft sphere on a coarse grid."""
    return RadialProfile.soft_sphere(2.0, 1.0, 1e-3, 10.0)


@pytest.fixture(scope="session")
def harmonic_gs():
    return TransverseService().solve_ground_state(ConfinementPotential.harmonic(1.0))


@pytest.fixture(scope="session")
def coarse_harmonic_gs():
    return TransverseService().solve_ground_state(ConfinementPotential.harmonic(1.0), 12.0, 1e-2)
