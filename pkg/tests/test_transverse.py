import math

import numpy as np
import pytest

from quasi2d.errors import InputError
from quasi2d.services.transverse import (
    ConfinementPotential,
    TransverseError,
    TransverseService,
    square_well_energy,
)
from tests.conftest import HARMONIC_QUARTIC


def test_harmonic_ground_state(harmonic_gs):
    assert harmonic_gs.E0 == pytest.approx(1.0, abs=1e-7)
    assert harmonic_gs.quartic == pytest.approx(HARMONIC_QUARTIC, abs=1e-7)
    assert harmonic_gs.norm == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("omega2", [0.25, 4.0])
def test_harmonic_frequency(omega2):
    gs = TransverseService().solve_ground_state(ConfinementPotential.harmonic(omega2), 12.0, 1e-2)
    omega = math.sqrt(omega2)
    assert gs.E0 == pytest.approx(omega, rel=1e-5)
    assert gs.quartic == pytest.approx(math.sqrt(omega / (2.0 * math.pi)), rel=1e-5)


def test_ground_state_is_even_and_positive(coarse_harmonic_gs):
    chi = coarse_harmonic_gs.chi
    assert np.allclose(chi, chi[::-1], atol=1e-10)
    assert np.min(chi) > -1e-12
    assert np.argmax(chi) == chi.size // 2


def test_ground_state_checks_pass(harmonic_gs):
    rows = TransverseService().ground_state_checks(harmonic_gs)
    assert all(r.passed for r in rows)


def test_rescaled_profile_norms(harmonic_gs):
    service = TransverseService()
    for eps in (0.5, 0.1, 0.01):
        norms = service.rescaled_norms(harmonic_gs, eps)
        assert norms["l2"] == pytest.approx(1.0, abs=1e-10)
        assert norms["quartic"] * eps == pytest.approx(harmonic_gs.quartic_raw, rel=1e-10)
    assert all(r.passed for r in service.scaling_checks(harmonic_gs, [0.5, 0.1, 0.01]))


def test_rescale_on_foreign_grid(coarse_harmonic_gs):
    eps = 0.1
    y = np.linspace(-0.5, 0.5, 101)
    values = TransverseService().rescale(coarse_harmonic_gs, eps, y)
    exact = np.pi**-0.25 * np.exp(-0.5 * (y / eps) ** 2) / math.sqrt(eps)
    assert np.allclose(values, exact, atol=1e-3)


def test_square_well_energy():
    gs = TransverseService().solve_ground_state(ConfinementPotential.square_well(4.0, 1.0), 16.0, 1e-3)
    exact = square_well_energy(4.0, 1.0)
    assert -4.0 < exact < 0.0
    assert gs.E0 == pytest.approx(exact, abs=1e-2)


def test_square_well_transcendental_equation():
    E = square_well_energy(4.0, 1.0)
    k, kappa = math.sqrt(E + 4.0), math.sqrt(-E)
    assert k * math.tan(k) == pytest.approx(kappa, rel=1e-8)


def test_box_too_small_raises():
    with pytest.raises(TransverseError):
        TransverseService().solve_ground_state(ConfinementPotential.harmonic(1.0), 2.0, 1e-2)


@pytest.mark.parametrize("factory", [
    lambda: ConfinementPotential.harmonic(0.0),
    lambda: ConfinementPotential.square_well(-1.0, 1.0),
    lambda: ConfinementPotential.tabulated([1.0], 0.1),
])
def test_bad_potentials_rejected(factory):
    with pytest.raises(InputError):
        factory()


def test_tabulated_matches_harmonic():
    y = np.linspace(-12.0, 12.0, 2401)
    V = ConfinementPotential.tabulated(y * y, 0.01)
    gs = TransverseService().solve_ground_state(V, 12.0, 1e-2)
    assert gs.E0 == pytest.approx(1.0, abs=1e-3)
