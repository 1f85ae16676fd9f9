import math

import numpy as np
import pytest

from quasi2d.errors import InputError
from quasi2d.handlers.scatter import soft_sphere_length
from quasi2d.services.scattering import (
    BoundStateError,
    RadialProfile,
    ScatteringService,
    cell_fraction,
)
from tests.conftest import SOFT_SPHERE_A


def test_closed_form_soft_sphere_length():
    assert soft_sphere_length(2.0, 1.0) == pytest.approx(SOFT_SPHERE_A, rel=1e-14)
    assert SOFT_SPHERE_A == pytest.approx(0.238406, abs=1e-6)


def test_soft_sphere_matches_closed_form(scattering):
    w = RadialProfile.soft_sphere(2.0, 1.0, 1e-4, 10.0)
    sol = scattering.solve_zero_energy(w)
    assert sol.a == pytest.approx(SOFT_SPHERE_A, rel=1e-6)


def test_zero_potential_has_zero_length(scattering):
    sol = scattering.solve_zero_energy(RadialProfile.zero())
    assert sol.a == 0.0
    assert np.all(sol.j.samples == 1.0)


@pytest.mark.parametrize("mu", [1e-1, 1e-3])
def test_scaling_law(scattering, soft_sphere, mu):
    a = scattering.solve_zero_energy(soft_sphere).a
    a_mu = scattering.solve_zero_energy(scattering.scale_potential(soft_sphere, mu)).a
    assert a_mu == pytest.approx(mu * a, rel=1e-8)


def test_length_below_born_length(scattering, soft_sphere):
    a = scattering.solve_zero_energy(soft_sphere).a
    born = scattering.born_length(soft_sphere)
    assert born == pytest.approx(1.0 / 3.0, rel=1e-3)
    assert 0.0 < a < born


def test_solution_checks_pass(scattering):
    w = RadialProfile.soft_sphere(2.0, 1.0, 1e-4, 10.0)
    rows = scattering.solution_checks(w, scattering.solve_zero_energy(w))
    assert {r.quantity for r in rows} == {"tail_law", "integral_consistency", "j_monotone",
                                          "j_in_unit_interval"}
    assert all(r.passed for r in rows)


def test_tail_is_exact_line(scattering, soft_sphere):
    sol = scattering.solve_zero_energy(soft_sphere)
    r = sol.j.radii
    tail = r > 1.5
    assert np.allclose(sol.j.samples[tail], 1.0 - sol.a / r[tail], atol=1e-10)


def test_binding_well_raises(scattering):
    well = RadialProfile.soft_sphere(-10.0, 1.0, 1e-3, 10.0)
    with pytest.raises(BoundStateError):
        scattering.solve_zero_energy(well)


def test_grid_must_divide_range():
    with pytest.raises(InputError):
        RadialProfile.soft_sphere(2.0, 1.0, 0.3, 1.0)


def test_r_max_must_exceed_support(scattering, soft_sphere):
    with pytest.raises(InputError):
        scattering.solve_zero_energy(soft_sphere, r_max=0.5)


def test_edge_cell_carries_half_height():
    r = np.array([0.9, 1.0, 1.1])
    assert cell_fraction(r, 0.1, -np.inf, 1.0).tolist() == pytest.approx([1.0, 0.5, 0.0])


def test_auxiliary_shell(scattering, soft_sphere):
    mu, beta1 = 1e-2, 0.9
    U = scattering.construct_auxiliary(soft_sphere, mu, beta1)
    assert U.inner_radius == pytest.approx(mu**beta1)
    assert 1.0 < U.rho_ratio < 10.0

    w_mu = scattering.scale_potential(soft_sphere, mu)
    ms = scattering.solve_f(w_mu, U)
    rows = scattering.auxiliary_checks(w_mu, U, ms)
    assert all(r.passed for r in rows), [r for r in rows if not r.passed]
    assert 1.0 < ms.kappa
    assert np.all(ms.f.samples[ms.f.radii >= U.outer_radius] == 1.0)


def test_auxiliary_identities_hold_tightly(scattering, soft_sphere):
    mu, beta1 = 1e-2, 0.9
    U = scattering.construct_auxiliary(soft_sphere, mu, beta1)
    w_mu = scattering.scale_potential(soft_sphere, mu)
    ms = scattering.solve_f(w_mu, U)
    rows = {r.quantity: r for r in scattering.auxiliary_checks(w_mu, U, ms)}
    assert rows["auxiliary_identity_residual"].bound == 1e-8
    assert rows["auxiliary_identity_residual"].passed
    assert rows["uf_equals_kappa_8pi_a_mu"].bound == 1e-6
    assert rows["uf_equals_kappa_8pi_a_mu"].passed
    assert rows["core_identity"].passed


def test_core_identity_between_supports(scattering, soft_sphere):
    mu, beta1 = 1e-2, 0.9
    U = scattering.construct_auxiliary(soft_sphere, mu, beta1)
    w_mu = scattering.scale_potential(soft_sphere, mu)
    ms = scattering.solve_f(w_mu, U)
    r = ms.g.radii
    gap = (r > w_mu.r_support + 3.0 * w_mu.dr) & (r + 0.5 * w_mu.dr <= U.inner_radius)
    assert np.count_nonzero(gap) > 100
    expected = 1.0 - ms.kappa * (1.0 - ms.a_mu / r[gap])
    assert np.allclose(ms.g.samples[gap], expected, rtol=0.0, atol=1e-9)


def test_residual_length_falls_with_shell_radius(scattering, soft_sphere):
    mu, beta1 = 1e-2, 0.9
    U = scattering.construct_auxiliary(soft_sphere, mu, beta1)
    w_mu = scattering.scale_potential(soft_sphere, mu)
    span = U.outer_radius - U.inner_radius
    rhos = [U.inner_radius + s * span for s in (0.25, 0.5, 0.75, 1.0, 1.25, 1.5)]
    lengths = [scattering.residual_length(w_mu, U.height, U.inner_radius, rho) for rho in rhos]
    assert all(b < a for a, b in zip(lengths, lengths[1:]))
    assert lengths[2] > 0.0 > lengths[4]
    assert abs(lengths[3]) <= 1e-6 * mu * SOFT_SPHERE_A


def test_auxiliary_coupling_formula(scattering, soft_sphere):
    mu, beta1 = 1e-2, 0.9
    U = scattering.construct_auxiliary(soft_sphere, mu, beta1)
    expected = 4.0 * math.pi / 3.0 * U.a * (U.rho_ratio**3 - 1.0)
    assert scattering.auxiliary_l1(U) == pytest.approx(expected, rel=1e-10)


def test_auxiliary_rejects_beta_out_of_range(scattering, soft_sphere):
    with pytest.raises(InputError):
        scattering.construct_auxiliary(soft_sphere, 1e-2, 0.2)


def test_auxiliary_rejects_large_mu(scattering, soft_sphere):
    with pytest.raises(InputError):
        scattering.construct_auxiliary(soft_sphere, 0.9, 0.9)


def test_auxiliary_for_zero_potential(scattering):
    U = scattering.construct_auxiliary(RadialProfile.zero(), 1e-2, 0.9)
    assert U.height == 0.0
    ms = scattering.solve_f(scattering.scale_potential(RadialProfile.zero(), 1e-2), U)
    assert ms.kappa == 1.0
    assert np.all(ms.g.samples == 0.0)


@pytest.mark.slow
def test_g_scaling(scattering, soft_sphere):
    rows = scattering.verify_g_scaling(soft_sphere, 0.9, [1e-2, 3e-3, 1e-3, 1e-4])
    assert all(r.passed for r in rows)


def test_g_scaling_needs_a_decade(scattering, soft_sphere):
    with pytest.raises(InputError):
        scattering.verify_g_scaling(soft_sphere, 0.9, [1e-2, 8e-3, 6e-3, 4e-3])
