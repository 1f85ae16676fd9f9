import math

import pytest

from quasi2d.errors import InputError
from quasi2d.services.coupling import (
    CouplingService,
    InteractionFamily,
    default_rule,
    mu_of,
)
from quasi2d.services.scattering import RadialProfile
from tests.conftest import HARMONIC_QUARTIC, SOFT_SPHERE_A

MU_LIST = [1e-1, 1e-2, 1e-3, 1e-4]


def test_mu_of():
    assert mu_of(1e4, 1e-2) == pytest.approx(1e-6)
    with pytest.raises(InputError):
        mu_of(0.5, 0.1)
    N, eps = default_rule(1e-4)
    assert mu_of(N, eps) == pytest.approx(1e-4)


def test_canonical_family_scaling(soft_sphere):
    fam = InteractionFamily.canonical(soft_sphere, 0.5)
    prof = fam.profile(1e-2)
    assert prof.samples.max() == pytest.approx(2.0 * 1e-2 ** (1.0 - 1.5))
    assert prof.r_support == pytest.approx(1e-2**0.5)
    assert fam.density(1e-2) == pytest.approx(fam.density(1e-4), rel=1e-12)


def test_beta_one_coupling_uses_scattering_length(soft_sphere, harmonic_gs):
    service = CouplingService()
    b1 = service.b_beta(1.0, SOFT_SPHERE_A, harmonic_gs)
    assert b1 == pytest.approx(8.0 * math.pi * SOFT_SPHERE_A * HARMONIC_QUARTIC, rel=1e-6)
    assert b1 == pytest.approx(2.39038, abs=1e-4)


def test_beta_below_one_coupling_is_born(soft_sphere, harmonic_gs, scattering):
    service = CouplingService()
    fam = InteractionFamily.canonical(soft_sphere, 0.5)
    b = service.b_beta(0.5, fam, harmonic_gs)
    assert b == pytest.approx(scattering.l1_norm(soft_sphere) * harmonic_gs.quartic, rel=1e-8)
    assert b == pytest.approx(8.0 * math.pi / 3.0 * HARMONIC_QUARTIC, rel=1e-3)


def test_b_beta_needs_family_below_one(harmonic_gs):
    with pytest.raises(InputError):
        CouplingService().b_beta(0.5, 0.2, harmonic_gs)


def test_family_beta_must_match(soft_sphere, harmonic_gs):
    fam = InteractionFamily.canonical(soft_sphere, 0.5)
    with pytest.raises(InputError):
        CouplingService().b_beta(0.7, fam, harmonic_gs)


@pytest.mark.parametrize("beta", [0.5, 1.0])
def test_canonical_family_membership(soft_sphere, coarse_harmonic_gs, beta):
    fam = InteractionFamily.canonical(soft_sphere, beta)
    report = CouplingService().check_class_membership(fam, 0.1, MU_LIST, gs=coarse_harmonic_gs)
    assert report.passed
    assert report.fits["sup_exponent"] == pytest.approx(1.0 - 3.0 * beta, abs=1e-9)
    assert report.fits["support_exponent"] == pytest.approx(beta, abs=1e-9)


def test_membership_rejects_short_mu_list(soft_sphere):
    fam = InteractionFamily.canonical(soft_sphere, 0.5)
    with pytest.raises(InputError):
        CouplingService().check_class_membership(fam, 0.1, [1e-1, 1e-2, 1e-3])


def test_membership_rejects_unsorted_mu_list(soft_sphere):
    fam = InteractionFamily.canonical(soft_sphere, 0.5)
    with pytest.raises(InputError):
        CouplingService().check_class_membership(fam, 0.1, [1e-1, 1e-3, 1e-2, 1e-4])


def test_negative_potential_flagged(coarse_harmonic_gs):
    w = RadialProfile.soft_sphere(-0.5, 1.0, 1e-3, 10.0)
    fam = InteractionFamily.canonical(w, 0.5)
    report = CouplingService().check_class_membership(fam, 0.1, MU_LIST, gs=coarse_harmonic_gs)
    assert not report.passed
    assert [r.quantity for r in report.rows if not r.passed] == ["non_negative"]


def test_report_round_trip(soft_sphere, coarse_harmonic_gs):
    service = CouplingService()
    fam = InteractionFamily.canonical(soft_sphere, 0.5)
    report = service.report(fam, coarse_harmonic_gs, 1e4, 1e-2, 0.1, MU_LIST)
    assert report.b_Neps == pytest.approx(report.b_limit, rel=1e-10)
    assert report.eta_check["pass"]
    assert "ok" in service.format_report(report)


def test_uf_coupling_close_to_b1(soft_sphere, coarse_harmonic_gs):
    rows = CouplingService().b_Uf_check(soft_sphere, 1e-2, 0.5, coarse_harmonic_gs)
    assert all(r.passed for r in rows), rows


def test_uf_coupling_identity_is_tight(soft_sphere, coarse_harmonic_gs):
    rows = {r.quantity: r for r in CouplingService().b_Uf_check(soft_sphere, 1e-2, 0.9, coarse_harmonic_gs)}
    assert rows["uf_equals_kappa_b1"].bound == 1e-6
    assert rows["uf_equals_kappa_b1"].passed
    assert rows["uf_gap_to_b1"].passed
