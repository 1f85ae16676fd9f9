import numpy as np
import pytest

from quasi2d.errors import InputError
from quasi2d.services.counting import (
    FIRST_QUANTIZED,
    OCCUPATION,
    BoseHubbardToy,
    CondensateVector,
    CountingService,
    DimensionError,
    FirstQuantizedOps,
    ModeSpace,
    OccupationBasis,
    WeightFunction,
    default_condensate,
    m_weight,
    n_weight,
    product_tensor,
)


@pytest.fixture
def service():
    return CountingService(xi=0.25)


@pytest.fixture
def small_space():
    return ModeSpace(3, 4)


@pytest.fixture
def cond():
    return default_condensate(3)


def test_weights_outside_range_are_rejected():
    with pytest.raises(InputError):
        WeightFunction.n(4)(-1)
    with pytest.raises(InputError):
        WeightFunction.constant(1.0, 4)(7)


@pytest.mark.parametrize("N", [16, 256])
def test_m_dominates_n_by_at_most_half_power(N):
    xi = 0.25
    k = np.arange(N + 1)
    n, m = n_weight(k, N), m_weight(k, N, xi)
    assert np.all(n <= m + 1e-15)
    assert np.max(m - n) <= 0.5 * N**-xi + 1e-15
    assert m[0] == pytest.approx(0.5 * N**-xi)


def test_mode_space_dimensions():
    space = ModeSpace(3, 4)
    assert space.first_quantized_dim == 81
    assert space.symmetric_dim == 15
    with pytest.raises(DimensionError):
        ModeSpace(10, 6).check_first_quantized()


def test_condensate_must_be_normalised():
    with pytest.raises(InputError):
        CondensateVector(np.array([1.0, 1.0]))


def test_basis_rotation_is_unitary(cond):
    W = cond.basis_rotation()
    assert np.allclose(W.conj().T @ W, np.eye(3), atol=1e-12)
    assert np.allclose(W[:, 0], cond.phi, atol=1e-12)
    assert abs(np.vdot(cond.phi, cond.orthogonal())) < 1e-12


def test_occupation_basis_order(small_space):
    basis = OccupationBasis(small_space)
    assert basis.dim == 15
    assert basis.states[0] == (4, 0, 0)
    assert np.all(np.diff(basis.n0) <= 0)
    assert np.array_equal(basis.hop(0, 0).diagonal(), basis.n0)


def test_condensed_state_in_both_representations(service, small_space, cond):
    occ = service.condensed(small_space, cond, OCCUPATION)
    fq = service.condensed(small_space, cond, FIRST_QUANTIZED)
    assert np.allclose(service.basis(small_space).to_tensor(occ.coefficients), fq.coefficients,
                       atol=1e-10)
    weights = service.sector_weights(occ, cond)
    assert weights[0] == pytest.approx(1.0, abs=1e-10)
    assert service.trace_distance(occ, cond) <= 1e-10
    assert service.alpha_less(occ, cond) == pytest.approx(0.5 * 4**-0.25, abs=1e-10)


def test_random_first_quantized_state_is_symmetric(service, small_space):
    psi = service.random_state(small_space, np.random.default_rng(1), FIRST_QUANTIZED)
    assert psi.norm == pytest.approx(1.0)
    assert psi.symmetry_defect() <= 1e-14


def test_projectors_partition_unity(small_space, cond):
    ops = FirstQuantizedOps(small_space, cond)
    assert np.allclose(sum(ops.P), np.eye(ops.dim), atol=1e-12)
    for a, b in zip(ops.P, ops.P_spectral()):
        assert np.allclose(a, b, atol=1e-10)


def test_fhat_matches_product_state_weight(service, small_space, cond):
    psi = service.condensed(small_space, cond, FIRST_QUANTIZED)
    f = WeightFunction.from_callable(lambda k: 1.0 + k, 4)
    out = service.apply_fhat(f, psi, cond)
    assert np.allclose(out.coefficients, psi.coefficients, atol=1e-12)
    shifted = service.apply_fhat(f, psi, cond, d=2)
    assert np.allclose(shifted.coefficients, 3.0 * psi.coefficients, atol=1e-12)


def test_lemma_suite_passes(service, small_space, cond):
    rows = service.verify_lemma_suite(small_space, cond, trials=100, seed=7)
    failed = [r.quantity for r in rows if not r.passed]
    assert failed == []
    names = {r.quantity for r in rows}
    assert {"weighted_operator_norm", "q1q2_bound", "two_slot_commutator",
            "projector_completeness"} <= names


def test_weight_sign_fault_is_caught(service, small_space, cond):
    rows = service.verify_lemma_suite(small_space, cond, trials=100, seed=7, fault="weight_sign")
    failed = {r.quantity for r in rows if not r.passed}
    assert "weighted_operator_norm" in failed


def test_lemma_suite_needs_enough_trials(service, small_space, cond):
    with pytest.raises(InputError):
        service.verify_lemma_suite(small_space, cond, trials=10)


@pytest.mark.parametrize("N", [2, 4])
def test_sharp_norms(service, cond, N):
    rows = service.sharp_norm_checks(ModeSpace(3, N), cond)
    assert all(r.passed for r in rows)


def test_representations_agree(service, cond):
    rows = service.representation_checks(ModeSpace(3, 3), cond, trials=3, seed=2)
    assert all(r.passed for r in rows), rows


def test_equivalence_inequalities(service, cond):
    rows = service.equivalence_checks(ModeSpace(3, 16), cond, trials=20, seed=3)
    assert all(r.passed for r in rows)


def test_second_difference_exponent(service):
    assert service.second_difference_exponent().passed


def test_reduced_density_of_random_state(service, small_space):
    psi = service.random_state(small_space, np.random.default_rng(4), OCCUPATION)
    gamma = service.reduced_density(psi)
    assert np.trace(gamma).real == pytest.approx(1.0)
    assert np.allclose(gamma, gamma.conj().T, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(gamma)) >= -1e-12


def test_toy_hamiltonian_representations(service):
    for N in (2, 3, 6):
        row = service.toy_representation_check(BoseHubbardToy(3, N))
        assert row.bound == 1e-12
        assert row.passed, row


def test_toy_product_state_energy(service, cond):
    toy = BoseHubbardToy(3, 6)
    psi = service.condensed(toy.space, cond, OCCUPATION)
    assert toy.energy_per_particle(psi.coefficients) == pytest.approx(
        toy.mean_field_energy(cond.phi), abs=1e-10)


def test_toy_evolution_conserves_norm_and_energy(service, cond):
    toy = BoseHubbardToy(3, 6)
    psi0 = service.condensed(toy.space, cond, OCCUPATION).coefficients
    states = toy.evolve(psi0, [0.0, 0.5, 1.0])
    assert np.allclose(states[0], psi0, atol=1e-12)
    for c in states:
        assert np.linalg.norm(c) == pytest.approx(1.0, abs=1e-12)
        assert toy.energy_per_particle(c) == pytest.approx(toy.energy_per_particle(psi0), abs=1e-10)


def test_mean_field_conserves_norm(cond):
    toy = BoseHubbardToy(3, 6)
    phis = toy.mean_field(cond.phi, np.linspace(0.0, 2.0, 11))
    assert np.allclose(np.linalg.norm(phis, axis=1), 1.0, atol=1e-8)
    with pytest.raises(InputError):
        toy.mean_field(cond.phi, [0.5, 1.0])


def test_toy_trace_distance_shrinks_with_N(service, cond):
    t_grid = np.linspace(0.0, 2.0, 11)
    sups = []
    for N in (8, 16):
        toy = BoseHubbardToy(3, N)
        psi0 = service.condensed(toy.space, cond, OCCUPATION)
        out = service.evolve_toy(toy, psi0, cond, t_grid)
        assert out["rows"][0]["trace_distance"] <= 1e-10
        assert out["rows"][0]["energy_gap"] <= 1e-10
        sups.append(out["sup_trace_distance"])
    assert sups[1] < sups[0]


def test_product_tensor_shape():
    t = product_tensor([np.ones(2), np.ones(2), np.ones(2)])
    assert t.shape == (2, 2, 2)
