from quasi2d.handlers.verify import (
    NONLINEAR_ENERGY_TOL,
    counting_params,
    evolve2d_stages,
    reduction_params,
)

COUPLING = {"coupling": {"b_limit": 2.39}}


def test_full_profile_counting_sizes():
    p = counting_params(True, "none")
    assert p.trials == 1000
    assert p.equivalence_N == [16, 32, 64]
    assert p.equivalence_trials == 1000
    assert p.toy_N == [16, 32, 64]
    assert counting_params(False, "weight_sign").fault == "weight_sign"


def test_reduction_takes_b_from_coupling():
    full = reduction_params(True)(COUPLING)
    assert full.b == 2.39
    assert full.eps_list == [0.2, 0.1, 0.05]
    assert full.n == 128
    assert full.t_final == 1.0
    quick = reduction_params(False)(COUPLING)
    assert quick.b == 2.39
    assert quick.t_final == 1.0


def test_full_profile_energy_stages():
    stages = {name: params for name, _, params in evolve2d_stages(True)}
    linear = stages["evolve2d"]
    assert (linear.n, linear.dt, linear.t_final, linear.b) == (128, 1e-3, 1.0, 0.0)
    assert linear.energy_tol == 1e-8
    assert stages["evolve2d_nonlinear"].energy_tol == NONLINEAR_ENERGY_TOL
    assert stages["evolve2d_driven"].potential == "driven"
    assert set(name for name, _, _ in evolve2d_stages(False)) == {"evolve2d", "evolve2d_driven"}
