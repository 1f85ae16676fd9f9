import pytest

from quasi2d.errors import InputError, SweepError
from quasi2d.services.nls2d import ComplexField2D
from quasi2d.config import Reduce3DParams, RunConfig
from quasi2d.handlers.base import RunContext
from quasi2d.handlers.reduce3d import reduce3d_command
from quasi2d.services.reduction3d import Grid3D, ReductionService, ReductionSetup, summarize_sweep


@pytest.fixture
def service():
    return ReductionService()


def small_setup(**overrides) -> ReductionSetup:
    params = dict(eps_list=[0.2], n=16, t_final=0.05, samples=5)
    params.update(overrides)
    return ReductionSetup(**params)


def test_time_step_divides_horizon():
    setup = ReductionSetup(eps_list=[0.2, 0.1])
    assert setup.time_step(0.2) == pytest.approx((0.01, 100))
    dt, steps = setup.time_step(0.1)
    assert steps == 200
    assert dt == pytest.approx(0.005)


def test_confined_initial_state(service, coarse_harmonic_gs):
    eps = 0.2
    grid = Grid3D.for_eps(16, 16.0, eps)
    phi = ComplexField2D.gaussian(16, 16.0, 1.0)
    psi = service.build_confined_initial(phi, coarse_harmonic_gs, eps, grid)
    assert psi.mass() == pytest.approx(1.0, abs=1e-12)

    m = service.reduce_and_compare(psi, phi, coarse_harmonic_gs, eps, 1.0, ReductionSetup([eps]).confinement)
    assert m.density_gap <= 1e-12
    assert m.overlap_deficit <= 1e-12


def test_profile_needs_resolution(service, coarse_harmonic_gs):
    grid = Grid3D.for_eps(16, 16.0, 0.2, points_per_eps=4)
    with pytest.raises(InputError):
        service.transverse_profile(coarse_harmonic_gs, 0.2, grid)


def test_stepper_rejects_large_phase(service):
    setup = small_setup()
    grid = Grid3D.for_eps(16, 16.0, 0.1)
    with pytest.raises(InputError):
        service.make_stepper(grid, 0.05, 0.1, 0.0, setup.confinement)


def test_zero_coupling_matches_exactly(service, coarse_harmonic_gs):
    out = service.run_epsilon(0.2, small_setup(zero_coupling=True), coarse_harmonic_gs)
    assert out["sup"]["density_gap"] <= 1e-8
    assert [r["t"] for r in out["rows"]] == pytest.approx([0.0, 0.01, 0.02, 0.03, 0.04, 0.05])


def test_mass_conserved(service, coarse_harmonic_gs):
    out = service.run_epsilon(0.2, small_setup(), coarse_harmonic_gs)
    assert all(abs(r["mass"] - 1.0) <= 1e-10 for r in out["rows"])


def test_evolve3d_mass(service, coarse_harmonic_gs):
    eps = 0.2
    grid = Grid3D.for_eps(16, 16.0, eps)
    phi = ComplexField2D.gaussian(16, 16.0, 1.0)
    psi = service.build_confined_initial(phi, coarse_harmonic_gs, eps, grid)
    g = eps / coarse_harmonic_gs.quartic
    out = service.evolve3d(psi, 0.05, 0.01, eps, g, small_setup().confinement,
                           E0=coarse_harmonic_gs.E0)
    assert out["steps"] == 5
    assert out["mass"][1] == pytest.approx(out["mass"][0], abs=1e-12)


def test_sweep_orders_largest_eps_first(service, coarse_harmonic_gs):
    sweep = service.epsilon_sweep(small_setup(eps_list=[0.1, 0.2]), coarse_harmonic_gs)
    assert [item["eps"] for item in sweep["per_eps"]] == [0.2, 0.1]
    assert set(sweep["monotone"]) == {"density_gap", "overlap_deficit"}
    assert set(sweep["orders"]) == {"density_gap", "overlap_deficit", "energy_gap"}
    assert {"eps", "t", "density_gap", "overlap_deficit", "energy_gap", "mass"} <= set(sweep["rows"][0])


@pytest.mark.parametrize("eps_list", [[], [0.1, -0.1]])
def test_sweep_rejects_bad_eps(service, coarse_harmonic_gs, eps_list):
    with pytest.raises(InputError):
        service.epsilon_sweep(small_setup(eps_list=eps_list), coarse_harmonic_gs)


def test_sweep_keeps_service_settings(coarse_harmonic_gs):
    # dt/eps^2 = 0.25 at eps=0.2, above the configured bound
    strict = ReductionService(max_gap_phase=0.1)
    with pytest.raises(SweepError):
        strict.epsilon_sweep(small_setup(), coarse_harmonic_gs)
    assert ReductionService().epsilon_sweep(small_setup(), coarse_harmonic_gs)["per_eps"]


def test_final_gaps_shrink_with_eps(service, harmonic_gs):
    sweep = service.epsilon_sweep(ReductionSetup(eps_list=[0.2, 0.1]), harmonic_gs)
    assert sweep["monotone"] == {"density_gap": True, "overlap_deficit": True}
    finals = [item["final"] for item in sweep["per_eps"]]
    assert finals[1]["density_gap"] < finals[0]["density_gap"]
    assert finals[1]["overlap_deficit"] < finals[0]["overlap_deficit"]
    assert all(item["final"]["density_gap"] > 0 for item in sweep["per_eps"])


@pytest.mark.slow
def test_overlap_deficit_order_at_unit_time(service, harmonic_gs):
    sweep = service.epsilon_sweep(ReductionSetup(eps_list=[0.2, 0.1, 0.05], t_final=1.0), harmonic_gs)
    assert sweep["monotone"]["density_gap"]
    assert sweep["monotone"]["overlap_deficit"]
    assert sweep["orders"]["overlap_deficit"] >= 1.8


def fake_point(eps: float, overlap_power: float = 3.0, density=None) -> dict:
    energy = {0.2: 1e-6, 0.1: 5e-5, 0.05: 1e-5}[eps]
    final = {"density_gap": eps**2 if density is None else density,
             "overlap_deficit": eps**overlap_power, "energy_gap": energy}
    row = {"eps": eps, "t": 1.0, **final, "mass": 1.0}
    return {"eps": eps, "dt": 0.01, "steps": 100, "rows": [row], "final": final, "sup": final}


def test_summary_uses_final_values():
    sweep = summarize_sweep([fake_point(e) for e in (0.2, 0.1, 0.05)])
    assert sweep["monotone"] == {"density_gap": True, "overlap_deficit": True}
    assert sweep["orders"]["overlap_deficit"] == pytest.approx(3.0)
    assert sweep["orders"]["density_gap"] == pytest.approx(2.0)
    assert sweep["orders"]["energy_gap"] is not None


def test_equal_final_values_are_not_a_decrease():
    sweep = summarize_sweep([fake_point(e, density=1e-4) for e in (0.2, 0.1)])
    assert not sweep["monotone"]["density_gap"]
    assert sweep["monotone"]["overlap_deficit"]


@pytest.mark.parametrize("power, passed", [(3.0, True), (1.5, False)])
def test_reduce3d_asserts_overlap_order(tmp_path, monkeypatch, power, passed):
    points = [fake_point(e, overlap_power=power) for e in (0.2, 0.1, 0.05)]
    monkeypatch.setattr(ReductionService, "epsilon_sweep",
                        lambda self, setup, gs=None, jobs=1: summarize_sweep(points))
    ctx = RunContext(RunConfig(command="reduce3d"), Reduce3DParams(), tmp_path)
    rows = {r.quantity: r for r in reduce3d_command(ctx).rows}
    assert set(rows) == {"mass_drift", "density_gap_decreases_with_eps",
                         "overlap_deficit_decreases_with_eps", "overlap_deficit_order"}
    assert rows["overlap_deficit_order"].bound == 1.8
    assert rows["overlap_deficit_order"].passed is passed
    assert rows["density_gap_decreases_with_eps"].passed


def test_two_eps_values_skip_the_order_row(tmp_path, monkeypatch):
    points = [fake_point(e) for e in (0.2, 0.1)]
    monkeypatch.setattr(ReductionService, "epsilon_sweep",
                        lambda self, setup, gs=None, jobs=1: summarize_sweep(points))
    ctx = RunContext(RunConfig(command="reduce3d"), Reduce3DParams(eps_list=[0.2, 0.1]), tmp_path)
    rows = {r.quantity for r in reduce3d_command(ctx).rows}
    assert "overlap_deficit_order" not in rows
    assert "overlap_deficit_decreases_with_eps" in rows
