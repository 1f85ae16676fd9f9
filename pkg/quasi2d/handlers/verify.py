"""The built-in acceptance suite: every module in one report, at reduced or acceptance sizes."""
import logging
import math

from quasi2d.checks import at_least, at_most, holds
from quasi2d.config import (
    ConfinementParams,
    CountingParams,
    CouplingParams,
    Evolve2DParams,
    Reduce3DParams,
    RegimesParams,
    ScatterParams,
    TransverseParams,
)
from quasi2d.handlers.base import CommandOutcome, RunContext, prefixed
from quasi2d.handlers.counting import counting_command
from quasi2d.handlers.coupling import coupling_command
from quasi2d.handlers.evolve2d import evolve2d_command
from quasi2d.handlers.reduce3d import reduce3d_command
from quasi2d.handlers.regimes import regimes_command
from quasi2d.handlers.scatter import scatter_command
from quasi2d.handlers.transverse import transverse_command
from quasi2d.services.counting import CountingService, ModeSpace, default_condensate
from quasi2d.services.coupling import CouplingService
from quasi2d.services.nls2d import ComplexField2D, EffectiveHamiltonianSpec, NLS2DSolver
from quasi2d.services.regimes import (
    COVERED,
    EXCLUDED_ADMISSIBILITY,
    FREE_REGIME,
    RegimeParams,
    RegimeService,
    SequenceSpec,
    default_params,
    label_counts,
)
from quasi2d.services.scattering import RadialProfile
from quasi2d.services.transverse import ConfinementPotential, TransverseService

logger = logging.getLogger(__name__)

DOUBLING = [(2.0**n, 2.0**-n) for n in range(1, 11)]
AUX_BETA1 = 0.9
NONLINEAR_ENERGY_TOL = 1e-6


def run_stage(ctx: RunContext, name: str, command, params) -> CommandOutcome:
    sub = RunContext(ctx.config, params, ctx.output_dir / name, ctx.jobs)
    logger.info(f"verify: {name}")
    outcome = command(sub)
    ctx.files += [f"{name}/{f}" for f in sub.files]
    return CommandOutcome(prefixed(name, outcome.rows), outcome.summary)


def regime_examples() -> list:
    """Hand-checkable points, rasters and sequences of the regime classifier."""
    service = RegimeService()
    tolerant = RegimeService(slack=1e-9)
    eps = 0.01
    free = tolerant.classify_point(eps**-2, eps, RegimeParams(1.0 / 3.0, 8.0, 3.0))
    covered = service.classify_point(1e-3**-1.5, 1e-3, RegimeParams(1.0, 3.0, 1.01))

    N_grid = [10.0**k for k in range(1, 7)]
    eps_grid = [10.0**-k for k in range(4, 0, -1)] + [0.5]
    beta1 = label_counts(service.region_raster(default_params(1.0), N_grid, eps_grid))
    third = label_counts(service.region_raster(default_params(1.0 / 3.0), N_grid, eps_grid))

    seq = SequenceSpec(pairs=DOUBLING)
    holding = service.check_sequence(seq, RegimeParams(1.0, 3.0, 1.01), len(DOUBLING))
    flat = service.check_sequence(seq, RegimeParams(1.0, 3.0, 2.0), len(DOUBLING))
    return [
        holds("free_regime_example", free["label"] == FREE_REGIME),
        at_most("free_regime_example_adm_margin", abs(free["adm_margin"] - 5.0 * math.log(eps)), 1e-9),
        holds("covered_example", covered["label"] == COVERED),
        holds("beta_one_has_no_free_regime", beta1[FREE_REGIME] == 0),
        holds("beta_third_has_three_regions",
              all(third[k] > 0 for k in (COVERED, EXCLUDED_ADMISSIBILITY, FREE_REGIME))),
        holds("doubling_sequence_admissible", holding["admissible"] == "holds"),
        holds("doubling_sequence_confining", holding["moderately_confining"] == "holds"),
        holds("flat_margin_not_confining", flat["moderately_confining"] == "fails"),
    ]


def nls2d_checks(jobs: int = 1) -> list:
    """Exact plane waves, linear energy conservation and the Strang convergence ratio."""
    solver = NLS2DSolver(workers=jobs)
    box, n = 16.0, 32
    free = EffectiveHamiltonianSpec(0.0)

    wave = ComplexField2D.plane_wave(n, box, (1, 0))
    t = 0.5
    out = solver.evolve(wave, t, 1e-2, free, observers=())
    k2 = (2.0 * math.pi / box) ** 2
    exact = ComplexField2D(wave.values * complex(math.cos(k2 * t), -math.sin(k2 * t)), box)

    linear = solver.evolve(ComplexField2D.gaussian(n, box, 1.0, momentum=(1.0, 0.0)), 1.0, 1e-2,
                           free, observers=("energy",))
    energies = linear.series["energy"]

    ratio = solver.strang_ratio(ComplexField2D.gaussian(n, box, 1.0), EffectiveHamiltonianSpec(1.0),
                                0.5, 0.05)
    return [
        at_most("plane_wave_exact", solver.l2_distance(out.final, exact), 1e-10),
        at_most("linear_energy_drift", max(abs(e - energies[0]) for e in energies), 1e-10),
        at_least("strang_ratio", ratio, 3.5),
        at_most("strang_ratio_upper", ratio, 4.5),
    ]


def sharp_norm_rows(full: bool, skip: int) -> list:
    service = CountingService()
    rows = []
    for N in ((2, 4, 6) if full else (2, 4)):
        if N != skip:
            rows += service.sharp_norm_checks(ModeSpace(3, N), default_condensate(3))
    return rows


def uf_coupling_rows(full: bool) -> list:
    """b(U f) = kappa * b_1 at the auxiliary exponent used by the scatter stage."""
    service = CouplingService()
    gs = TransverseService().solve_ground_state(ConfinementPotential.harmonic())
    w = RadialProfile.soft_sphere(2.0, 1.0, 1e-3, 10.0)
    rows = []
    for mu in ([1e-2, 1e-3] if full else [1e-2]):
        rows += prefixed(f"mu={mu:g}", service.b_Uf_check(w, mu, AUX_BETA1, gs))
    return rows


def reduction_params(full: bool):
    """Reduction sweep with b taken from the coupling stage."""
    def build(summary: dict) -> Reduce3DParams:
        b = summary["coupling"]["b_limit"]
        if full:
            return Reduce3DParams(eps_list=[0.2, 0.1, 0.05], n=128, t_final=1.0, b=b)
        return Reduce3DParams(eps_list=[0.2, 0.1], t_final=1.0, b=b)
    return build


def counting_params(full: bool, fault: str) -> CountingParams:
    if full:
        return CountingParams(trials=1000, fault=fault, equivalence_N=[16, 32, 64],
                              equivalence_trials=1000, toy_N=[16, 32, 64])
    return CountingParams(trials=100, fault=fault)


def evolve2d_stages(full: bool) -> list:
    driven = ("evolve2d_driven", evolve2d_command, Evolve2DParams(n=32, potential="driven"))
    if not full:
        return [("evolve2d", evolve2d_command, Evolve2DParams(n=32, t_final=1.0, energy_tol=1e-5)),
                driven]
    # Strang splitting leaves an O(dt^2) energy error once b > 0.
    return [
        ("evolve2d", evolve2d_command,
         Evolve2DParams(n=128, b=0.0, momentum=(1.0, -0.5), dt=1e-3, t_final=1.0, energy_tol=1e-8)),
        ("evolve2d_nonlinear", evolve2d_command,
         Evolve2DParams(n=128, b=1.0, dt=1e-3, t_final=1.0, energy_tol=NONLINEAR_ENERGY_TOL)),
        driven,
    ]


def verify_command(ctx: RunContext) -> CommandOutcome:
    full = ctx.params.profile == "full"
    fault = ctx.params.fault
    counting = counting_params(full, fault)

    stages = [
        ("scatter", scatter_command, ScatterParams(
            auxiliary=True, beta1=AUX_BETA1, g_scaling=full,
            aux_mu_list=[1e-2, 3e-3, 1e-3, 1e-4] if full else [1e-2])),
        ("transverse", transverse_command, TransverseParams()),
        ("coupling", coupling_command, CouplingParams(beta=1.0)),
        ("regimes", regimes_command, RegimesParams(N_points=21, eps_points=21, sequence=DOUBLING)),
        *evolve2d_stages(full),
        ("reduce3d", reduce3d_command, reduction_params(full)),
        ("reduce3d_control", reduce3d_command,
         Reduce3DParams(eps_list=[0.2, 0.1, 0.05] if full else [0.2], zero_coupling=True)),
        ("counting", counting_command, counting),
    ]
    if full:
        stages += [
            ("transverse_square_well", transverse_command,
             TransverseParams(confinement=ConfinementParams(kind="square_well"))),
            ("coupling_auxiliary", coupling_command, CouplingParams(family="auxiliary")),
        ]

    rows, summary = [], {"profile": ctx.params.profile, "fault": fault}
    for name, command, params in stages:
        if callable(params):
            params = params(summary)
        outcome = run_stage(ctx, name, command, params)
        rows += outcome.rows
        summary[name] = outcome.summary
    rows += prefixed("regimes", regime_examples())
    rows += prefixed("evolve2d", nls2d_checks(ctx.jobs))
    rows += prefixed("coupling_uf", uf_coupling_rows(full))
    rows += prefixed("counting", sharp_norm_rows(full, counting.N))

    failed = [r.quantity for r in rows if not r.passed]
    if failed:
        logger.warning(f"verify: {len(failed)} failing row(s): {', '.join(failed)}")
    return CommandOutcome(rows, summary)
