import logging

from quasi2d.artifacts import write_rows_csv
from quasi2d.checks import at_least, at_most, holds
from quasi2d.handlers.base import CommandOutcome, RunContext, confinement_from
from quasi2d.services.reduction3d import DECREASING, METRICS, ReductionService, ReductionSetup

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("eps", "t", "density_gap", "overlap_deficit", "energy_gap", "mass")
MASS_TOL = 1e-9
ZERO_COUPLING_TOL = 1e-8
# An order fit needs at least this many eps values.
ORDER_FIT_POINTS = 3


def reduction_setup(p) -> ReductionSetup:
    fields = p.model_dump(exclude={"confinement", "min_overlap_order"})
    return ReductionSetup(confinement=confinement_from(p.confinement), **fields)


def reduce3d_command(ctx: RunContext) -> CommandOutcome:
    p = ctx.params
    setup = reduction_setup(p)
    service = ReductionService(workers=ctx.jobs)
    c = p.confinement
    gs = service.transverse.solve_ground_state(setup.confinement, c.y_max, c.dy)
    sweep = service.epsilon_sweep(setup, gs, jobs=ctx.jobs)

    rows = [at_most("mass_drift", max(abs(r["mass"] - 1.0) for r in sweep["rows"]), MASS_TOL)]
    if p.zero_coupling:
        worst = max(item["sup"]["density_gap"] for item in sweep["per_eps"])
        rows.append(at_most("zero_coupling_density_gap", worst, ZERO_COUPLING_TOL))
    elif len(p.eps_list) > 1:
        for metric in DECREASING:
            rows.append(holds(f"{metric}_decreases_with_eps", sweep["monotone"][metric]))
        if len(p.eps_list) >= ORDER_FIT_POINTS:
            order = sweep["orders"]["overlap_deficit"]
            rows.append(at_least("overlap_deficit_order", order if order is not None else 0.0,
                                 p.min_overlap_order))

    write_rows_csv(ctx.path("sweep.csv"), sweep["rows"], SWEEP_COLUMNS)
    summary = {
        "E0": gs.E0,
        "quartic": gs.quartic,
        "b": p.b,
        "t_final": p.t_final,
        "per_eps": [{k: item[k] for k in ("eps", "dt", "steps", "final", "sup")}
                    for item in sweep["per_eps"]],
        "monotone": sweep["monotone"],
        "orders": sweep["orders"],
    }
    for metric in METRICS:
        if sweep["orders"][metric] is not None:
            logger.info(f"{metric}: fitted order {sweep['orders'][metric]:.3f} in eps at t={p.t_final:g}")
    return CommandOutcome(rows, summary)
