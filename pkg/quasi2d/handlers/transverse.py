import logging
import math

from quasi2d.artifacts import write_columns_csv
from quasi2d.checks import at_most
from quasi2d.handlers.base import CommandOutcome, RunContext, confinement_from
from quasi2d.services.transverse import TransverseService, square_well_energy

logger = logging.getLogger(__name__)


def transverse_command(ctx: RunContext) -> CommandOutcome:
    p = ctx.params
    c = p.confinement
    service = TransverseService()
    gs = service.solve_ground_state(confinement_from(c), c.y_max, c.dy)
    rows = service.ground_state_checks(gs) + service.scaling_checks(gs, p.eps_list)

    if c.kind == "harmonic":
        omega = math.sqrt(c.omega2)
        rows.append(at_most("harmonic_E0", abs(gs.E0 - omega), 1e-8))
        rows.append(at_most("harmonic_quartic", abs(gs.quartic - math.sqrt(omega / (2.0 * math.pi))), 1e-8))
    else:
        exact = square_well_energy(c.depth, c.half_width)
        rows.append(at_most("square_well_E0", abs(gs.E0 - exact), 1e-2 * c.depth))

    write_columns_csv(ctx.path("chi.csv"), ("y", "value"), gs.y, gs.chi)
    summary = {**gs.summary(), "rescaled": {f"{e:g}": service.rescaled_norms(gs, e) for e in p.eps_list}}
    return CommandOutcome(rows, summary)
