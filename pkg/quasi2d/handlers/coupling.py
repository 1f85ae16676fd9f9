import logging
import math

from quasi2d.handlers.base import CommandOutcome, RunContext, confinement_from
from quasi2d.services.coupling import CouplingReport, CouplingService, InteractionFamily
from quasi2d.services.scattering import RadialProfile
from quasi2d.services.transverse import TransverseService

logger = logging.getLogger(__name__)


def coupling_command(ctx: RunContext) -> CommandOutcome:
    p = ctx.params
    c = p.confinement
    gs = TransverseService().solve_ground_state(confinement_from(c), c.y_max, c.dy)
    w = RadialProfile.soft_sphere(p.V0, p.R, p.dr, 10.0 * p.R)
    service = CouplingService()

    if p.family == "auxiliary":
        fam = InteractionFamily.auxiliary(w, p.beta, service.scattering)
    elif p.family == "auxiliary_times_f":
        fam = InteractionFamily.auxiliary_times_f(w, p.beta, service.scattering)
    else:
        fam = InteractionFamily.canonical(w, p.beta)

    membership = service.check_class_membership(fam, p.eta, p.mu_list, gs=gs)
    report = CouplingReport(
        service.b_Neps(fam, gs, p.N, p.eps),
        service.b_beta(fam.beta, fam, gs),
        {"exponent_fit": membership.fits.get("residual_exponent", math.inf), "pass": membership.passed},
    )
    rows = list(membership.rows)
    if p.family == "auxiliary_times_f":
        rows += service.b_Uf_check(w, p.uf_mu, p.beta, gs)

    logger.info(service.format_report(report))
    summary = {**report.to_dict(), "family": fam.name, "beta": fam.beta,
               "quartic": gs.quartic, "fits": membership.fits}
    return CommandOutcome(rows, summary)
