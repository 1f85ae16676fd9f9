import logging
import math

from quasi2d.artifacts import profile_to_csv
from quasi2d.checks import at_most
from quasi2d.handlers.base import CommandOutcome, RunContext, prefixed
from quasi2d.services.scattering import RadialProfile, ScatteringService

logger = logging.getLogger(__name__)


def soft_sphere_length(V0: float, R: float) -> float:
    """a = R(1 - tanh(kR)/(kR)) with k = sqrt(V0/2)."""
    kR = math.sqrt(0.5 * V0) * R
    return R * (1.0 - math.tanh(kR) / kR)


def scatter_command(ctx: RunContext) -> CommandOutcome:
    p = ctx.params
    service = ScatteringService()
    r_max = p.r_max or 10.0 * p.R
    w = RadialProfile.soft_sphere(p.V0, p.R, p.dr, r_max)
    sol = service.solve_zero_energy(w, r_max, p.dr)
    rows = service.solution_checks(w, sol)
    summary = service.format_solution(sol, w)

    if p.V0 > 0:
        exact = soft_sphere_length(p.V0, p.R)
        summary["a_closed_form"] = exact
        rows.append(at_most("soft_sphere_closed_form", abs(sol.a - exact) / exact, 1e-6))

    scaling = {}
    for mu in p.mu_list:
        a_mu = service.solve_zero_energy(service.scale_potential(w, mu)).a
        scaling[f"{mu:g}"] = a_mu
        if sol.a != 0.0:
            rows.append(at_most(f"scaling_law_mu={mu:g}", abs(a_mu - mu * sol.a) / abs(mu * sol.a), 1e-8))
    summary["a_mu"] = scaling

    if p.auxiliary or p.g_scaling:
        w_aux = RadialProfile.soft_sphere(p.V0, p.R, p.aux_dr, 10.0 * p.R)
        shells = {}
        for mu in p.aux_mu_list:
            U = service.construct_auxiliary(w_aux, mu, p.beta1, p.tol)
            w_mu = service.scale_potential(w_aux, mu)
            ms = service.solve_f(w_mu, U)
            rows += prefixed(f"auxiliary_mu={mu:g}", service.auxiliary_checks(w_mu, U, ms))
            shells[f"{mu:g}"] = {"rho_ratio": U.rho_ratio, "kappa": ms.kappa,
                                 "coupling": service.auxiliary_l1(U)}
        summary["auxiliary"] = shells
        if p.g_scaling:
            rows += service.verify_g_scaling(w_aux, p.beta1, p.aux_mu_list, p.tol)

    profile_to_csv(sol.j, ctx.path("j.csv"))
    logger.info(f"Scattering length a={sol.a:.10f} (born {summary['born_length']:.6f})")
    return CommandOutcome(rows, summary)
