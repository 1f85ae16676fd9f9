import logging
from dataclasses import replace

import numpy as np

from quasi2d.artifacts import write_json, write_rows_csv
from quasi2d.checks import holds
from quasi2d.handlers.base import CommandOutcome, RunContext
from quasi2d.services.counting import (
    OCCUPATION,
    BoseHubbardToy,
    CountingService,
    ModeSpace,
    default_condensate,
)

logger = logging.getLogger(__name__)

TOY_COLUMNS = ("N", "t", "alpha_less", "trace_distance", "energy_gap")
# Particle number for comparing the toy Hamiltonian in both representations.
TOY_REPRESENTATION_N = 6


def toy_dynamics(service: CountingService, p) -> tuple[list, dict]:
    """Many-body toy against its mean-field equation for each N in toy_N."""
    t_grid = np.linspace(0.0, p.t_final, p.t_points)
    cond = default_condensate(p.toy_D)
    series, sups = [], {}
    for N in sorted(p.toy_N):
        toy = BoseHubbardToy(p.toy_D, N, p.hopping, p.interaction)
        psi0 = service.condensed(toy.space, cond, OCCUPATION)
        out = service.evolve_toy(toy, psi0, cond, t_grid, p.xi)
        series += [{"N": N, **row} for row in out["rows"]]
        sups[N] = out["sup_trace_distance"]
    return series, sups


def counting_command(ctx: RunContext) -> CommandOutcome:
    p = ctx.params
    service = CountingService(p.xi)
    space = ModeSpace(p.D, p.N)
    cond = default_condensate(p.D)

    suite = service.verify_lemma_suite(space, cond, p.xi, p.trials, ctx.seed, p.fault)
    write_json(ctx.path("lemma.json"), {"N": p.N, "D": p.D, "xi": p.xi, "trials": p.trials,
                                        "fault": p.fault, "rows": suite})
    rows = list(suite)
    rows += service.representation_checks(space, cond, seed=ctx.seed, xi=p.xi)
    rows.append(service.second_difference_exponent(p.xi))
    for N in p.equivalence_N:
        eq_space = ModeSpace(p.D, N)
        for r in service.equivalence_checks(eq_space, cond, p.equivalence_trials, ctx.seed, p.xi):
            rows.append(replace(r, quantity=f"{r.quantity}_N={N}"))
    toy = BoseHubbardToy(p.toy_D, TOY_REPRESENTATION_N, p.hopping, p.interaction)
    rows.append(service.toy_representation_check(toy, seed=ctx.seed))

    series, sups = toy_dynamics(service, p)
    write_rows_csv(ctx.path("toy_series.csv"), series, TOY_COLUMNS)
    ordered = [sups[N] for N in sorted(sups)]
    if len(ordered) > 1 and p.t_final > 0:
        rows.append(holds("toy_trace_distance_decreases_with_N",
                          all(b < a for a, b in zip(ordered, ordered[1:]))))

    summary = {"N": p.N, "D": p.D, "xi": p.xi, "fault": p.fault,
               "toy_sup_trace_distance": {str(N): s for N, s in sups.items()}}
    return CommandOutcome(rows, summary)
