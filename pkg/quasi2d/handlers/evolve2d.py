import logging
import math

import numpy as np

from quasi2d.artifacts import write_columns_csv, write_rows_csv
from quasi2d.checks import at_most
from quasi2d.handlers.base import CommandOutcome, RunContext
from quasi2d.services.nls2d import ComplexField2D, EffectiveHamiltonianSpec, NLS2DSolver

logger = logging.getLogger(__name__)


def hamiltonian_spec(p) -> EffectiveHamiltonianSpec:
    if p.potential == "harmonic":
        return EffectiveHamiltonianSpec(p.b, lambda t, x1, x2: p.omega2 * (x1 * x1 + x2 * x2))
    if p.potential == "driven":
        return EffectiveHamiltonianSpec(
            p.b,
            lambda t, x1, x2: p.omega2 * (1.0 + p.drive * math.sin(t)) * (x1 * x1 + x2 * x2),
            lambda t, x1, x2: p.omega2 * p.drive * math.cos(t) * (x1 * x1 + x2 * x2),
        )
    return EffectiveHamiltonianSpec(p.b)


def evolve2d_command(ctx: RunContext) -> CommandOutcome:
    p = ctx.params
    spec = hamiltonian_spec(p)
    solver = NLS2DSolver(workers=ctx.jobs)
    phi0 = ComplexField2D.gaussian(p.n, p.box, p.width, momentum=p.momentum)
    observers = list(dict.fromkeys(["mass", *p.observers]))
    if p.potential == "driven":
        observers = list(dict.fromkeys([*observers, "energy", "power"]))
    traj = solver.evolve(phi0, p.t_final, p.dt, spec, observers, p.sample_every)

    masses = traj.series["mass"]
    rows = [at_most("mass_drift", abs(masses[-1] - masses[0]),
                    1e-12 * max(1.0, traj.steps / 1000.0))]
    if "energy" in traj.series and p.potential != "driven":
        energies = np.asarray(traj.series["energy"])
        rows.append(at_most("energy_drift", float(np.max(np.abs(energies - energies[0]))), p.energy_tol))
    if p.potential == "driven":
        rows += solver.spot_check_vpar(spec, phi0, p.t_final)
        rows.append(at_most("power_balance", solver.power_balance(traj), p.power_tol))

    names = sorted(traj.series)
    write_rows_csv(ctx.path("series.csv"), traj.rows(), ["t", *names])
    X1, X2 = traj.final.mesh()
    write_columns_csv(ctx.path("density.csv"), ("x1", "x2", "density"), X1, X2, traj.final.density())
    summary = {
        "steps": traj.steps,
        "final": {name: traj.series[name][-1] for name in names},
        "width2": traj.series["width2"][-1] if "width2" in traj.series else None,
    }
    return CommandOutcome(rows, summary)
