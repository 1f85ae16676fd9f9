import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np
import scipy.fft

from quasi2d.checks import loglog_slope
from quasi2d.errors import InputError, NumericalError
from quasi2d.services.nls2d import (
    ComplexField2D,
    EffectiveHamiltonianSpec,
    NLS2DSolver,
    torus_axis,
    wave_numbers,
)
from quasi2d.services.transverse import (
    ConfinementPotential,
    TransverseGroundState,
    TransverseService,
)
from quasi2d.sweeps import run_sweep

logger = logging.getLogger(__name__)

MIN_POINTS_PER_EPS = 8
METRICS = ("density_gap", "overlap_deficit", "energy_gap")
# Metrics whose end-of-horizon values must fall strictly as eps shrinks.
DECREASING = ("density_gap", "overlap_deficit")
# Metric values below this are treated as machine zero in the sweep summary.
MACHINE_ZERO = 1e-12


class ReductionError(NumericalError):
    pass


def restrict_to_plane(Vpar: Optional[Callable]) -> Optional[Callable]:
    """V_par(t, x1, x2, y) -> V_par(t, x1, x2, 0)."""
    if Vpar is None:
        return None
    return lambda t, x1, x2: Vpar(t, x1, x2, 0.0)


@dataclass(frozen=True)
class Grid3D:
    n: int
    box: float
    ny: int
    ly: float

    def __post_init__(self):
        if self.n < 2 or self.ny < 2 or self.box <= 0 or self.ly <= 0:
            raise InputError(f"invalid 3D grid {self}")

    @classmethod
    def for_eps(cls, n: int, box: float, eps: float, points_per_eps: int = 16,
                width_factor: float = 12.0) -> "Grid3D":
        ny = int(round(points_per_eps * width_factor))
        return cls(n, box, ny, width_factor * eps)

    @property
    def dx(self) -> float:
        return self.box / self.n

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def x(self) -> np.ndarray:
        return torus_axis(self.n, self.box)

    @property
    def y(self) -> np.ndarray:
        return torus_axis(self.ny, self.ly)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, self.y, indexing="ij")


@dataclass
class ComplexField3D:
    values: np.ndarray
    grid: Grid3D

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        g = self.grid
        if self.values.shape != (g.n, g.n, g.ny):
            raise InputError(f"field shape {self.values.shape} does not match grid {g}")

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def mass(self) -> float:
        return float(np.sum(self.density()) * self.grid.dx**2 * self.grid.dy)

    def marginal(self) -> np.ndarray:
        """x-marginal of the density, integral of |psi|^2 over y."""
        return np.sum(self.density(), axis=2) * self.grid.dy

    def copy(self) -> "ComplexField3D":
        return ComplexField3D(self.values.copy(), self.grid)


@dataclass
class ReductionMetrics:
    density_gap: float
    overlap_deficit: float
    energy_gap: float

    def to_dict(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}


@dataclass
class ReductionSetup:
    """Parameters of one epsilon sweep."""

    eps_list: list
    n: int = 32
    box: float = 16.0
    width: float = 1.0
    t_final: float = 1.0
    b: float = 1.0
    dt_factor: float = 0.5
    dt_max: float = 0.01
    points_per_eps: int = 16
    width_factor: float = 12.0
    samples: int = 10
    confinement: ConfinementPotential = field(default_factory=ConfinementPotential.harmonic)
    Vpar: Optional[Callable] = None
    zero_coupling: bool = False
    energy_shift: bool = True

    def time_step(self, eps: float) -> tuple[float, int]:
        """dt <= min(dt_max, dt_factor*eps^2), adjusted to divide t_final."""
        target = min(self.dt_max, self.dt_factor * eps * eps)
        steps = max(1, int(math.ceil(self.t_final / target - 1e-9)))
        return self.t_final / steps, steps


class ReductionService:
    """Confined 3D one-body NLS against the effective 2D equation."""

    def __init__(self, transverse: Optional[TransverseService] = None, workers: int = 1,
                 max_gap_phase: float = 1.0, blowup_density: float = 1e12):
        self.transverse = transverse or TransverseService()
        self.workers = workers
        self.max_gap_phase = max_gap_phase
        self.blowup_density = blowup_density

    # -- construction ---------------------------------------------------------

    def transverse_profile(self, gs: TransverseGroundState, eps: float, grid: Grid3D) -> np.ndarray:
        if eps / grid.dy < MIN_POINTS_PER_EPS:
            raise InputError(
                f"y grid resolves eps={eps} with {eps / grid.dy:.1f} points, "
                f"need at least {MIN_POINTS_PER_EPS}"
            )
        chi = self.transverse.rescale(gs, eps, grid.y)
        return chi / math.sqrt(float(np.sum(chi * chi)) * grid.dy)

    def build_confined_initial(self, phi0: ComplexField2D, gs: TransverseGroundState,
                               eps: float, grid: Grid3D) -> ComplexField3D:
        if phi0.n != grid.n or abs(phi0.box - grid.box) > 1e-12 * grid.box:
            raise InputError("2D field and 3D grid disagree in the x directions")
        chi = self.transverse_profile(gs, eps, grid)
        psi = ComplexField3D(phi0.values[:, :, None] * chi[None, None, :], grid)
        return ComplexField3D(psi.values / math.sqrt(psi.mass()), grid)

    def transverse_hamiltonian(self, Vperp: ConfinementPotential, eps: float, grid: Grid3D,
                               E0: float = 0.0) -> np.ndarray:
        """-d^2/dy^2 (spectral, periodic) + eps^-2 V_perp(y/eps) - E0/eps^2 as a dense matrix."""
        ky = wave_numbers(grid.ny, grid.ly)
        eye = np.eye(grid.ny)
        second = np.real(scipy.fft.ifft(-(ky**2)[:, None] * scipy.fft.fft(eye, axis=0), axis=0))
        h = -second
        h = 0.5 * (h + h.T)
        h[np.diag_indices(grid.ny)] += (Vperp(grid.y / eps) - E0) / eps**2
        return h

    def transverse_propagator(self, Vperp: ConfinementPotential, eps: float, grid: Grid3D,
                              dt: float, E0: float = 0.0) -> np.ndarray:
        lam, vec = np.linalg.eigh(self.transverse_hamiltonian(Vperp, eps, grid, E0))
        return (vec * np.exp(-1j * dt * lam)) @ vec.T

    # -- propagation ------------------------------------------------------------

    def _potential(self, Vpar: Optional[Callable], t: float, grid: Grid3D, mesh) -> np.ndarray:
        if Vpar is None:
            return np.zeros((grid.n, grid.n, grid.ny))
        X1, X2, Y = mesh
        return np.broadcast_to(np.asarray(Vpar(t, X1, X2, Y), dtype=float), X1.shape)

    def make_stepper(self, grid: Grid3D, dt: float, eps: float, g: float,
                     Vperp: ConfinementPotential, Vpar: Optional[Callable] = None,
                     E0: float = 0.0) -> Callable:
        if dt <= 0:
            raise InputError(f"dt must be positive, got {dt}")
        if g < 0:
            raise InputError(f"g must be non-negative, got {g}")
        if dt / eps**2 > self.max_gap_phase:
            raise InputError(
                f"dt/eps^2 = {dt / eps**2:.3g} exceeds {self.max_gap_phase}; "
                f"use dt <= {self.max_gap_phase * eps**2:.3g}"
            )
        U = self.transverse_propagator(Vperp, eps, grid, dt, E0)
        UT = np.ascontiguousarray(U.T)
        k = wave_numbers(grid.n, grid.box)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        kinetic = np.exp(-1j * dt * (K1**2 + K2**2))[:, :, None]
        mesh = grid.mesh() if Vpar is not None else None
        shape = (grid.n, grid.n, grid.ny)

        def step(psi: np.ndarray, t: float) -> np.ndarray:
            v = self._potential(Vpar, t + 0.5 * dt, grid, mesh)
            psi = psi * np.exp(-0.5j * dt * (v + g * np.abs(psi) ** 2))
            psi = scipy.fft.ifft2(kinetic * scipy.fft.fft2(psi, axes=(0, 1), workers=self.workers),
                                  axes=(0, 1), workers=self.workers)
            psi = (psi.reshape(-1, grid.ny) @ UT).reshape(shape)
            psi = psi * np.exp(-0.5j * dt * (v + g * np.abs(psi) ** 2))
            if not np.all(np.isfinite(psi)) or float(np.max(np.abs(psi) ** 2)) > self.blowup_density:
                raise ReductionError(f"non-finite or exploding 3D field at t={t + dt:.6g}")
            return psi

        return step

    def evolve3d(self, psi0: ComplexField3D, t_final: float, dt: float, eps: float, g: float,
                 Vperp: ConfinementPotential, Vpar: Optional[Callable] = None,
                 E0: Optional[float] = None, energy_shift: bool = True) -> dict:
        """Strang steps for i d_t psi = (-Laplace + eps^-2 V_perp(y/eps) - E0/eps^2 + V_par + g|psi|^2) psi."""
        steps = int(round(t_final / dt))
        if t_final < 0 or abs(steps * dt - t_final) > 1e-9 * max(t_final, dt):
            raise InputError(f"t_final={t_final} is not a non-negative multiple of dt={dt}")
        if energy_shift and E0 is None:
            E0 = self.transverse.solve_ground_state(Vperp).E0
        shift = E0 if energy_shift else 0.0

        step = self.make_stepper(psi0.grid, dt, eps, g, Vperp, Vpar, shift)
        psi = psi0.values.copy()
        masses = [psi0.mass()]
        for i in range(steps):
            psi = step(psi, i * dt)
        final = ComplexField3D(psi, psi0.grid)
        masses.append(final.mass())
        logger.info(f"3D propagation finished: eps={eps:g}, {steps} steps, "
                    f"mass drift {abs(masses[-1] - masses[0]):.2e}")
        return {"final": final, "steps": steps, "mass": masses}

    # -- comparison ---------------------------------------------------------------

    def energy3d(self, psi: ComplexField3D, t: float, eps: float, g: float,
                 Vperp: ConfinementPotential, Vpar: Optional[Callable], E0: float) -> float:
        grid = psi.grid
        dvol = grid.dx**2 * grid.dy
        kx = wave_numbers(grid.n, grid.box)
        ky = wave_numbers(grid.ny, grid.ly)
        K1, K2, KY = np.meshgrid(kx, kx, ky, indexing="ij")
        spectrum = np.abs(scipy.fft.fftn(psi.values, workers=self.workers)) ** 2
        kinetic = float(np.sum((K1**2 + K2**2 + KY**2) * spectrum)) * dvol / psi.values.size
        rho = psi.density()
        confinement = (Vperp(grid.y / eps) - E0) / eps**2
        potential = float(np.sum(rho * confinement[None, None, :])) * dvol
        if Vpar is not None:
            potential += float(np.sum(rho * self._potential(Vpar, t, grid, grid.mesh()))) * dvol
        interaction = 0.5 * g * float(np.sum(rho * rho)) * dvol
        return kinetic + potential + interaction

    def reduce_and_compare(self, psi: ComplexField3D, phi: ComplexField2D,
                           gs: TransverseGroundState, eps: float, b: float,
                           Vperp: ConfinementPotential, t: float = 0.0,
                           Vpar: Optional[Callable] = None,
                           g: Optional[float] = None) -> ReductionMetrics:
        grid = psi.grid
        if phi.n != grid.n or abs(phi.box - grid.box) > 1e-12 * grid.box:
            raise InputError(
                f"grid mismatch: 2D field n={phi.n}, box={phi.box}; 3D grid n={grid.n}, box={grid.box}"
            )
        g = b * eps / gs.quartic if g is None else g
        dx2 = grid.dx**2

        density_gap = float(np.sum(np.abs(psi.marginal() - phi.density()))) * dx2
        chi = self.transverse_profile(gs, eps, grid)
        projected = np.tensordot(psi.values, chi, axes=([2], [0])) * grid.dy
        overlap_deficit = max(0.0, 1.0 - float(np.sum(np.abs(projected) ** 2)) * dx2)

        e_psi = self.energy3d(psi, t, eps, g, Vperp, Vpar, gs.E0)
        spec = EffectiveHamiltonianSpec(b, restrict_to_plane(Vpar))
        e_phi = NLS2DSolver(self.workers).energy(phi, t, spec)
        return ReductionMetrics(density_gap, overlap_deficit, abs(e_psi - e_phi))

    # -- sweep ----------------------------------------------------------------------

    def run_epsilon(self, eps: float, setup: ReductionSetup,
                    gs: TransverseGroundState) -> dict:
        """Matched 2D/3D propagation at one eps with metrics at evenly spaced times."""
        dt, steps = setup.time_step(eps)
        grid = Grid3D.for_eps(setup.n, setup.box, eps, setup.points_per_eps, setup.width_factor)
        g = 0.0 if setup.zero_coupling else setup.b * eps / gs.quartic
        b = 0.0 if setup.zero_coupling else setup.b
        shift = gs.E0 if setup.energy_shift else 0.0

        phi = ComplexField2D.gaussian(setup.n, setup.box, setup.width)
        psi = self.build_confined_initial(phi, gs, eps, grid)
        solver = NLS2DSolver(self.workers)
        spec = EffectiveHamiltonianSpec(b, restrict_to_plane(setup.Vpar))
        kinetic = solver.kinetic_factor(phi, dt)
        step3d = self.make_stepper(grid, dt, eps, g, setup.confinement, setup.Vpar, shift)

        marks = sorted({int(round(k * steps / setup.samples)) for k in range(setup.samples + 1)})
        rows = []
        values = psi.values
        for i in range(steps + 1):
            if i in marks:
                current = ComplexField3D(values, grid)
                m = self.reduce_and_compare(current, phi, gs, eps, b, setup.confinement,
                                            i * dt, setup.Vpar, g)
                rows.append({"eps": eps, "t": i * dt, **m.to_dict(), "mass": current.mass()})
            if i < steps:
                values = step3d(values, i * dt)
                phi = solver.step(phi, i * dt, dt, spec, kinetic)

        final = {k: rows[-1][k] for k in METRICS}
        sup = {k: max(r[k] for r in rows) for k in METRICS}
        logger.info(
            f"eps={eps:g}: dt={dt:.3g}, steps={steps}, "
            + ", ".join(f"sup {k}={sup[k]:.3e}" for k in METRICS)
        )
        return {"eps": eps, "dt": dt, "steps": steps, "rows": rows, "final": final, "sup": sup}

    def epsilon_sweep(self, setup: ReductionSetup, gs: Optional[TransverseGroundState] = None,
                      jobs: int = 1) -> dict:
        if not setup.eps_list:
            raise InputError("eps_list is empty")
        if any(e <= 0 for e in setup.eps_list):
            raise InputError("eps values must be positive")
        gs = gs or self.transverse.solve_ground_state(setup.confinement)
        point = partial(_epsilon_point, setup=setup, gs=gs, workers=self.workers,
                        max_gap_phase=self.max_gap_phase, blowup_density=self.blowup_density)
        results = run_sweep(point, setup.eps_list,
                            jobs=jobs, label="epsilon sweep", strict=True).results
        return summarize_sweep([results[e] for e in sorted(results, reverse=True)])


def _epsilon_point(eps: float, setup: ReductionSetup, gs: TransverseGroundState,
                   workers: int = 1, max_gap_phase: float = 1.0,
                   blowup_density: float = 1e12) -> dict:
    service = ReductionService(workers=workers, max_gap_phase=max_gap_phase,
                               blowup_density=blowup_density)
    return service.run_epsilon(eps, setup, gs)


def summarize_sweep(per_eps: list[dict]) -> dict:
    """Per-eps final and sup metrics, decrease flags and fitted orders, largest eps first.

    Decrease flags and orders use the values at the end of the horizon.
    """
    rows = [r for item in per_eps for r in item["rows"]]
    eps = [item["eps"] for item in per_eps]
    monotone, orders = {}, {}
    for k in METRICS:
        finals = [item["final"][k] for item in per_eps]
        if k in DECREASING:
            monotone[k] = all(b < a for a, b in zip(finals, finals[1:]))
        if len(finals) >= 2 and all(v > MACHINE_ZERO for v in finals):
            orders[k] = loglog_slope(eps, finals)
        else:
            orders[k] = None
    return {
        "rows": rows,
        "per_eps": [{"eps": i["eps"], "dt": i["dt"], "steps": i["steps"],
                     "final": i["final"], "sup": i["sup"]} for i in per_eps],
        "monotone": monotone,
        "orders": orders,
    }
