import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft
import scipy.integrate

from quasi2d.checks import CheckResult, at_most, holds
from quasi2d.errors import InputError, NumericalError

logger = logging.getLogger(__name__)

# dt * max|V + b|phi|^2| above this triggers a warning.
PHASE_RECOMMENDATION = 0.5
BLOWUP_DENSITY = 1e12


class NLSError(NumericalError):
    pass


def torus_axis(n: int, box: float) -> np.ndarray:
    return -0.5 * box + (box / n) * np.arange(n)


def wave_numbers(n: int, box: float) -> np.ndarray:
    return 2.0 * math.pi * np.fft.fftfreq(n, d=box / n)


@dataclass
class ComplexField2D:
    values: np.ndarray
    box: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise InputError(f"field must be a square n x n array, got shape {self.values.shape}")
        if self.box <= 0:
            raise InputError(f"box must be positive, got {self.box}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return self.box / self.n

    @property
    def axis(self) -> np.ndarray:
        return torus_axis(self.n, self.box)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def mass(self) -> float:
        return float(np.sum(self.density()) * self.dx**2)

    def normalized(self) -> "ComplexField2D":
        m = self.mass()
        if m <= 0:
            raise InputError("cannot normalise a zero field")
        return ComplexField2D(self.values / math.sqrt(m), self.box)

    def copy(self) -> "ComplexField2D":
        return ComplexField2D(self.values.copy(), self.box)

    @classmethod
    def gaussian(cls, n: int, box: float, width: float = 1.0,
                 center: Sequence[float] = (0.0, 0.0),
                 momentum: Sequence[float] = (0.0, 0.0)) -> "ComplexField2D":
        """Normalised Gaussian with second moment <|x - center|^2> = width**2."""
        if width <= 0:
            raise InputError(f"width must be positive, got {width}")
        x = torus_axis(n, box)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        r2 = (X1 - center[0]) ** 2 + (X2 - center[1]) ** 2
        phase = np.exp(1j * (momentum[0] * X1 + momentum[1] * X2))
        return cls(np.exp(-0.5 * r2 / width**2) * phase, box).normalized()

    @classmethod
    def plane_wave(cls, n: int, box: float, mode: Sequence[int] = (0, 0)) -> "ComplexField2D":
        """exp(i k.x)/box with k = 2 pi mode / box."""
        x = torus_axis(n, box)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        k1, k2 = (2.0 * math.pi * m / box for m in mode)
        return cls(np.exp(1j * (k1 * X1 + k2 * X2)) / box, box)

    @classmethod
    def constant(cls, n: int, box: float, c: complex) -> "ComplexField2D":
        return cls(np.full((n, n), complex(c)), box)


@dataclass
class EffectiveHamiltonianSpec:
    """h(t) = -Laplace + V_par(t, x) + b|phi|^2 on the torus.

    Vpar is called as Vpar(t, x1, x2) on mesh arrays and must broadcast.
    """

    b: float = 0.0
    Vpar: Optional[Callable] = None
    dVdt: Optional[Callable] = None

    def potential(self, t: float, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
        if self.Vpar is None:
            return np.zeros_like(X1)
        return np.broadcast_to(np.asarray(self.Vpar(t, X1, X2), dtype=float), X1.shape)

    def time_derivative(self, t: float, X1: np.ndarray, X2: np.ndarray,
                        h: float = 1e-5) -> np.ndarray:
        if self.dVdt is not None:
            return np.broadcast_to(np.asarray(self.dVdt(t, X1, X2), dtype=float), X1.shape)
        if self.Vpar is None:
            return np.zeros_like(X1)
        return (self.potential(t + h, X1, X2) - self.potential(t - h, X1, X2)) / (2.0 * h)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    final: Optional[ComplexField2D] = None
    steps: int = 0

    def rows(self) -> list[dict]:
        names = sorted(self.series)
        return [{"t": t, **{k: self.series[k][i] for k in names}} for i, t in enumerate(self.times)]


class NLS2DSolver:
    """Strang split-step propagation of i d_t phi = h(t) phi."""

    def __init__(self, workers: int = 1, blowup_density: float = BLOWUP_DENSITY):
        self.workers = workers
        self.blowup_density = blowup_density
        self._warned = False

    def _fft(self, values: np.ndarray) -> np.ndarray:
        return scipy.fft.fft2(values, workers=self.workers)

    def _ifft(self, values: np.ndarray) -> np.ndarray:
        return scipy.fft.ifft2(values, workers=self.workers)

    def kinetic_factor(self, phi: ComplexField2D, dt: float) -> np.ndarray:
        k = wave_numbers(phi.n, phi.box)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        return np.exp(-1j * dt * (K1**2 + K2**2))

    def step(self, phi: ComplexField2D, t: float, dt: float, spec: EffectiveHamiltonianSpec,
             kinetic: Optional[np.ndarray] = None) -> ComplexField2D:
        if dt < 0:
            raise InputError(f"dt must be non-negative, got {dt}")
        if dt == 0:
            return phi.copy()
        X1, X2 = phi.mesh()
        v = spec.potential(t + 0.5 * dt, X1, X2)
        psi = phi.values

        local = v + spec.b * np.abs(psi) ** 2
        if not self._warned and dt * float(np.max(np.abs(local))) >= PHASE_RECOMMENDATION:
            logger.warning(
                f"dt*max|V + b|phi|^2| = {dt * float(np.max(np.abs(local))):.3g} "
                f"exceeds {PHASE_RECOMMENDATION}; consider a smaller dt"
            )
            self._warned = True
        psi = psi * np.exp(-0.5j * dt * local)
        if kinetic is None:
            kinetic = self.kinetic_factor(phi, dt)
        psi = self._ifft(kinetic * self._fft(psi))
        psi = psi * np.exp(-0.5j * dt * (v + spec.b * np.abs(psi) ** 2))

        if not np.all(np.isfinite(psi)) or float(np.max(np.abs(psi) ** 2)) > self.blowup_density:
            raise NLSError(f"non-finite or exploding field at t={t + dt:.6g}")
        return ComplexField2D(psi, phi.box)

    def kinetic_energy(self, phi: ComplexField2D) -> float:
        k = wave_numbers(phi.n, phi.box)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        spectrum = np.abs(self._fft(phi.values)) ** 2
        return float(np.sum((K1**2 + K2**2) * spectrum) * phi.dx**2 / phi.n**2)

    def energy(self, phi: ComplexField2D, t: float, spec: EffectiveHamiltonianSpec) -> float:
        X1, X2 = phi.mesh()
        rho = phi.density()
        potential = float(np.sum(spec.potential(t, X1, X2) * rho) * phi.dx**2)
        interaction = 0.5 * spec.b * float(np.sum(rho * rho) * phi.dx**2)
        return self.kinetic_energy(phi) + potential + interaction

    def power(self, phi: ComplexField2D, t: float, spec: EffectiveHamiltonianSpec) -> float:
        """<phi, d_t V_par phi>, the rate of change of the energy."""
        X1, X2 = phi.mesh()
        return float(np.sum(spec.time_derivative(t, X1, X2) * phi.density()) * phi.dx**2)

    def power_balance(self, traj: Trajectory) -> float:
        """|E(T) - E(0) - integral of the power| along a sampled trajectory."""
        missing = [name for name in ("energy", "power") if name not in traj.series]
        if missing:
            raise InputError(f"power balance needs the observers: {', '.join(missing)}")
        if len(traj.times) < 2:
            return 0.0
        work = float(scipy.integrate.simpson(traj.series["power"], x=traj.times))
        energies = traj.series["energy"]
        return abs(energies[-1] - energies[0] - work)

    def observers(self) -> dict:
        return {
            "mass": lambda phi, t, spec: phi.mass(),
            "energy": self.energy,
            "width2": width2,
            "power": self.power,
        }

    def evolve(self, phi0: ComplexField2D, t_final: float, dt: float,
               spec: EffectiveHamiltonianSpec, observers: Sequence[str] = ("mass", "energy"),
               sample_every: int = 1, snapshot_every: Optional[int] = None) -> Trajectory:
        if t_final < 0 or (dt <= 0 and t_final > 0):
            raise InputError(f"need t_final >= 0 and dt > 0, got t_final={t_final}, dt={dt}")
        steps = int(round(t_final / dt)) if t_final > 0 else 0
        if steps and abs(steps * dt - t_final) > 1e-9 * t_final:
            raise InputError(f"t_final={t_final} is not a multiple of dt={dt}")
        if sample_every < 1:
            raise InputError("sample_every must be at least 1")

        table = self.observers()
        wanted = [name for name in observers if name != "density"]
        unknown = [name for name in wanted if name not in table]
        if unknown:
            raise InputError(f"unknown observers: {', '.join(unknown)}")
        if "density" in observers and snapshot_every is None:
            snapshot_every = steps or 1

        traj = Trajectory(series={name: [] for name in wanted})

        def sample(phi: ComplexField2D, t: float, i: int):
            if i % sample_every == 0 or i == steps:
                traj.times.append(t)
                for name in wanted:
                    traj.series[name].append(table[name](phi, t, spec))
            if snapshot_every and (i % snapshot_every == 0 or i == steps):
                traj.snapshots.append((t, phi.density()))

        self._warned = False
        phi = phi0.copy()
        kinetic = self.kinetic_factor(phi, dt) if steps else None
        sample(phi, 0.0, 0)
        for i in range(1, steps + 1):
            t = (i - 1) * dt
            phi = self.step(phi, t, dt, spec, kinetic)
            sample(phi, i * dt, i)

        traj.final = phi
        traj.steps = steps
        logger.info(f"2D propagation finished: {steps} steps to t={steps * dt:.6g}")
        return traj

    def spot_check_vpar(self, spec: EffectiveHamiltonianSpec, phi: ComplexField2D,
                        t_final: float, samples: int = 8, h: float = 1e-3,
                        tol: float = 1e-4) -> list[CheckResult]:
        """Finite-difference check that V_par is finite and smooth in t on the grid."""
        X1, X2 = phi.mesh()
        finite = True
        worst = 0.0
        for t in np.linspace(0.0, t_final, samples):
            v = spec.potential(t, X1, X2)
            finite = finite and bool(np.all(np.isfinite(v)))
            d_h = (spec.potential(t + h, X1, X2) - spec.potential(t - h, X1, X2)) / (2.0 * h)
            d_h2 = (spec.potential(t + 0.5 * h, X1, X2)
                    - spec.potential(t - 0.5 * h, X1, X2)) / h
            scale = 1.0 + float(np.max(np.abs(d_h2)))
            worst = max(worst, float(np.max(np.abs(d_h - d_h2))) / scale)
        return [
            holds("vpar_finite", finite),
            at_most("vpar_time_derivative_consistency", worst, tol),
        ]

    def l2_distance(self, a: ComplexField2D, b: ComplexField2D) -> float:
        return float(np.sqrt(np.sum(np.abs(a.values - b.values) ** 2)) * a.dx)

    def strang_ratio(self, phi0: ComplexField2D, spec: EffectiveHamiltonianSpec,
                     t_final: float, dt: float, refine: int = 8) -> float:
        """err(dt) / err(dt/2) against a dt/(2*refine) reference; about 4 for a second-order scheme."""
        final = {}
        for h in (dt, 0.5 * dt, 0.5 * dt / refine):
            final[h] = self.evolve(phi0, t_final, h, spec, observers=(), sample_every=10**9).final
        ref = final[0.5 * dt / refine]
        coarse = self.l2_distance(final[dt], ref)
        fine = self.l2_distance(final[0.5 * dt], ref)
        if fine == 0.0:
            raise NLSError("fine and reference runs coincide; no convergence ratio")
        logger.info(f"Strang errors {coarse:.3e} (dt={dt:g}), {fine:.3e} (dt={0.5 * dt:g})")
        return coarse / fine


def width2(phi: ComplexField2D, t: float = 0.0, spec: Optional[EffectiveHamiltonianSpec] = None) -> float:
    """Second moment <|x - <x>|^2> of the normalised density."""
    X1, X2 = phi.mesh()
    rho = phi.density()
    m = float(np.sum(rho))
    c1 = float(np.sum(X1 * rho)) / m
    c2 = float(np.sum(X2 * rho)) / m
    return float(np.sum(((X1 - c1) ** 2 + (X2 - c2) ** 2) * rho)) / m
