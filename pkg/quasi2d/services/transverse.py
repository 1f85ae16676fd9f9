import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.optimize import brentq

from quasi2d.checks import CheckResult, at_most
from quasi2d.errors import InputError, NumericalError

logger = logging.getLogger(__name__)


class TransverseError(NumericalError):
    pass


@dataclass
class ConfinementPotential:
    """V_perp on the unscaled transverse axis."""

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def harmonic(cls, omega2: float = 1.0) -> "ConfinementPotential":
        if omega2 <= 0:
            raise InputError(f"omega2 must be positive, got {omega2}")
        return cls("harmonic", {"omega2": float(omega2)})

    @classmethod
    def square_well(cls, depth: float, half_width: float) -> "ConfinementPotential":
        if depth <= 0 or half_width <= 0:
            raise InputError("square well needs positive depth and half_width")
        return cls("square_well", {"depth": float(depth), "half_width": float(half_width)})

    @classmethod
    def tabulated(cls, samples, dy: float) -> "ConfinementPotential":
        samples = np.asarray(samples, dtype=float)
        if dy <= 0 or samples.size < 2:
            raise InputError("tabulated potential needs dy > 0 and at least two samples")
        if not np.all(np.isfinite(samples)):
            raise InputError("tabulated potential must be finite (bounded negative part)")
        return cls("tabulated", {"samples": samples, "dy": float(dy)})

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "harmonic":
            return self.params["omega2"] * y * y
        if self.kind == "square_well":
            depth, w = self.params["depth"], self.params["half_width"]
            inside = np.where(np.abs(y) < w, -depth, 0.0)
            edge = np.isclose(np.abs(y), w, rtol=0.0, atol=1e-9 * w)
            return np.where(edge, -0.5 * depth, inside)
        if self.kind == "tabulated":
            samples, dy = self.params["samples"], self.params["dy"]
            grid = dy * (np.arange(samples.size) - 0.5 * (samples.size - 1))
            return np.interp(y, grid, samples)
        raise InputError(f"unknown confinement kind {self.kind!r}")

    def describe(self) -> dict:
        if self.kind == "tabulated":
            return {"kind": self.kind, "dy": self.params["dy"], "points": int(self.params["samples"].size)}
        return {"kind": self.kind, **self.params}


@dataclass
class TransverseGroundState:
    chi: np.ndarray
    dy: float
    E0: float
    quartic: float
    y_max: float
    E0_raw: float = 0.0
    quartic_raw: float = 0.0
    residual: float = 0.0

    @property
    def y(self) -> np.ndarray:
        m = self.chi.size - 1
        return self.dy * (np.arange(m + 1) - 0.5 * m)

    @property
    def norm(self) -> float:
        return math.sqrt(trapezoid(self.chi**2, dx=self.dy))

    def summary(self) -> dict:
        return {
            "E0": self.E0,
            "quartic": self.quartic,
            "y_max": self.y_max,
            "dy": self.dy,
            "E0_raw": self.E0_raw,
            "quartic_raw": self.quartic_raw,
        }


class TransverseService:
    """Lowest eigenpair of -d^2/dy^2 + V_perp with Dirichlet truncation."""

    def __init__(self, max_iter: int = 500, decay_tol: float = 1e-8, extrapolate: bool = True):
        self.max_iter = max_iter
        self.decay_tol = decay_tol
        self.extrapolate = extrapolate

    def _solve_fd(self, V: ConfinementPotential, y_max: float, dy: float):
        steps = y_max / dy
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise InputError(f"dy={dy} must divide y_max={y_max}")
        m = 2 * int(round(steps))
        y = dy * (np.arange(m + 1) - 0.5 * m)
        v = V(y[1:-1])
        shift = float(np.min(v))

        inv_h2 = 1.0 / (dy * dy)
        ab = np.empty((2, m - 1))
        ab[0, 0] = 0.0
        ab[0, 1:] = -inv_h2
        ab[1, :] = 2.0 * inv_h2 + v - shift
        factor = cholesky_banded(ab)

        x = np.exp(-0.5 * ((y[1:-1] / (0.25 * y_max)) ** 2))
        x /= np.linalg.norm(x)
        for _ in range(self.max_iter):
            x_new = cho_solve_banded((factor, False), x)
            x_new /= np.linalg.norm(x_new)
            if np.max(np.abs(x_new - x)) < 1e-12:
                x = x_new
                break
            x = x_new
        else:
            logger.warning(f"Inverse iteration did not settle in {self.max_iter} steps (dy={dy})")

        chi = np.zeros(m + 1)
        chi[1:-1] = x
        if chi.sum() < 0:
            chi = -chi
        chi /= math.sqrt(trapezoid(chi**2, dx=dy))

        kinetic = float(np.sum(np.diff(chi) ** 2) / (dy * dy))
        potential = float(np.sum(v * chi[1:-1] ** 2))
        energy = (kinetic + potential) * dy
        quartic = float(trapezoid(chi**4, dx=dy))

        interior = chi[1:-1]
        lap = (chi[2:] - 2.0 * interior + chi[:-2]) * inv_h2
        res = -lap + v * interior - energy * interior
        residual = math.sqrt(dy * float(np.sum(res * res)))
        return chi, energy, quartic, residual

    def solve_ground_state(self, V: ConfinementPotential, y_max: float = 12.0,
                           dy: float = 1e-3) -> TransverseGroundState:
        if dy <= 0 or y_max <= 0:
            raise InputError("y_max and dy must be positive")
        chi, E0, quartic, residual = self._solve_fd(V, y_max, dy)

        edge = max(abs(chi[1]), abs(chi[-2]))
        if edge >= self.decay_tol:
            raise TransverseError(
                f"ground state has |chi|={edge:.2e} at the boundary; increase y_max={y_max}"
            )
        threshold = float(min(V(np.array([-y_max]))[0], V(np.array([y_max]))[0]))
        if E0 >= threshold:
            raise TransverseError(
                f"E0={E0:.6g} is not below the continuum proxy {threshold:.6g}: no bound state"
            )

        E0_best, quartic_best = E0, quartic
        if self.extrapolate:
            _, E0_c, quartic_c, _ = self._solve_fd(V, y_max, 2.0 * dy)
            E0_best = (4.0 * E0 - E0_c) / 3.0
            quartic_best = (4.0 * quartic - quartic_c) / 3.0

        logger.info(f"Transverse ground state: E0={E0_best:.12f}, quartic={quartic_best:.12f}")
        return TransverseGroundState(
            chi, dy, float(E0_best), float(quartic_best), float(y_max),
            float(E0), float(quartic), residual,
        )

    def rescale(self, gs: TransverseGroundState, eps: float,
                y: Optional[np.ndarray] = None) -> np.ndarray:
        """chi_eps(y) = eps**-0.5 * chi(y/eps).

        Without a grid the values belong to the stretched grid eps*gs.y.
        """
        if eps <= 0:
            raise InputError(f"eps must be positive, got {eps}")
        if y is None:
            return gs.chi / math.sqrt(eps)
        s = np.asarray(y, dtype=float) / eps
        spline = CubicSpline(gs.y, gs.chi)
        inside = np.abs(s) <= gs.y_max
        return np.where(inside, spline(np.clip(s, -gs.y_max, gs.y_max)), 0.0) / math.sqrt(eps)

    def rescaled_grid(self, gs: TransverseGroundState, eps: float) -> np.ndarray:
        return eps * gs.y

    def rescaled_norms(self, gs: TransverseGroundState, eps: float) -> dict:
        y = self.rescaled_grid(gs, eps)
        v = self.rescale(gs, eps)
        grad = np.gradient(v, eps * gs.dy)
        return {
            "l2": math.sqrt(trapezoid(v * v, y)),
            "sup": float(np.max(np.abs(v))),
            "quartic": float(trapezoid(v**4, y)),
            "grad_l2": math.sqrt(trapezoid(grad * grad, y)),
            "grad_sup": float(np.max(np.abs(grad))),
        }

    def ground_state_checks(self, gs: TransverseGroundState) -> list[CheckResult]:
        return [
            at_most("chi_normalisation", abs(gs.norm - 1.0), 1e-10),
            at_most("eigenresidual", gs.residual, 10.0 * gs.dy**2),
            at_most("boundary_decay", max(abs(gs.chi[1]), abs(gs.chi[-2])), self.decay_tol),
        ]

    def scaling_checks(self, gs: TransverseGroundState, eps_list: list) -> list[CheckResult]:
        rows = []
        sup0 = float(np.max(np.abs(gs.chi)))
        for eps in eps_list:
            norms = self.rescaled_norms(gs, eps)
            rows.append(at_most(f"quartic_scaling_eps={eps:g}",
                                abs(norms["quartic"] * eps / gs.quartic_raw - 1.0), 1e-10))
            rows.append(at_most(f"sup_scaling_eps={eps:g}",
                                abs(norms["sup"] * math.sqrt(eps) / sup0 - 1.0), 1e-10))
            rows.append(at_most(f"l2_norm_eps={eps:g}", abs(norms["l2"] - 1.0), 1e-10))
        return rows


def square_well_energy(depth: float, half_width: float) -> float:
    """Even ground state of a finite well from k tan(k w) = kappa, k^2 + kappa^2 = depth."""
    k_top = min(math.sqrt(depth), math.pi / (2.0 * half_width)) * (1.0 - 1e-12)
    k = brentq(lambda k: k * math.tan(k * half_width) - math.sqrt(depth - k * k), 1e-12, k_top)
    return k * k - depth
