import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import bisect

from quasi2d.checks import CheckResult, at_least, at_most, holds, loglog_slope
from quasi2d.errors import InputError, NumericalError

logger = logging.getLogger(__name__)

# Upward scan for the outer shell radius, in units of mu**beta1.
SHELL_SCAN_FACTOR = 1.25
SHELL_SCAN_LIMIT = 100.0
# Relative bound on |integral of (w_mu - U) f| against the integral of w_mu f.
IDENTITY_TOL = 1e-8
# Relative bound for trapezoid integrals against Numerov scattering lengths.
QUADRATURE_TOL = 1e-6
# Absolute bound on g - (1 - kappa (1 - a_mu/r)) between supp w_mu and the shell.
CORE_IDENTITY_TOL = 1e-9


class ScatteringError(NumericalError):
    pass


class BoundStateError(ScatteringError):
    """The reduced wave changes sign in the tail: the potential binds."""


class AuxiliaryConstructionError(ScatteringError):
    pass


def cell_fraction(r: np.ndarray, dr: float, lo: float, hi: float) -> np.ndarray:
    """Fraction of each grid cell [r - dr/2, r + dr/2] lying inside [lo, hi]."""
    left = np.maximum(r - 0.5 * dr, lo)
    right = np.minimum(r + 0.5 * dr, hi)
    return np.clip(right - left, 0.0, None) / dr


def grid_points(r_max: float, dr: float) -> int:
    """Number of grid points on [0, r_max]; dr has to divide r_max."""
    if dr <= 0:
        raise InputError(f"grid spacing must be positive, got dr={dr}")
    steps = r_max / dr
    if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
        raise InputError(f"dr={dr} does not divide r_max={r_max}")
    return int(round(steps)) + 1


@dataclass
class RadialProfile:
    """Spherically symmetric function sampled at r_i = i*dr."""

    samples: np.ndarray
    dr: float
    r_support: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.dr <= 0:
            raise InputError(f"dr must be positive, got {self.dr}")
        if self.r_support <= 0:
            raise InputError(f"r_support must be positive, got {self.r_support}")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("profile samples must be finite")

    @property
    def radii(self) -> np.ndarray:
        return self.dr * np.arange(self.samples.size)

    @property
    def r_max(self) -> float:
        return self.dr * (self.samples.size - 1)

    @classmethod
    def from_function(
        cls, func: Callable, r_support: float, dr: float, r_max: float
    ) -> "RadialProfile":
        r = dr * np.arange(grid_points(r_max, dr))
        values = np.where(r <= r_support, func(r), 0.0)
        return cls(values, dr, r_support)

    @classmethod
    def soft_sphere(
        cls, V0: float, R: float, dr: Optional[float] = None, r_max: Optional[float] = None
    ) -> "RadialProfile":
        dr = R / 2000 if dr is None else dr
        r_max = 10 * R if r_max is None else r_max
        r = dr * np.arange(grid_points(r_max, dr))
        return cls(V0 * cell_fraction(r, dr, -np.inf, R), dr, R)

    @classmethod
    def zero(cls, r_support: float = 1.0, dr: Optional[float] = None,
             r_max: Optional[float] = None) -> "RadialProfile":
        dr = r_support / 2000 if dr is None else dr
        r_max = 10 * r_support if r_max is None else r_max
        return cls(np.zeros(grid_points(r_max, dr)), dr, r_support)

    def on_grid(self, dr: float, n: int) -> np.ndarray:
        """Samples on the grid i*dr, i < n; zero past the stored range."""
        if abs(dr - self.dr) <= 1e-12 * dr:
            out = np.zeros(n)
            m = min(n, self.samples.size)
            out[:m] = self.samples[:m]
            return out
        logger.warning(f"Resampling profile from dr={self.dr} to dr={dr}")
        return np.interp(dr * np.arange(n), self.radii, self.samples, right=0.0)


@dataclass
class ScatteringSolution:
    u: RadialProfile
    j: RadialProfile
    a: float
    r_max: float
    slope: float


@dataclass
class AuxiliaryPotential:
    height: float
    inner_radius: float
    outer_radius: float
    beta1: float
    mu: float = 1.0
    a: float = 0.0

    def __post_init__(self):
        if not self.inner_radius < self.outer_radius:
            raise InputError("auxiliary shell needs inner_radius < outer_radius")

    @property
    def rho_ratio(self) -> float:
        return self.outer_radius / self.inner_radius

    def samples(self, r: np.ndarray, dr: float) -> np.ndarray:
        return self.height * cell_fraction(r, dr, self.inner_radius, self.outer_radius)


@dataclass
class MicroscopicStructure:
    f: RadialProfile
    g: RadialProfile
    kappa: float
    j_mu: Optional[RadialProfile] = None
    a_mu: float = 0.0
    residual_length: float = 0.0


def radial_integral(samples: np.ndarray, dr: float) -> float:
    """Integral over R^3 of a radial function, trapezoid rule in r."""
    r = dr * np.arange(samples.size)
    return float(4.0 * math.pi * trapezoid(r * r * samples, dx=dr))


def _numerov(f: np.ndarray, h: float) -> np.ndarray:
    """u'' = f u with u(0) = 0, u(h) = h.

    Stepping stops two points past the last nonzero coefficient; the rest of
    the solution is the straight line the scheme produces there.
    """
    n = f.size
    u = np.zeros(n)
    nonzero = np.flatnonzero(f)
    last = int(nonzero[-1]) if nonzero.size else 0
    stop = min(n - 1, last + 2)
    c = h * h / 12.0
    fl = f.tolist()
    u_prev, u_cur = 0.0, h
    u[1] = h
    for i in range(1, stop):
        u_next = (
            2.0 * u_cur * (1.0 + 5.0 * c * fl[i]) - u_prev * (1.0 - c * fl[i - 1])
        ) / (1.0 - c * fl[i + 1])
        u[i + 1] = u_next
        u_prev, u_cur = u_cur, u_next
    if stop < n - 1:
        step = u[stop] - u[stop - 1]
        u[stop + 1:] = u[stop] + step * np.arange(1, n - stop)
    return u


class ScatteringService:
    """Zero-energy scattering, scattering lengths and the auxiliary shell potential."""

    def __init__(self, r_max_factor: float = 10.0, points_per_support: int = 2000,
                 tail_fraction: float = 0.1):
        self.r_max_factor = r_max_factor
        self.points_per_support = points_per_support
        self.tail_fraction = tail_fraction

    # -- scattering problem -------------------------------------------------

    def solve_zero_energy(self, w: RadialProfile, r_max: Optional[float] = None,
                          dr: Optional[float] = None) -> ScatteringSolution:
        dr = w.dr if dr is None else dr
        r_max = self.r_max_factor * w.r_support if r_max is None else r_max
        if r_max <= w.r_support:
            raise InputError(f"r_max={r_max} must exceed r_support={w.r_support}")
        n = grid_points(r_max, dr)
        samples = w.on_grid(dr, n)
        r = dr * np.arange(n)

        if not np.any(samples):
            u = RadialProfile(r.copy(), dr, w.r_support)
            return ScatteringSolution(u, RadialProfile(np.ones(n), dr, w.r_support),
                                      0.0, r_max, 1.0)

        u = _numerov(0.5 * samples, dr)
        last = int(np.flatnonzero(samples)[-1])
        edge = max(w.r_support, (last + 0.5) * dr)
        tail_start = edge + (1.0 - self.tail_fraction) * (r_max - edge)
        tail = (r >= tail_start) & (np.arange(n) > last + 1)
        if np.count_nonzero(tail) < 2:
            raise InputError(f"r_max={r_max} leaves no tail beyond the support for the fit")
        slope, intercept = np.polyfit(r[tail], u[tail], 1)
        if slope <= 0:
            raise BoundStateError(f"non-positive tail slope {slope:.3e}: bound state present")
        a = -intercept / slope
        if a > edge:
            raise BoundStateError(
                f"tail zero crossing at r={a:.6g} beyond the support {edge:.6g}"
            )

        j = np.empty(n)
        j[1:] = u[1:] / (slope * r[1:])
        j[0] = (4.0 * j[1] - j[2]) / 3.0
        return ScatteringSolution(
            RadialProfile(u, dr, w.r_support),
            RadialProfile(j, dr, w.r_support),
            float(a), float(r_max), float(slope),
        )

    def scattering_length_integral(self, w: RadialProfile, sol: ScatteringSolution) -> float:
        """(1/8pi) * integral of w*j over R^3 on the solution grid."""
        dr = sol.j.dr
        if abs(dr - w.dr) > 1e-12 * dr:
            raise InputError(f"quadrature grid mismatch: w.dr={w.dr}, solution dr={dr}")
        samples = w.on_grid(dr, sol.j.samples.size)
        return radial_integral(samples * sol.j.samples, dr) / (8.0 * math.pi)

    def scale_potential(self, w: RadialProfile, mu: float) -> RadialProfile:
        """w_mu(r) = mu**-2 * w(r/mu); the grid is stretched with it."""
        if mu <= 0:
            raise InputError(f"mu must be positive, got {mu}")
        return RadialProfile(w.samples / mu**2, w.dr * mu, w.r_support * mu)

    def l1_norm(self, w: RadialProfile) -> float:
        return radial_integral(w.samples, w.dr)

    def born_length(self, w: RadialProfile) -> float:
        return self.l1_norm(w) / (8.0 * math.pi)

    # -- auxiliary potential --------------------------------------------------

    def signed_profile(self, w_mu: RadialProfile, height: float, inner: float,
                       outer: float, r_max: float) -> RadialProfile:
        """Samples of w_mu - U on [0, r_max] for the shell (inner, outer]."""
        dr = w_mu.dr
        n = grid_points(r_max, dr)
        r = dr * np.arange(n)
        samples = w_mu.on_grid(dr, n) - height * cell_fraction(r, dr, inner, outer)
        return RadialProfile(samples, dr, max(w_mu.r_support, outer + 0.5 * dr))

    def residual_length(self, w_mu: RadialProfile, height: float, inner: float,
                        outer: float, r_max: Optional[float] = None) -> float:
        """Scattering length of w_mu - U; a binding trial returns -r_max."""
        dr = w_mu.dr
        if r_max is None:
            r_max = dr * math.ceil(2.0 * outer / dr)
        prof = self.signed_profile(w_mu, height, inner, outer, r_max)
        try:
            return self.solve_zero_energy(prof, r_max, dr).a
        except BoundStateError:
            return -r_max

    def construct_auxiliary(self, w: RadialProfile, mu: float, beta1: float,
                            tol: float = 1e-8) -> AuxiliaryPotential:
        if not 1.0 / 3.0 < beta1 < 1.0:
            raise InputError(f"beta1 must lie in (1/3, 1), got {beta1}")
        if mu <= 0 or tol <= 0:
            raise InputError(f"mu and tol must be positive, got mu={mu}, tol={tol}")
        a = self.solve_zero_energy(w).a
        inner = mu**beta1
        if mu * a >= inner:
            raise InputError(
                f"mu*a={mu * a:.3e} must be below mu**beta1={inner:.3e}; choose a smaller mu"
            )
        if a == 0.0:
            return AuxiliaryPotential(0.0, inner, inner * (1.0 + tol), beta1, mu, 0.0)

        w_mu = self.scale_potential(w, mu)
        a_mu = mu * a
        height = a * mu ** (1.0 - 3.0 * beta1)
        dr = w_mu.dr

        lo = inner * (1.0 + 1e-6)
        a_lo = self.residual_length(w_mu, height, inner, lo)
        if a_lo <= 0:
            raise AuxiliaryConstructionError(
                f"no sign change: residual length {a_lo:.3e} at the inner radius"
            )
        hi = lo
        while True:
            hi *= SHELL_SCAN_FACTOR
            if hi > SHELL_SCAN_LIMIT * inner:
                raise AuxiliaryConstructionError(
                    f"no sign change of the residual length up to {SHELL_SCAN_LIMIT}*mu^beta1"
                )
            a_hi = self.residual_length(w_mu, height, inner, hi)
            if a_hi <= 0:
                break
            lo, a_lo = hi, a_hi

        r_max = dr * math.ceil(2.0 * hi / dr)
        rho = bisect(
            lambda x: self.residual_length(w_mu, height, inner, x, r_max),
            lo, hi, xtol=1e-15 * inner, maxiter=200,
        )
        residual = self.residual_length(w_mu, height, inner, rho, r_max)
        if abs(residual) > tol * a_mu:
            raise AuxiliaryConstructionError(
                f"bisection stalled: residual length {residual:.3e} > {tol:.1e}*a_mu"
            )
        logger.info(
            f"Auxiliary shell for mu={mu:g}, beta1={beta1:g}: rho/mu^beta1={rho / inner:.6f}, "
            f"residual={residual / a_mu:.2e}*a_mu"
        )
        return AuxiliaryPotential(float(height), float(inner), float(rho), beta1, mu, float(a))

    def auxiliary_l1(self, U: AuxiliaryPotential) -> float:
        """mu**-1 times the integral of U over R^3."""
        shell = U.outer_radius**3 - U.inner_radius**3
        return 4.0 * math.pi / 3.0 * U.height * shell / U.mu

    def solve_f(self, w_mu: RadialProfile, U: AuxiliaryPotential) -> MicroscopicStructure:
        dr = w_mu.dr
        r_max = dr * math.ceil(2.0 * U.outer_radius / dr)
        n = grid_points(r_max, dr)
        r = dr * np.arange(n)

        if U.height == 0.0:
            ones = np.ones(n)
            return MicroscopicStructure(
                RadialProfile(ones, dr, U.outer_radius),
                RadialProfile(np.zeros(n), dr, U.outer_radius),
                1.0, RadialProfile(ones.copy(), dr, U.outer_radius), 0.0, 0.0,
            )

        signed = self.signed_profile(w_mu, U.height, U.inner_radius, U.outer_radius, r_max)
        sol = self.solve_zero_energy(signed, r_max, dr)
        j_mu = self.solve_zero_energy(w_mu, r_max, dr)

        f = sol.j.samples.copy()
        f[r >= U.outer_radius] = 1.0

        core = (np.arange(n) >= 1) & (r + 0.5 * dr <= U.inner_radius)
        ratio = f[core] / j_mu.j.samples[core]
        spread = float(np.std(ratio) / np.mean(ratio))
        if spread > 1e-6:
            raise AuxiliaryConstructionError(
                f"f/j_mu varies on the core (relative spread {spread:.2e})"
            )
        i_star = int(round(0.5 * U.inner_radius / dr))
        kappa = float(f[i_star] / j_mu.j.samples[i_star])

        return MicroscopicStructure(
            RadialProfile(f, dr, U.outer_radius),
            RadialProfile(1.0 - f, dr, U.outer_radius),
            kappa,
            j_mu.j,
            j_mu.a,
            sol.a,
        )

    # -- checks ---------------------------------------------------------------

    def auxiliary_checks(self, w_mu: RadialProfile, U: AuxiliaryPotential,
                         ms: MicroscopicStructure, identity_tol: float = IDENTITY_TOL,
                         quad_tol: float = QUADRATURE_TOL, rho_bound: float = 10.0) -> list[CheckResult]:
        dr = ms.f.dr
        n = ms.f.samples.size
        r = dr * np.arange(n)
        w_s = w_mu.on_grid(dr, n)
        u_s = U.samples(r, dr)
        f = ms.f.samples
        wf = radial_integral(w_s * f, dr)
        uf = radial_integral(u_s * f, dr)
        rows = [
            at_most("auxiliary_identity_residual", abs(wf - uf) / abs(wf) if wf else abs(uf),
                    identity_tol),
            at_most("rho_over_inner_radius", U.rho_ratio, rho_bound),
            holds("f_at_least_j_mu", bool(np.all(f >= ms.j_mu.samples - 1e-12)),
                  float(np.min(f - ms.j_mu.samples))),
            holds("f_non_decreasing", bool(np.all(np.diff(f) >= -1e-12)),
                  float(np.min(np.diff(f)))),
            holds("f_non_negative", bool(np.all(f >= 0.0)), float(np.min(f))),
        ]
        if U.height > 0:
            upper = U.inner_radius / (U.inner_radius - U.mu * U.a)
            rows.append(holds("kappa_in_bounds", 1.0 < ms.kappa < upper, ms.kappa))
            target = ms.kappa * 8.0 * math.pi * ms.a_mu
            rows.append(at_most("uf_equals_kappa_8pi_a_mu", abs(uf - target) / target, quad_tol))
            rows.append(at_most("core_identity", self.core_identity_deviation(w_s, U, ms),
                                CORE_IDENTITY_TOL))
        return rows

    def core_identity_deviation(self, w_samples: np.ndarray, U: AuxiliaryPotential,
                                ms: MicroscopicStructure) -> float:
        """max |g - (1 - kappa (1 - a_mu/r))| between the support of w_mu and the shell."""
        dr = ms.g.dr
        r = ms.g.radii
        nonzero = np.flatnonzero(w_samples)
        first = int(nonzero[-1]) + 2 if nonzero.size else 1
        gap = (np.arange(r.size) >= first) & (r + 0.5 * dr <= U.inner_radius)
        if not np.any(gap):
            return 0.0
        expected = 1.0 - ms.kappa * (1.0 - ms.a_mu / r[gap])
        return float(np.max(np.abs(ms.g.samples[gap] - expected)))

    def verify_g_scaling(self, w: RadialProfile, beta1: float, mu_list: list,
                         tol: float = 1e-8, ratio_bound: float = 10.0) -> list[CheckResult]:
        mus = sorted((float(m) for m in mu_list), reverse=True)
        if len(mus) < 4 or mus[0] / mus[-1] < 10.0:
            raise InputError("mu_list needs at least 4 values spanning a decade")

        norms, sups = [], []
        for mu in mus:
            U = self.construct_auxiliary(w, mu, beta1, tol)
            ms = self.solve_f(self.scale_potential(w, mu), U)
            g = ms.g.samples
            r = ms.g.radii
            norms.append(math.sqrt(radial_integral(g * g, ms.g.dr)))
            sups.append(float(np.max(np.abs(g) * r)) / mu)
            logger.info(f"g scaling: mu={mu:g} |g|_2={norms[-1]:.6e}")

        if not any(norms):
            return [
                holds("g_l2_slope", True, 0.0),
                holds("g_times_r_over_mu_ratio", True, 1.0),
            ]
        slope = loglog_slope(mus, norms)
        ratio = max(sups) / min(sups)
        return [
            at_least("g_l2_slope", slope, 1.0 + beta1 / 2.0 - 0.05),
            at_most("g_times_r_over_mu_ratio", ratio, ratio_bound),
        ]

    def solution_checks(self, w: RadialProfile, sol: ScatteringSolution) -> list[CheckResult]:
        r = sol.j.radii
        edge = w.r_support
        tail = r > edge + 0.5 * sol.j.dr
        rows = []
        if np.any(tail):
            dev = np.max(np.abs(sol.j.samples[tail] - (1.0 - sol.a / r[tail])))
            rows.append(at_most("tail_law", dev, 10.0 * sol.j.dr**2))
        if sol.a != 0.0:
            integral = self.scattering_length_integral(w, sol)
            rows.append(at_most("integral_consistency", abs(integral - sol.a) / abs(sol.a), QUADRATURE_TOL))
        if np.all(w.samples >= 0):
            j = sol.j.samples
            rows.append(holds("j_monotone", bool(np.all(np.diff(j) >= -1e-14)),
                              float(np.min(np.diff(j)))))
            rows.append(holds("j_in_unit_interval",
                              bool(np.all(j >= 0.0) and np.all(j <= 1.0 + 1e-14))))
        return rows

    def format_solution(self, sol: ScatteringSolution, w: Optional[RadialProfile] = None) -> dict:
        summary = {"a": sol.a, "r_max": sol.r_max, "dr": sol.j.dr}
        if w is not None:
            summary["born_length"] = self.born_length(w)
        return summary
