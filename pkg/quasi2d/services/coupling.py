import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from quasi2d.checks import CheckResult, all_passed, at_least, at_most, holds, loglog_slope
from quasi2d.errors import InputError, NumericalError
from quasi2d.services.scattering import (
    QUADRATURE_TOL,
    RadialProfile,
    ScatteringService,
    radial_integral,
)
from quasi2d.services.transverse import TransverseGroundState

logger = logging.getLogger(__name__)

# Residuals of b_{N,eps} below this fraction of |b| count as exact zeros.
ZERO_RESIDUAL = 1e-12
EXPONENT_SLACK = 0.05


class CouplingError(NumericalError):
    pass


def mu_of(N: float, eps: float) -> float:
    if N < 1 or eps <= 0:
        raise InputError(f"need N >= 1 and eps > 0, got N={N}, eps={eps}")
    return eps / N


def default_rule(mu: float) -> tuple[float, float]:
    """(N, eps) with eps/N = mu, N = mu**-1/2."""
    return mu**-0.5, mu**0.5


@dataclass
class InteractionFamily:
    """A family mu -> w_{mu,beta}.

    limit_density, when known in closed form, is the mu -> 0 limit of
    mu**-1 * integral(w_{mu,beta}).
    """

    base: RadialProfile
    beta: float
    rule: Optional[Callable[[float], RadialProfile]] = None
    name: str = "canonical"
    limit_density: Optional[float] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise InputError(f"beta must lie in (0, 1], got {self.beta}")

    @classmethod
    def canonical(cls, w: RadialProfile, beta: float) -> "InteractionFamily":
        return cls(w, beta)

    @classmethod
    def auxiliary(cls, w: RadialProfile, beta1: float,
                  service: Optional[ScatteringService] = None,
                  tol: float = 1e-8) -> "InteractionFamily":
        service = service or ScatteringService()
        a = service.solve_zero_energy(w).a

        def rule(mu: float) -> RadialProfile:
            U = service.construct_auxiliary(w, mu, beta1, tol)
            dr = w.dr * mu
            n = int(math.ceil(U.outer_radius / dr)) + 2
            r = dr * np.arange(n)
            return RadialProfile(U.samples(r, dr), dr, U.outer_radius)

        return cls(w, beta1, rule, "auxiliary", 8.0 * math.pi * a)

    @classmethod
    def auxiliary_times_f(cls, w: RadialProfile, beta1: float,
                          service: Optional[ScatteringService] = None,
                          tol: float = 1e-8) -> "InteractionFamily":
        service = service or ScatteringService()
        a = service.solve_zero_energy(w).a

        def rule(mu: float) -> RadialProfile:
            U = service.construct_auxiliary(w, mu, beta1, tol)
            ms = service.solve_f(service.scale_potential(w, mu), U)
            r = ms.f.radii
            samples = U.samples(r, ms.f.dr) * ms.f.samples
            return RadialProfile(samples, ms.f.dr, U.outer_radius)

        return cls(w, beta1, rule, "auxiliary_times_f", 8.0 * math.pi * a)

    def profile(self, mu: float) -> RadialProfile:
        if mu <= 0:
            raise InputError(f"mu must be positive, got {mu}")
        if mu not in self._cache:
            if self.rule is None:
                w = self.base
                self._cache[mu] = RadialProfile(
                    w.samples * mu ** (1.0 - 3.0 * self.beta),
                    w.dr * mu**self.beta,
                    w.r_support * mu**self.beta,
                )
            else:
                self._cache[mu] = self.rule(mu)
        return self._cache[mu]

    def density(self, mu: float) -> float:
        """mu**-1 times the integral of w_{mu,beta} over R^3."""
        prof = self.profile(mu)
        return radial_integral(prof.samples, prof.dr) / mu


@dataclass
class CouplingReport:
    b_Neps: float
    b_limit: float
    eta_check: dict

    def to_dict(self) -> dict:
        return {"b_Neps": self.b_Neps, "b_limit": self.b_limit, "eta_check": self.eta_check}


@dataclass
class MembershipReport:
    family: str
    eta: float
    rows: list[CheckResult]
    fits: dict

    @property
    def passed(self) -> bool:
        return all_passed(self.rows)


def support_radius(prof: RadialProfile) -> float:
    nonzero = np.flatnonzero(prof.samples)
    if nonzero.size == 0:
        return 0.0
    return (int(nonzero[-1]) + 0.5) * prof.dr


class CouplingService:
    def __init__(self, scattering: Optional[ScatteringService] = None,
                 mu_ref: float = 1e-4, stabilization_tol: float = 1e-6):
        self.scattering = scattering or ScatteringService()
        self.mu_ref = mu_ref
        self.stabilization_tol = stabilization_tol

    def b_Neps(self, fam: InteractionFamily, gs: TransverseGroundState,
               N: float, eps: float) -> float:
        return fam.density(mu_of(N, eps)) * gs.quartic

    def b_beta(self, beta: float, fam_or_a: Union[InteractionFamily, float],
               gs: TransverseGroundState) -> float:
        if not 0.0 < beta <= 1.0:
            raise InputError(f"beta must lie in (0, 1], got {beta}")
        if isinstance(fam_or_a, InteractionFamily) and fam_or_a.beta != beta:
            raise InputError(f"family has beta={fam_or_a.beta}, requested beta={beta}")

        if beta == 1.0:
            if isinstance(fam_or_a, InteractionFamily):
                a = self.scattering.solve_zero_energy(fam_or_a.base).a
            else:
                a = float(fam_or_a)
            return 8.0 * math.pi * a * gs.quartic

        if not isinstance(fam_or_a, InteractionFamily):
            raise InputError("beta < 1 needs an interaction family, not a scattering length")
        fam = fam_or_a
        if fam.limit_density is not None:
            return fam.limit_density * gs.quartic

        b1 = fam.density(self.mu_ref)
        b2 = fam.density(0.5 * self.mu_ref)
        if abs(b1 - b2) > self.stabilization_tol * abs(b1):
            raise CouplingError(
                f"b_(N,eps) has not settled at mu={self.mu_ref:g}: "
                f"{b1:.10g} vs {b2:.10g} at mu/2"
            )
        return b1 * gs.quartic

    def check_class_membership(self, fam: InteractionFamily, eta: float, mu_list: list,
                               N_eps_rule: Optional[Callable] = None,
                               gs: Optional[TransverseGroundState] = None) -> MembershipReport:
        mus = [float(m) for m in mu_list]
        if len(mus) < 4:
            raise InputError("mu_list needs at least 4 values")
        if any(b >= a for a, b in zip(mus, mus[1:])):
            raise InputError("mu_list must be strictly decreasing")
        if eta <= 0:
            raise InputError(f"eta must be positive, got {eta}")
        rule = N_eps_rule or default_rule
        quartic = gs.quartic if gs is not None else 1.0

        sups, radii, bs = [], [], []
        negative = 0.0
        for mu in mus:
            prof = fam.profile(mu)
            sups.append(float(np.max(np.abs(prof.samples))))
            radii.append(support_radius(prof))
            negative = min(negative, float(np.min(prof.samples)))
            N, eps = rule(mu)
            bs.append(fam.density(mu_of(N, eps)) * quartic)
            logger.info(f"{fam.name}: mu={mu:g} sup={sups[-1]:.6e} b={bs[-1]:.10g}")

        rows, fits = [], {}
        target = 1.0 - 3.0 * fam.beta
        if any(s > 0 for s in sups):
            slope = loglog_slope(mus, sups)
            fits["sup_exponent"] = slope
            fits["sup_constant"] = max(s * mu**-target for s, mu in zip(sups, mus))
            rows.append(at_least("sup_norm_exponent", slope, target - EXPONENT_SLACK))
        else:
            rows.append(holds("sup_norm_exponent", True, 0.0))

        rows.append(holds("non_negative", negative >= 0.0, negative))

        if all(r > 0 for r in radii):
            slope = loglog_slope(mus, radii)
            fits["support_exponent"] = slope
            rows.append(at_most("support_diameter_exponent", abs(slope - fam.beta), EXPONENT_SLACK))
        else:
            rows.append(holds("support_diameter_exponent", not any(radii), 0.0))

        limit = self.sequence_limit(fam) * quartic
        fits["b_limit"] = limit
        floor = ZERO_RESIDUAL * max(abs(limit), max(abs(b) for b in bs))
        gaps = [abs(b - limit) for b in bs]
        kept = [(mu, g * mu**-eta) for mu, g in zip(mus, gaps) if g > floor]
        if len(kept) < 2:
            fits["residual_exponent"] = math.inf
            rows.append(holds("coupling_residual_decay", True, 0.0))
        else:
            slope = loglog_slope([k[0] for k in kept], [k[1] for k in kept])
            fits["residual_exponent"] = slope
            rows.append(CheckResult("coupling_residual_decay", slope, 0.0, slope > 0.0))

        report = MembershipReport(fam.name, eta, rows, fits)
        logger.info(f"Membership of {fam.name} (beta={fam.beta}, eta={eta}): passed={report.passed}")
        return report

    def sequence_limit(self, fam: InteractionFamily) -> float:
        """mu -> 0 limit of mu**-1 * integral(w_{mu,beta}), before the quartic factor."""
        if fam.limit_density is not None:
            return fam.limit_density
        return fam.density(self.mu_ref)

    def report(self, fam: InteractionFamily, gs: TransverseGroundState, N: float, eps: float,
               eta: float, mu_list: list) -> CouplingReport:
        membership = self.check_class_membership(fam, eta, mu_list, gs=gs)
        return CouplingReport(
            self.b_Neps(fam, gs, N, eps),
            self.b_beta(fam.beta, fam, gs),
            {
                "exponent_fit": membership.fits.get("residual_exponent", math.inf),
                "pass": membership.passed,
            },
        )

    def b_Uf_check(self, w: RadialProfile, mu: float, beta1: float,
                   gs: TransverseGroundState) -> list[CheckResult]:
        U = self.scattering.construct_auxiliary(w, mu, beta1)
        ms = self.scattering.solve_f(self.scattering.scale_potential(w, mu), U)
        r = ms.f.radii
        b_uf = radial_integral(U.samples(r, ms.f.dr) * ms.f.samples, ms.f.dr) / mu * gs.quartic
        a = U.a
        b1 = 8.0 * math.pi * a * gs.quartic
        if a == 0.0:
            return [
                at_most("uf_coupling", abs(b_uf), 0.0),
                at_most("uf_gap_to_b1", abs(b_uf - b1), 0.0),
            ]
        target = ms.kappa * b1
        gap_bound = b1 * mu * a / (U.inner_radius - mu * a)
        logger.info(f"U*f coupling at mu={mu:g}: {b_uf:.10g}, kappa={ms.kappa:.10f}")
        return [
            at_most("uf_equals_kappa_b1", abs(b_uf - target) / target, QUADRATURE_TOL),
            at_most("uf_gap_to_b1", abs(b_uf - b1), gap_bound),
        ]

    def uf_gap_slope(self, w: RadialProfile, beta1: float, mu_list: list,
                     gs: TransverseGroundState) -> CheckResult:
        """Log-log slope of |b(U f) - b_1| against mu."""
        mus = sorted((float(m) for m in mu_list), reverse=True)
        if len(mus) < 4:
            raise InputError("mu_list needs at least 4 values")
        fam = InteractionFamily.auxiliary_times_f(w, beta1, self.scattering)
        b1 = self.b_beta(beta1, fam, gs)
        gaps = [abs(fam.density(mu) * gs.quartic - b1) for mu in mus]
        if not any(gaps):
            return holds("uf_gap_exponent", True, 0.0)
        slope = loglog_slope(mus, gaps)
        return at_least("uf_gap_exponent", slope, 1.0 - beta1 - EXPONENT_SLACK)

    def format_report(self, report: CouplingReport) -> str:
        status = "ok" if report.eta_check["pass"] else "FAILED"
        return (
            f"b_Neps={report.b_Neps:.10g} b_limit={report.b_limit:.10g} "
            f"eta_exponent={report.eta_check['exponent_fit']:.4g} [{status}]"
        )
