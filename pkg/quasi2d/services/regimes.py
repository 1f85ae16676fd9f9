import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from quasi2d.errors import InputError

logger = logging.getLogger(__name__)

COVERED = "covered"
EXCLUDED_ADMISSIBILITY = "excluded_admissibility"
EXCLUDED_CONFINEMENT = "excluded_confinement"
FREE_REGIME = "free_regime"
LABELS = (FREE_REGIME, COVERED, EXCLUDED_ADMISSIBILITY, EXCLUDED_CONFINEMENT)

# Offset used by default_params to stay inside the open parameter ranges.
DEFAULT_OFFSET = 0.01
MONOTONE_TOL = 1e-12
FLAT_SLOPE = 1e-9
MIN_R_SQUARED = 0.999


@dataclass(frozen=True)
class RegimeParams:
    beta: float
    Theta: float
    Gamma: float

    def __post_init__(self):
        b, th, ga = self.beta, self.Theta, self.Gamma
        if not 0.0 < b <= 1.0:
            raise InputError(f"beta must lie in (0, 1], got {b}")
        if b < 1.0:
            if abs(ga - 1.0 / b) > 1e-12 * (1.0 / b):
                raise InputError(f"beta={b} < 1 requires Gamma = 1/beta = {1.0 / b}, got {ga}")
            if not 1.0 / b < th < 3.0 / b:
                raise InputError(f"beta={b} requires 1/beta < Theta < 3/beta, got Theta={th}")
        elif not 1.0 < ga < th <= 3.0:
            raise InputError(f"beta=1 requires 1 < Gamma < Theta <= 3, got Gamma={ga}, Theta={th}")

    @property
    def delta(self) -> float:
        return self.beta * self.Theta

    def describe(self) -> dict:
        return {"beta": self.beta, "Theta": self.Theta, "Gamma": self.Gamma, "delta": self.delta}


def default_params(beta: float) -> RegimeParams:
    if beta == 1.0:
        return RegimeParams(1.0, 3.0, 1.0 + DEFAULT_OFFSET)
    return RegimeParams(beta, 3.0 / beta - DEFAULT_OFFSET, 1.0 / beta)


def chen_holmer_nu(beta: float) -> float:
    if not 0.0 < beta < 0.4:
        raise InputError(f"the Chen-Holmer exponent is defined for beta in (0, 2/5), got {beta}")
    return max(
        (1.0 - beta) / (2.0 * beta),
        (5.0 * beta / 4.0 - 1.0 / 12.0) / (1.0 - 5.0 * beta / 2.0),
        (beta / 2.0 + 5.0 / 6.0) / (1.0 - beta),
        (beta + 1.0 / 3.0) / (1.0 - 2.0 * beta),
    )


@dataclass
class SequenceSpec:
    """(N_n, eps_n) given by two callables or by explicit pairs."""

    N_of_n: Optional[Callable[[int], float]] = None
    eps_of_n: Optional[Callable[[int], float]] = None
    pairs: list = field(default_factory=list)
    start: int = 1

    def samples(self, n_max: int) -> list[tuple[float, float]]:
        if self.pairs:
            return [(float(N), float(e)) for N, e in self.pairs[:n_max]]
        if self.N_of_n is None or self.eps_of_n is None:
            raise InputError("sequence needs N_of_n and eps_of_n, or explicit pairs")
        idx = range(self.start, self.start + n_max)
        return [(float(self.N_of_n(n)), float(self.eps_of_n(n))) for n in idx]


class RegimeService:
    def __init__(self, slack: float = 0.0):
        if slack < 0:
            raise InputError(f"margin slack must be non-negative, got {slack}")
        self.slack = slack

    @staticmethod
    def margins(N: float, eps: float, p: RegimeParams) -> tuple[float, float]:
        log_n, log_e = math.log(N), math.log(eps)
        return log_n + (p.Theta - 1.0) * log_e, log_n + (p.Gamma - 1.0) * log_e

    def classify_point(self, N: float, eps: float, p: RegimeParams) -> dict:
        if N < 1 or not 0.0 < eps < 1.0:
            raise InputError(f"need N >= 1 and 0 < eps < 1, got N={N}, eps={eps}")
        adm, conf = self.margins(N, eps, p)
        if adm >= -self.slack:
            label = EXCLUDED_ADMISSIBILITY
        elif conf <= self.slack:
            label = EXCLUDED_CONFINEMENT if p.beta == 1.0 else FREE_REGIME
        else:
            label = COVERED
        return {"adm_margin": adm, "conf_margin": conf, "label": label}

    def check_sequence(self, seq: SequenceSpec, p: RegimeParams, n_max: int) -> dict:
        if n_max < 8:
            raise InputError(f"n_max must be at least 8, got {n_max}")
        pts = seq.samples(n_max)
        if len(pts) < 8:
            raise InputError(f"sequence has only {len(pts)} samples, need 8")
        N = np.array([q[0] for q in pts])
        eps = np.array([q[1] for q in pts])
        if np.any(N <= 0) or np.any(eps <= 0):
            raise InputError("sequence values must be positive")

        risks = []
        if np.any(eps >= 1.0):
            risks.append("eps_outside_unit_interval")
        if np.any(N < 1.0):
            risks.append("N_below_one")
        if np.any(np.diff(N) <= 0):
            risks.append("N_not_increasing")
        if np.any(np.diff(eps) >= 0):
            risks.append("eps_not_decreasing")

        log_n, log_e = np.log(N), np.log(eps)
        adm = log_n + (p.Theta - 1.0) * log_e
        conf = log_n + (p.Gamma - 1.0) * log_e

        if np.ptp(log_n) == 0.0:
            raise InputError("N is constant along the sequence: nothing to fit")
        eps_exp, intercept = np.polyfit(log_n, log_e, 1)
        fitted = eps_exp * log_n + intercept
        total = float(np.sum((log_e - log_e.mean()) ** 2))
        r2 = 1.0 - float(np.sum((log_e - fitted) ** 2)) / total if total > 0 else 1.0
        if r2 < MIN_R_SQUARED:
            risks.append("not_a_power_law")

        adm_slope = float(np.polyfit(log_n, adm, 1)[0])
        conf_slope = float(np.polyfit(log_n, conf, 1)[0])
        report = {
            "admissible": self._verdict(adm, adm_slope, decreasing=True),
            "moderately_confining": self._verdict(conf, conf_slope, decreasing=False),
            "adm_exponent": adm_slope,
            "conf_exponent": conf_slope,
            "eps_exponent": float(eps_exp),
            "r_squared": r2,
            "precondition_risk": bool(risks),
            "risks": risks,
            "samples": len(pts),
        }
        if risks:
            logger.warning(f"Sequence check with precondition risks: {', '.join(risks)}")
        return report

    @staticmethod
    def _verdict(margins: np.ndarray, slope: float, decreasing: bool) -> str:
        d = np.diff(margins)
        scale = MONOTONE_TOL * max(1.0, float(np.max(np.abs(margins))))
        if not (np.all(d <= scale) or np.all(d >= -scale)):
            return "inconclusive"
        if abs(slope) <= FLAT_SLOPE:
            return "fails"
        return "holds" if (slope < 0) == decreasing else "fails"

    def region_raster(self, p: RegimeParams, N_grid, eps_grid,
                      chen_holmer: bool = False) -> list[dict]:
        N_grid = np.asarray(N_grid, dtype=float)
        eps_grid = np.asarray(eps_grid, dtype=float)
        for name, grid in (("N_grid", N_grid), ("eps_grid", eps_grid)):
            if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
                raise InputError(f"{name} must be a non-empty finite 1-d grid")
            if np.any(np.diff(grid) < 0):
                raise InputError(f"{name} must be sorted")
        nu = chen_holmer_nu(p.beta) if chen_holmer else None

        rows = []
        for N in N_grid:
            for eps in eps_grid:
                row = {"N": float(N), "eps": float(eps), **self.classify_point(N, eps, p)}
                if nu is not None:
                    row["ch_margin"] = math.log(N) + 2.0 * nu * math.log(eps)
                rows.append(row)
        counts = Counter(r["label"] for r in rows)
        logger.info(f"Raster for beta={p.beta}: {dict(sorted(counts.items()))}")
        return rows


def label_counts(rows: list[dict]) -> dict:
    counts = Counter(r["label"] for r in rows)
    return {label: counts.get(label, 0) for label in LABELS}
