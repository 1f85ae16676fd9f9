"""Report rows shared by every verification routine."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class CheckResult:
    quantity: str
    value: float
    bound: Optional[float]
    passed: bool

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "value": _clean(self.value),
            "bound": _clean(self.bound),
            "pass": bool(self.passed),
        }


def _clean(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return str(x)
    return x


def at_most(quantity: str, value: float, bound: float) -> CheckResult:
    return CheckResult(quantity, float(value), float(bound), bool(value <= bound))


def at_least(quantity: str, value: float, bound: float) -> CheckResult:
    return CheckResult(quantity, float(value), float(bound), bool(value >= bound))


def holds(quantity: str, condition: bool, value: float = float("nan")) -> CheckResult:
    return CheckResult(quantity, float(value), None, bool(condition))


def all_passed(rows: list) -> bool:
    return all(r.passed for r in rows)


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(ys) against log(xs)."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
