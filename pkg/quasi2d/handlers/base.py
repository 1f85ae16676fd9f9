import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from quasi2d.checks import CheckResult
from quasi2d.config import ConfinementParams, Params, RunConfig
from quasi2d.services.transverse import ConfinementPotential

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    """What a command handler gets: the validated config and an output directory."""

    config: RunConfig
    params: Params
    output_dir: Path
    jobs: int = 1
    files: list = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.config.seed

    def path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return self.output_dir / name


@dataclass
class CommandOutcome:
    rows: list[CheckResult] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def confinement_from(p: ConfinementParams) -> ConfinementPotential:
    if p.kind == "square_well":
        return ConfinementPotential.square_well(p.depth, p.half_width)
    return ConfinementPotential.harmonic(p.omega2)


def prefixed(prefix: str, rows: list[CheckResult]) -> list[CheckResult]:
    return [replace(r, quantity=f"{prefix}.{r.quantity}") for r in rows]
