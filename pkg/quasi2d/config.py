import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from quasi2d.errors import InputError

COMMANDS = ("scatter", "transverse", "coupling", "regimes", "evolve2d", "reduce3d",
            "counting", "verify")


@dataclass
class Config:
    """Toolkit settings loaded from environment variables."""

    # Run ledger
    db_path: str = "quasi2d.db"
    ledger: bool = True

    # Output
    output_dir: str = "out"

    # Execution
    jobs: int = 1
    seed: int = 0
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "Config":
        return cls(
            db_path=os.getenv("QUASI2D_DB_PATH", "quasi2d.db"),
            ledger=os.getenv("QUASI2D_LEDGER", "1").strip().lower() not in ("0", "false", "no"),
            output_dir=os.getenv("QUASI2D_OUTPUT_DIR", "out"),
            jobs=int(os.getenv("QUASI2D_JOBS", "1")),
            seed=int(os.getenv("QUASI2D_SEED", "0")),
            log_level=os.getenv("QUASI2D_LOG_LEVEL", "INFO").upper(),
        )


class Params(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConfinementParams(Params):
    kind: Literal["harmonic", "square_well"] = "harmonic"
    omega2: float = Field(1.0, gt=0)
    depth: float = Field(4.0, gt=0)
    half_width: float = Field(1.0, gt=0)
    y_max: float = Field(12.0, gt=0)
    dy: float = Field(1e-3, gt=0)


class ScatterParams(Params):
    V0: float = 2.0
    R: float = Field(1.0, gt=0)
    dr: float = Field(1e-4, gt=0)
    r_max: Optional[float] = None
    mu_list: list[float] = [1e-1, 1e-2, 1e-3, 1e-4]
    auxiliary: bool = False
    beta1: float = 0.9
    aux_dr: float = Field(1e-3, gt=0)
    aux_mu_list: list[float] = [1e-2, 3e-3, 1e-3, 1e-4]
    g_scaling: bool = False
    tol: float = Field(1e-8, gt=0)


class TransverseParams(Params):
    confinement: ConfinementParams = ConfinementParams()
    eps_list: list[float] = [0.5, 0.1, 0.01]


class CouplingParams(Params):
    V0: float = 2.0
    R: float = Field(1.0, gt=0)
    dr: float = Field(1e-3, gt=0)
    family: Literal["canonical", "auxiliary", "auxiliary_times_f"] = "canonical"
    beta: float = Field(0.5, gt=0, le=1)
    eta: float = Field(0.1, gt=0)
    mu_list: list[float] = [1e-1, 1e-2, 1e-3, 1e-4]
    N: float = Field(1e4, ge=1)
    eps: float = Field(1e-2, gt=0, lt=1)
    uf_mu: float = Field(1e-2, gt=0)
    confinement: ConfinementParams = ConfinementParams()


class RegimesParams(Params):
    beta: float = Field(1.0, gt=0, le=1)
    Theta: Optional[float] = None
    Gamma: Optional[float] = None
    N_min: float = Field(10.0, ge=1)
    N_max: float = 1e6
    N_points: int = Field(61, ge=1)
    eps_min: float = Field(1e-4, gt=0)
    eps_max: float = Field(0.5, lt=1)
    eps_points: int = Field(61, ge=1)
    slack: float = Field(0.0, ge=0)
    chen_holmer: bool = False
    sequence: Optional[list[tuple[float, float]]] = None

    @model_validator(mode="after")
    def _ranges(self):
        if self.N_max < self.N_min or self.eps_max < self.eps_min:
            raise ValueError("grid maxima must not be below the minima")
        if (self.Theta is None) != (self.Gamma is None):
            raise ValueError("give both Theta and Gamma or neither")
        return self


class Evolve2DParams(Params):
    n: int = Field(64, ge=4)
    box: float = Field(16.0, gt=0)
    width: float = Field(1.0, gt=0)
    momentum: tuple[float, float] = (0.0, 0.0)
    b: float = 1.0
    dt: float = Field(1e-3, gt=0)
    t_final: float = Field(1.0, ge=0)
    potential: Literal["none", "harmonic", "driven"] = "none"
    omega2: float = Field(0.25, ge=0)
    drive: float = 0.1
    observers: list[str] = ["mass", "energy"]
    sample_every: int = Field(10, ge=1)
    energy_tol: float = Field(1e-4, gt=0)
    power_tol: float = Field(1e-5, gt=0)


class Reduce3DParams(Params):
    eps_list: list[float] = [0.2, 0.1, 0.05]
    n: int = Field(32, ge=4)
    box: float = Field(16.0, gt=0)
    width: float = Field(1.0, gt=0)
    t_final: float = Field(1.0, gt=0)
    b: float = 1.0
    dt_factor: float = Field(0.5, gt=0)
    dt_max: float = Field(0.01, gt=0)
    points_per_eps: int = Field(16, ge=8)
    width_factor: float = Field(12.0, gt=0)
    samples: int = Field(10, ge=1)
    zero_coupling: bool = False
    energy_shift: bool = True
    min_overlap_order: float = Field(1.8, gt=0)
    confinement: ConfinementParams = ConfinementParams()


class CountingParams(Params):
    N: int = Field(4, ge=2)
    D: int = Field(3, ge=2)
    xi: float = Field(0.25, gt=0, lt=0.5)
    trials: int = Field(100, ge=100)
    fault: Literal["none", "weight_sign"] = "none"
    equivalence_N: list[int] = [16]
    equivalence_trials: int = Field(100, ge=1)
    toy_N: list[int] = [8, 16]
    toy_D: int = Field(3, ge=2)
    hopping: float = 1.0
    interaction: float = 1.0
    t_final: float = Field(2.0, ge=0)
    t_points: int = Field(21, ge=2)


class VerifyParams(Params):
    profile: Literal["quick", "full"] = "quick"
    fault: Literal["none", "weight_sign"] = "none"


PARAMS = {
    "scatter": ScatterParams,
    "transverse": TransverseParams,
    "coupling": CouplingParams,
    "regimes": RegimesParams,
    "evolve2d": Evolve2DParams,
    "reduce3d": Reduce3DParams,
    "counting": CountingParams,
    "verify": VerifyParams,
}


class RunConfig(BaseModel):
    """One run: the command, its parameters, where outputs go and the seed."""

    model_config = ConfigDict(extra="forbid")

    command: Literal["scatter", "transverse", "coupling", "regimes", "evolve2d", "reduce3d",
                     "counting", "verify"]
    parameters: dict = {}
    output_dir: str = "out"
    seed: int = 0

    def params(self) -> Params:
        return PARAMS[self.command].model_validate(self.parameters)

    def resolved(self) -> dict:
        """The config with every parameter default filled in."""
        return {
            "command": self.command,
            "parameters": self.params().model_dump(mode="json"),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def read_document(path: str) -> dict:
    text = Path(path).read_text()
    if not text.strip():
        raise InputError(f"config document {path} is empty")
    doc = json.loads(text)
    if not isinstance(doc, dict) or not doc:
        raise InputError(f"config document {path} must be a non-empty JSON object")
    return doc


def load_run_config(command: str, env: Config, path: Optional[str] = None,
                    output_dir: Optional[str] = None, seed: Optional[int] = None,
                    parameters: Optional[dict] = None) -> RunConfig:
    """CLI flags > config file > environment > schema defaults."""
    doc = read_document(path) if path else {}
    if not isinstance(doc.get("parameters", {}), dict):
        raise InputError("config key 'parameters' must be a JSON object")
    if doc.get("command", command) != command:
        raise InputError(f"config document is for {doc['command']!r}, not {command!r}")

    merged = {
        "command": command,
        "parameters": {**doc.get("parameters", {}), **(parameters or {})},
        "output_dir": env.output_dir,
        "seed": env.seed,
    }
    extra = set(doc) - {"command", "parameters", "output_dir", "seed"}
    if extra:
        raise InputError(f"unknown config keys: {', '.join(sorted(extra))}")
    for key in ("output_dir", "seed"):
        if key in doc:
            merged[key] = doc[key]
    if output_dir is not None:
        merged["output_dir"] = output_dir
    if seed is not None:
        merged["seed"] = seed

    cfg = RunConfig.model_validate(merged)
    cfg.params()
    return cfg
