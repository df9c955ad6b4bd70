import os
import hashlib
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .pgd import StoppingCriteria
from .studies import PracticalCaseConfig, TheoreticalCaseConfig

load_dotenv()

# run outputs
OUT_DIR = os.getenv("WALLPGD_OUT_DIR", "runs")
# randomness and parallelism
SEED = int(os.getenv("WALLPGD_SEED", "42"))
THREADS = int(os.getenv("WALLPGD_THREADS", "1"))
# logging
LOG_LEVEL = os.getenv("WALLPGD_LOG_LEVEL", "INFO")


class NumericsConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    reference_nodes: int = Field(200, ge=2)
    dt: float = Field(1e-3, gt=0)
    pgd_nodes: int = Field(101, ge=2)
    delta_b_in: float = Field(1e-3, gt=0)
    delta_b_out: float = Field(1e-4, gt=0)
    domain_margin: float = Field(0.1, ge=0)


class SweepConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    bases: List[str] = Field(default_factory=lambda: ["chebyshev", "legendre", "pod:full"])
    modes: List[int] = Field(default_factory=lambda: [2, 3, 4, 5])
    dzeta: List[float] = Field(default_factory=lambda: [1e-2, 1e-3, 1e-4, 1e-5])
    metrics: List[Literal["epsilon", "mu", "nu"]] = Field(default_factory=lambda: ["epsilon"])

    @field_validator("modes")
    @classmethod
    def _positive_modes(cls, v: List[int]) -> List[int]:
        if any(n < 1 for n in v):
            raise ValueError("mode counts must be positive")
        return v

    @field_validator("dzeta")
    @classmethod
    def _unit_steps(cls, v: List[float]) -> List[float]:
        if any(not 0 < d <= 1 for d in v):
            raise ValueError("coefficient grid steps must lie in (0, 1]")
        return v


class RunConfig(BaseModel):
    """Everything a command needs; every section defaults to the standard case values."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    case: Literal["theoretical", "practical"] = "theoretical"
    theoretical: TheoreticalCaseConfig = TheoreticalCaseConfig()
    practical: PracticalCaseConfig = PracticalCaseConfig()
    numerics: NumericsConfig = NumericsConfig()
    pgd: StoppingCriteria = StoppingCriteria()
    sweep: SweepConfig = SweepConfig()

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()


def load_run_config(path: Optional[Path] = None) -> RunConfig:
    """Parse a TOML run configuration; None gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"{path}: {problems}") from e
    if config.practical.measurements is not None and not config.practical.measurements.is_absolute():
        practical = config.practical.model_copy(update={"measurements": path.parent / config.practical.measurements})
        config = config.model_copy(update={"practical": practical})
    return config
