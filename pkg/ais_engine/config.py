"""
Run configuration for the immune engine.

Component configs are frozen pydantic models. RunConfig groups them and is
built from a flat key=value mapping (config file) merged with CLI flags.
"""
import hashlib
import logging
import os
from enum import Enum
from typing import Any, Dict, Literal, Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ais_engine.errors import ConfigError

load_dotenv()

SEED_ENV_VAR = "AIS_SEED"
MAX_SEED = 2**64 - 1


def configure_logging(level: Optional[str] = None) -> None:
    """Install the process-wide log handler. Level defaults to $LOG_LEVEL."""
    level_name = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def default_seed() -> int:
    """Seed from $AIS_SEED, falling back to 0."""
    raw = os.getenv(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return 0
    try:
        seed = int(raw)
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from e
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"{SEED_ENV_VAR} must fit in 64 bits, got {seed}")
    return seed


def derive_seed(seed: int, label: str) -> int:
    """Derive a stable per-module 64-bit seed from the global seed."""
    digest = hashlib.blake2b(f"{seed}:{label}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class _FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class PearsonConfig(_FrozenModel):
    """Pearson affinity settings. The penalty ramps linearly up to the threshold."""

    overlap_penalty_threshold: int = Field(default=5, ge=1)
    zero_overlap_default: Literal[0.0] = 0.0


class MatcherKind(str, Enum):
    EXACT = "exact"
    R_CONTIGUOUS = "r_contiguous"
    PACKET = "packet"
    EUCLIDEAN = "euclidean"


class GenerationConfig(_FrozenModel):
    """Negative-selection detector generation settings."""

    target_count: int = Field(default=100, ge=1)
    max_attempts: int = Field(default=10_000, ge=1)
    matcher: MatcherKind = MatcherKind.PACKET
    r: Optional[int] = Field(default=None, ge=1)
    radius: Optional[float] = Field(default=None, gt=0)
    rng_seed: int = Field(default=0, ge=0, le=MAX_SEED)
    mutate_instead_of_discard: bool = False
    max_mutation_retries: int = Field(default=3, ge=1)
    censor_rate_min: float = Field(default=0.05, ge=0.0, le=1.0)
    censor_rate_max: float = Field(default=0.5, ge=0.0, le=1.0)
    activation_threshold: int = Field(default=2, ge=1)
    detector_lifetime: int = Field(default=1000, ge=1)
    wildcard_probability: float = Field(default=0.5, ge=0.0, le=1.0)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_consistency(self) -> "GenerationConfig":
        if self.max_attempts < self.target_count:
            raise ValueError("max_attempts must be >= target_count")
        if self.matcher is MatcherKind.R_CONTIGUOUS and self.r is None:
            raise ValueError("r_contiguous matcher requires r")
        if self.matcher is MatcherKind.EUCLIDEAN and self.radius is None:
            raise ValueError("euclidean matcher requires radius")
        if self.censor_rate_min > self.censor_rate_max:
            raise ValueError("censor_rate_min must be <= censor_rate_max")
        return self


class CloneConfig(_FrozenModel):
    """Cloning and somatic hypermutation settings."""

    max_clones: int = Field(default=5, ge=1)
    rate_max: float = Field(default=0.5, ge=0.0, le=1.0)
    rate_min: float = Field(default=0.0, ge=0.0, le=1.0)
    rng_seed: int = Field(default=0, ge=0, le=MAX_SEED)
    inverse: bool = True

    @model_validator(mode="after")
    def _check_rates(self) -> "CloneConfig":
        # equal rates are allowed so a zero-mutation run can be configured
        if self.rate_min > self.rate_max:
            raise ValueError("rate_min must be <= rate_max")
        return self


class DynamicsConfig(_FrozenModel):
    """
    Concentration dynamics of the immune network.

    Without the idiotypic effect, k2 is the stimulation constant and k3 the
    death rate. With it, k1 stimulates, k2 suppresses and k3 is the death rate.
    """

    k1: float = Field(default=1.0, ge=0.0)
    k2: float = Field(default=0.5, ge=0.0)
    k3: float = Field(default=0.05, ge=0.0)
    c: float = Field(default=1.0, ge=0.0)
    dt: float = Field(default=1.0, gt=0.0)
    decay_amount: float = Field(default=0.05, gt=0.0)
    initial_concentration: float = Field(default=1.0, gt=0.0)
    removal_floor: float = Field(default=0.1, gt=0.0)
    saturation_cap: float = Field(default=5.0, gt=0.0)
    pool_size: int = Field(default=20, ge=1)
    stabilization_window: int = Field(default=10, ge=1)
    antigen_concentration: float = Field(default=1.0, gt=0.0)
    idiotypic_enabled: bool = False
    stimulate_on_magnitude: bool = False
    max_iterations: int = Field(default=100_000, ge=1)

    @model_validator(mode="after")
    def _check_levels(self) -> "DynamicsConfig":
        if not self.removal_floor < self.initial_concentration <= self.saturation_cap:
            raise ValueError(
                "require removal_floor < initial_concentration <= saturation_cap"
            )
        return self


class RunConfig(_FrozenModel):
    """Everything one CLI command needs."""

    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    dynamics: DynamicsConfig = DynamicsConfig()
    pearson: PearsonConfig = PearsonConfig()
    generation: GenerationConfig = GenerationConfig()
    clone: CloneConfig = CloneConfig()
    ratings_path: Optional[str] = None
    traffic_path: Optional[str] = None
    out_dir: str = "."


_SECTIONS = {
    "dynamics": DynamicsConfig,
    "pearson": PearsonConfig,
    "generation": GenerationConfig,
    "clone": CloneConfig,
}
_DERIVED_KEYS = {"rng_seed"}
_FIELD_OWNERS: Dict[str, str] = {
    name: section
    for section, model in _SECTIONS.items()
    for name in model.model_fields
    if name not in _DERIVED_KEYS
}
_TOP_LEVEL_KEYS = {
    name for name in RunConfig.model_fields if name not in _SECTIONS and name != "seed"
}


def config_keys() -> set:
    """Every flat key build_run_config accepts."""
    return set(_FIELD_OWNERS) | _TOP_LEVEL_KEYS | {"seed"}


def read_config_file(path: str) -> Dict[str, Optional[str]]:
    """Parse a key=value config file."""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    return dict(dotenv_values(path))


def build_run_config(
    file_values: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Merge config-file values with flag overrides (flags win) into a RunConfig.

    Keys are flat field names (``pool_size``, ``k1``, ``target_count`` ...).
    Empty or None values are ignored. Module seeds are derived from ``seed``.
    """
    merged: Dict[str, Any] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None or (isinstance(value, str) and value.strip() == ""):
                continue
            merged[key.strip().lower().replace("-", "_")] = value

    seed_value = merged.pop("seed", None)
    try:
        seed = default_seed() if seed_value is None else int(seed_value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"seed must be an integer, got {seed_value!r}") from e

    sections: Dict[str, Dict[str, Any]] = {name: {} for name in _SECTIONS}
    top: Dict[str, Any] = {}
    for key, value in merged.items():
        if key in _FIELD_OWNERS:
            sections[_FIELD_OWNERS[key]][key] = value
        elif key in _TOP_LEVEL_KEYS:
            top[key] = value
        else:
            raise ConfigError(f"Unknown config key: {key}")

    sections["generation"]["rng_seed"] = derive_seed(seed, "negative_selection")
    sections["clone"]["rng_seed"] = derive_seed(seed, "clonal_selection")

    try:
        return RunConfig(
            seed=seed,
            **top,
            **{name: model(**sections[name]) for name, model in _SECTIONS.items()},
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
