"""Run configuration: YAML text validated into a strict schema.

Unknown keys are rejected everywhere, and every error names the dotted path
of the offending key (``thermal.beta``, ``model.L`` ...).
"""

from __future__ import annotations

from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .model import ModelSpec
from .mps import CpsConfig
from .propagator import SCHEDULES
from .sampler import CANONICAL, GRAND_CANONICAL, ChainConfig
from .symtensor import TruncationSpec

MODES = ("ed-thermal", "slme-sweep", "metts-canonical", "metts-grand", "oracle-ff", "stats")

# sections each mode cannot run without
REQUIRED = {
    "ed-thermal": ("model", "thermal"),
    "slme-sweep": ("model", "thermal"),
    "metts-canonical": ("model", "thermal"),
    "metts-grand": ("model", "thermal"),
    "oracle-ff": ("model", "thermal"),
    "stats": ("stats",),
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    L: int = Field(ge=2)
    J: float = 1.0
    U: float = 1.0
    mu: float = 0.0
    n_max: int = Field(6, ge=1)
    hardcore: bool = False
    N: Optional[int] = Field(None, ge=0)

    @field_validator("L")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("must be even")
        return v


class ThermalSection(_Strict):
    beta: float = Field(gt=0)
    dtau: float = Field(0.0625, gt=0)
    schedule: Literal[tuple(SCHEDULES)] = "second_order"  # type: ignore[valid-type]


class GatesSection(_Strict):
    tau: float = Field(0.0, ge=0)
    n: int = Field(1, ge=1)
    # None means the rotation uses the physical U
    u_prime: Optional[float] = None


class SamplingSection(_Strict):
    n_samples: int = Field(1024, ge=1)
    burn_in: int = Field(32, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    initial: Optional[list[int]] = None


class TruncationSection(_Strict):
    max_bond: int = Field(10**6, ge=1)
    cutoff: float = Field(1e-10, ge=0, lt=1)


class OutputSection(_Strict):
    path: str = "out"
    format: Literal["csv", "jsonl"] = "csv"
    figures: bool = True


class SweepSection(_Strict):
    tau_max: float = Field(3.8, gt=0)
    n_tau: int = Field(20, ge=2)
    ns: list[int] = [2]
    # "U" stands for the model's interaction
    u_primes: list[Union[float, Literal["U"]]] = ["U", 0.0]


class OracleSection(_Strict):
    mus: Optional[list[float]] = None


class StatsSection(_Strict):
    input: str
    beta: Optional[float] = Field(None, gt=0)


class RunConfig(_Strict):
    mode: Literal[MODES]  # type: ignore[valid-type]
    model: Optional[ModelSection] = None
    thermal: Optional[ThermalSection] = None
    gates: GatesSection = GatesSection()
    sampling: SamplingSection = SamplingSection()
    truncation: TruncationSection = TruncationSection()
    output: OutputSection = OutputSection()
    sweep: SweepSection = SweepSection()
    oracle: OracleSection = OracleSection()
    stats: Optional[StatsSection] = None

    def normalized(self) -> dict:
        return self.model_dump(mode="json")

    def model_spec(self) -> ModelSpec:
        m = self.model
        return ModelSpec(L=m.L, J=m.J, U=m.U, mu=m.mu, n_max=m.n_max, hardcore=m.hardcore, u_prime=self.gates.u_prime)

    @property
    def particle_number(self) -> int:
        """Canonical particle number: ``model.N``, the initial state, or unit filling."""
        if self.model.N is not None:
            return self.model.N
        if self.sampling.initial is not None:
            return sum(self.sampling.initial)
        return self.model.L

    def chain_config(self) -> ChainConfig:
        grand = self.mode == "metts-grand"
        spec = self.model_spec()
        initial = self.sampling.initial
        if initial is None and not grand and self.model.N is not None and self.model.N != spec.L:
            raise ConfigError("sampling.initial", "required when model.N differs from unit filling")
        return ChainConfig(
            model=spec,
            beta=self.thermal.beta,
            dtau=self.thermal.dtau,
            tau=self.gates.tau,
            n=self.gates.n,
            ensemble=GRAND_CANONICAL if grand else CANONICAL,
            n_samples=self.sampling.n_samples,
            burn_in=self.sampling.burn_in,
            seed=self.sampling.seed,
            trunc=TruncationSpec(self.truncation.max_bond, self.truncation.cutoff),
            initial=None if initial is None else CpsConfig(initial),
            schedule=self.thermal.schedule,
        )


def _path(loc) -> str:
    return ".".join(str(x) for x in loc)


def validate(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "configuration must be a mapping")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(_path(err["loc"]), err["msg"]) from None
    for section in REQUIRED[cfg.mode]:
        if getattr(cfg, section) is None:
            raise ConfigError(section, f"section is required for mode {cfg.mode}")
    if cfg.mode == "metts-grand" and cfg.model.L < 4:
        raise ConfigError("model.L", "grand-canonical runs need L >= 4")
    if cfg.sampling.initial is not None:
        want = cfg.model.L - 2 if cfg.mode == "metts-grand" else cfg.model.L
        if len(cfg.sampling.initial) != want:
            raise ConfigError("sampling.initial", f"needs {want} occupations")
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"invalid YAML: {exc}") from None
    return validate(data)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
