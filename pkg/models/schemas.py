"""Versioned experiment configuration."""
from __future__ import annotations

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.constants import CONFIG_SCHEMA_VERSION
from tools.formula import ShrinkProfile
from tools.measure import MeasureSpec
from tools.sequence import BallSequenceSpec


class BoxCountConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    levels: Tuple[int, int] = (6, 12)
    octaves: int = Field(default=3, ge=1)
    # covering-cost threshold for the critical exponent
    threshold: float = Field(default=1.0, gt=0.0)

    @field_validator("levels")
    @classmethod
    def _ordered(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        if not (0 <= value[0] <= value[1]):
            raise ValueError(f"levels must satisfy 0 <= A <= B, got {value}")
        return value


class CantorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps0: float = Field(default=0.2, gt=0.0, le=1.0)
    depth: int = Field(default=2, ge=1)
    candidates_per_cube: int = Field(default=256, ge=1)
    mass_floor: float = Field(default=0.1, gt=0.0, le=1.0)
    probe_span: int = Field(default=4, ge=0)
    resolution: int = Field(default=3, ge=0)
    rho_samples: int = Field(default=128, ge=1)
    e_set_constant: Optional[float] = Field(default=None, gt=0.0)
    enforce_size_conditions: bool = False
    max_candidates: int = Field(default=4096, ge=1)
    eager_cubes: int = Field(default=8192, ge=0)
    probe_paths: int = Field(default=32, ge=0)
    max_expansions: int = Field(default=16, ge=0)
    strict_bounds: bool = False
    certify_samples: int = Field(default=10_000, ge=1)
    slack: float = Field(default=0.1, ge=0.0)


class DiagnoseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: int = Field(default=8, ge=0)
    ladder: Optional[List[int]] = None
    local_dimension_samples: int = Field(default=2000, ge=2)
    local_dimension_depth: int = Field(default=20, ge=2)
    admissible_samples: int = Field(default=200, ge=1)


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tau_max: float = Field(default=4.0, ge=1.0)
    points: int = Field(default=31, ge=2)


class ExperimentConfig(BaseModel):
    """One experiment: measure, shrinking profile, ball stream and per-command knobs."""

    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = CONFIG_SCHEMA_VERSION
    measure: MeasureSpec = Field(default_factory=lambda: MeasureSpec.lebesgue(2))
    profile: List[float] = Field(default_factory=lambda: [1.0, 2.0])
    sequence: BallSequenceSpec = Field(default_factory=BallSequenceSpec)
    seed: int = Field(default=0, ge=0, lt=2**64)
    formula_points: int = Field(default=101, ge=2)
    boxcount: BoxCountConfig = Field(default_factory=BoxCountConfig)
    cantor: CantorConfig = Field(default_factory=CantorConfig)
    diagnose: DiagnoseConfig = Field(default_factory=DiagnoseConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    cell_budget: Optional[int] = Field(default=None, ge=1)
    threads: Optional[int] = Field(default=None, ge=1)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_profile(self) -> "ExperimentConfig":
        # raises on unsorted or sub-unit exponents
        profile = ShrinkProfile(tuple(self.profile))
        if profile.d != self.measure.d:
            raise ValueError(f"profile has {profile.d} exponents but the measure lives in dimension {self.measure.d}")
        for center in self.sequence.centers:
            if len(center) != self.measure.d:
                raise ValueError(f"explicit center {center} does not have dimension {self.measure.d}")
        return self

    @property
    def shrink_profile(self) -> ShrinkProfile:
        return ShrinkProfile(tuple(self.profile))
