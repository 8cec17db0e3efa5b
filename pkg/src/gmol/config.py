"""Run configuration: one JSON document, validated with pydantic."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .boundary import FourierBoundary, boundary_from_dict
from .operator import ProblemSpec, ShapeSpec
from .series import TruncationPolicy

Mode = Literal["plain", "proximal", "hyper", "oracle", "compare"]


class FourierData(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["fourier"] = "fourier"
    mean: float = 0.0
    cos: list[float] = Field(default_factory=list)
    sin: list[float] = Field(default_factory=list)


BoundaryData = Union[float, FourierData]


def to_boundary(x: BoundaryData) -> FourierBoundary:
    if isinstance(x, FourierData):
        return boundary_from_dict(x.model_dump())
    return FourierBoundary.constant(float(x))


class ShapeConfig(BaseModel):
    """``general`` takes ``r(theta)`` as a Fourier series; derivatives are exact."""

    model_config = ConfigDict(extra="forbid")
    mode: Literal["annulus", "general"] = "annulus"
    r: Optional[FourierData] = None

    @model_validator(mode="after")
    def _need_r(self):
        if self.mode == "general" and self.r is None:
            raise ValueError("shape mode 'general' needs r")
        return self


class ProblemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    epsilon: float = Field(1.0, gt=0)
    g: list[float] = Field(default_factory=lambda: [0.0, 1.0, 0.0, -1.0])
    source: float = 1.0
    inner: float = 0.0
    outer: BoundaryData = 0.0
    shape: ShapeConfig = Field(default_factory=ShapeConfig)

    @field_validator("g")
    @classmethod
    def _degree(cls, g):
        while len(g) > 1 and g[-1] == 0:
            g = g[:-1]
        if len(g) > 4:
            raise ValueError("g must have degree at most 3")
        return g

    def spec(self) -> ProblemSpec:
        shape = ShapeSpec()
        if self.shape.mode == "general":
            shape = ShapeSpec.from_boundary(to_boundary(self.shape.r))
        return ProblemSpec(self.epsilon, tuple(self.g), self.source, self.inner, shape)


class DiscretizationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    lines: int = Field(10, ge=2, description="N: intervals per domain or per sub-domain")
    subdomains: int = Field(10, ge=2, description="N1, used by hyper mode")
    degree_caps: list[int] = Field(default_factory=lambda: [3, 1, 1, 0, 0])
    step_cap: int = Field(2, ge=0)
    drop_tolerance: float = Field(1e-14, ge=0)

    @field_validator("degree_caps")
    @classmethod
    def _caps(cls, caps):
        if not 1 <= len(caps) <= 5 or any(c < 0 for c in caps):
            raise ValueError("degree_caps needs 1 to 5 nonnegative entries")
        return caps

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(tuple(self.degree_caps), self.step_cap, self.drop_tolerance)


class ProximalSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    K: float = Field(70.0, ge=0)
    outer_iterations: int = Field(400, ge=1)
    outer_tolerance: float = Field(1e-6, gt=0)


class ConvergenceSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    paper_compat: bool = False
    tolerance: float = Field(1e-8, gt=0)
    max_iterations: int = Field(200, ge=1)
    node_tolerance: float = Field(1e-8, gt=0)
    node_max_sweeps: int = Field(500, ge=1)
    node_method: Literal["gauss-seidel", "jacobi"] = "gauss-seidel"


class OracleSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    radial_intervals: Optional[int] = Field(None, ge=8)
    theta_points: int = Field(32, ge=8)
    stencil: Literal["discrete", "continuum"] = "discrete"
    solver: Literal["plain", "proximal", "hyper"] = "hyper"
    exclude_boundary_subdomains: bool = True


class GatesSection(BaseModel):
    """Tolerance gates; a run exits 0 only if every configured gate passes."""

    model_config = ConfigDict(extra="forbid")
    max_residual: Optional[float] = Field(None, gt=0)
    max_oracle_error: Optional[float] = Field(None, gt=0)
    reference: Optional[Literal["plain", "proximal", "hyper"]] = None
    reference_rel_tol: float = Field(1e-3, ge=0)
    reference_abs_tol: float = Field(0.0, ge=0)


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    out_dir: Optional[str] = None
    theta_points: int = Field(32, ge=1)
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    mode: Mode = "plain"
    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    discretization: DiscretizationConfig = Field(default_factory=DiscretizationConfig)
    proximal: ProximalSection = Field(default_factory=ProximalSection)
    convergence: ConvergenceSection = Field(default_factory=ConvergenceSection)
    oracle: OracleSection = Field(default_factory=OracleSection)
    gates: GatesSection = Field(default_factory=GatesSection)
    output: OutputSection = Field(default_factory=OutputSection)
    deterministic: bool = True

    @model_validator(mode="after")
    def _consistent(self):
        if not self.deterministic:
            raise ValueError("every algorithm here is deterministic; 'deterministic' must be true")
        if self.problem.shape.mode == "general" and self.mode not in ("plain", "oracle"):
            raise ValueError("general shapes are supported in plain and oracle modes only")
        if self.convergence.paper_compat and self.mode in ("oracle",):
            raise ValueError("paper_compat does not apply to oracle mode")
        if self.gates.max_oracle_error is not None and self.mode != "compare":
            raise ValueError("max_oracle_error is a compare-mode gate")
        return self


class ConfigError(ValueError):
    pass


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config (or defaults) and apply dotted-key overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for key, value in (overrides or {}).items():
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
