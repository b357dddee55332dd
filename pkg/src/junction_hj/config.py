"""Run configuration: TOML or JSON, validated with pydantic."""

from __future__ import annotations

import hashlib
import json
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - depends on the interpreter
    import tomli as _toml

from .hamiltonian import (
    PHI_FUNCTIONS,
    AnisotropicHamiltonian,
    ComposedHamiltonian,
    Hamiltonian,
    QuadraticHamiltonian,
)
from .junction_condition import FluxLimiter, GeneralJunctionFunction, a0
from .junction_core import Field as JField
from .junction_core import JunctionGrid, build_grid


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message

    def to_dict(self) -> dict:
        return {"error": "config", "path": self.path, "message": self.message}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# -- Hamiltonians ---------------------------------------------------------------

class QuadraticSpec(_Strict):
    family: Literal["quadratic"]
    b_prime: list[float] = []
    b: float = 0.0
    c: float = 0.0

    def build(self) -> Hamiltonian:
        return QuadraticHamiltonian(self.b_prime, self.b, self.c)

    @property
    def dim(self) -> int:
        return len(self.b_prime)


class AnisotropicSpec(_Strict):
    family: Literal["anisotropic"]
    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    gamma: list[float] = Field(min_length=1)

    def build(self) -> Hamiltonian:
        return AnisotropicHamiltonian(self.alpha, self.beta, self.gamma)

    @property
    def dim(self) -> int:
        return len(self.gamma) - 1


class QuasiConvexSpec(_Strict):
    family: Literal["quasi_convex"]
    phi: str
    core: Annotated[Union[QuadraticSpec, AnisotropicSpec], Field(discriminator="family")]

    @field_validator("phi")
    @classmethod
    def _known_phi(cls, v):
        if v not in PHI_FUNCTIONS:
            raise ValueError(f"unknown phi {v!r}; choose from {sorted(PHI_FUNCTIONS)}")
        return v

    def build(self) -> Hamiltonian:
        return ComposedHamiltonian(self.core.build(), self.phi)

    @property
    def dim(self) -> int:
        return self.core.dim


HamiltonianSpec = Annotated[Union[QuadraticSpec, AnisotropicSpec, QuasiConvexSpec], Field(discriminator="family")]


# -- junction condition ---------------------------------------------------------

class ConstantLimiterSpec(_Strict):
    kind: Literal["constant"]
    value: float


class QuadraticLimiterSpec(_Strict):
    kind: Literal["quadratic"]
    scale: float = 1.0
    offset: float = 0.0
    center: list[float] | None = None


class A0LimiterSpec(_Strict):
    kind: Literal["a0"]


LimiterSpec = Annotated[Union[ConstantLimiterSpec, QuadraticLimiterSpec, A0LimiterSpec], Field(discriminator="kind")]


class FluxLimitedSpec(_Strict):
    kind: Literal["flux_limited"]
    limiter: LimiterSpec


class LinearSpec(_Strict):
    kind: Literal["linear"]
    c: float
    w: list[float]

    @field_validator("w")
    @classmethod
    def _nonnegative(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("weights must be non-negative for a monotone junction function")
        return v


JunctionSpec = Annotated[Union[FluxLimitedSpec, LinearSpec], Field(discriminator="kind")]


# -- grid, data, time -----------------------------------------------------------

class GridSpec(_Strict):
    branches: int = Field(ge=1)
    normal_length: float = Field(gt=0)
    normal_spacing: float = Field(gt=0)
    tangential_lo: list[float] = []
    tangential_hi: list[float] = []
    tangential_spacing: list[float] = []

    @model_validator(mode="after")
    def _axes(self):
        d = len(self.tangential_spacing)
        if len(self.tangential_lo) != d or len(self.tangential_hi) != d:
            raise ValueError("tangential_lo, tangential_hi and tangential_spacing must have the same length")
        if any(h <= 0 for h in self.tangential_spacing):
            raise ValueError("tangential spacing must be positive")
        if any(hi <= lo for lo, hi in zip(self.tangential_lo, self.tangential_hi)):
            raise ValueError("tangential_hi must exceed tangential_lo")
        return self

    @property
    def dim(self) -> int:
        return len(self.tangential_spacing)

    def build(self) -> JunctionGrid:
        return build_grid(
            self.branches,
            self.normal_length,
            self.normal_spacing,
            self.tangential_lo,
            self.tangential_hi,
            self.tangential_spacing,
        )


class ConeSpec(_Strict):
    """``min(scale * d(X, center), cap)`` with the center on the interface."""

    kind: Literal["cone"]
    cap: float = 1.0
    scale: float = 1.0
    center: list[float] = []


class AffineSpec(_Strict):
    """``offset + tangential . x' + slopes[i] * x`` on branch ``i``."""

    kind: Literal["affine"]
    offset: float = 0.0
    tangential: list[float] = []
    slopes: list[float]


class BumpSpec(_Strict):
    """``height * max(0, 1 - (d(X, center) / radius)^2)``."""

    kind: Literal["bump"]
    height: float = 1.0
    radius: float = Field(default=1.0, gt=0)
    center: list[float] = []


class TableSpec(_Strict):
    """Explicit node values in grid order (interface layer first, then branches)."""

    kind: Literal["table"]
    values: list[float]


InitialSpec = Annotated[Union[ConeSpec, AffineSpec, BumpSpec, TableSpec], Field(discriminator="kind")]


class TimeSpec(_Strict):
    final: float = Field(ge=0)
    snapshots: list[float] = []
    cfl: float = Field(default=0.9, gt=0, le=1)
    dt_max: float = Field(default=0.1, gt=0)

    @model_validator(mode="after")
    def _inside(self):
        bad = [t for t in self.snapshots if t < 0 or t > self.final]
        if bad:
            raise ValueError(f"snapshot times {bad} lie outside [0, final]")
        return self


# -- per-subcommand sections ------------------------------------------------------

class ReduceSpec(_Strict):
    p_prime: list[list[float]] = [[]]


class VTFSpec(_Strict):
    pairs: int = Field(default=100, ge=1)
    box: float = Field(default=2.0, gt=0)
    limiter: LimiterSpec | None = None


class IshiiSpec(_Strict):
    h_left: HamiltonianSpec
    h_right: HamiltonianSpec
    p_prime: list[list[float]] = [[]]


class OracleSpec(_Strict):
    hamiltonian: HamiltonianSpec
    t: float = Field(gt=0)
    points: list[list[float]]


class RunConfig(_Strict):
    seed: int = Field(default=0, ge=0, lt=2**64)
    threads: int | None = Field(default=None, ge=1)
    hamiltonians: list[HamiltonianSpec] = []
    junction: JunctionSpec | None = None
    grid: GridSpec | None = None
    initial: InitialSpec | None = None
    time: TimeSpec | None = None
    reduce: ReduceSpec | None = None
    vtf: VTFSpec | None = None
    ishii: IshiiSpec | None = None
    oracle: OracleSpec | None = None

    @model_validator(mode="after")
    def _consistent(self):
        dims = {h.dim for h in self.hamiltonians}
        if len(dims) > 1:
            raise ValueError("all Hamiltonians must share the tangential dimension")
        d = dims.pop() if dims else None
        if self.grid is not None:
            if self.hamiltonians and len(self.hamiltonians) != self.grid.branches:
                raise ValueError(f"grid has {self.grid.branches} branches but {len(self.hamiltonians)} Hamiltonians are given")
            if d is not None and d != self.grid.dim:
                raise ValueError(f"grid tangential dimension {self.grid.dim} differs from the Hamiltonians' {d}")
        if isinstance(self.junction, LinearSpec) and self.hamiltonians and len(self.junction.w) != len(self.hamiltonians):
            raise ValueError("junction.w needs one weight per branch")
        for name in ("reduce", "ishii"):
            sec = getattr(self, name)
            if sec is not None and d is not None and any(len(p) != d for p in sec.p_prime):
                raise ValueError(f"{name}.p_prime entries must have length {d}")
        return self

    # -- builders --------------------------------------------------------------
    @property
    def dim(self) -> int:
        if self.hamiltonians:
            return self.hamiltonians[0].dim
        return self.grid.dim if self.grid else 0

    def build_hamiltonians(self) -> list[Hamiltonian]:
        if not self.hamiltonians:
            raise ConfigError("at least one Hamiltonian is required", "hamiltonians")
        return [h.build() for h in self.hamiltonians]

    def build_limiter(self, spec=None) -> FluxLimiter:
        spec = spec or (self.junction.limiter if isinstance(self.junction, FluxLimitedSpec) else None)
        if spec is None:
            raise ConfigError("a flux limiter is required", "junction.limiter")
        d = self.dim
        if isinstance(spec, ConstantLimiterSpec):
            return FluxLimiter.constant(spec.value, d)
        if isinstance(spec, QuadraticLimiterSpec):
            return FluxLimiter.quadratic(d, spec.scale, spec.offset, spec.center)
        hs = self.build_hamiltonians()
        return FluxLimiter(lambda pp: a0(hs, pp), d, True, "A_0")

    def build_junction_function(self) -> GeneralJunctionFunction:
        if isinstance(self.junction, LinearSpec):
            return GeneralJunctionFunction.linear(self.junction.c, self.junction.w, self.dim)
        if isinstance(self.junction, FluxLimitedSpec):
            return GeneralJunctionFunction.flux_limited(self.build_limiter(), self.build_hamiltonians())
        raise ConfigError("a junction section is required", "junction")

    def build_grid(self) -> JunctionGrid:
        if self.grid is None:
            raise ConfigError("a grid section is required", "grid")
        return self.grid.build()

    def build_initial(self, grid: JunctionGrid) -> JField:
        spec = self.initial
        if spec is None:
            raise ConfigError("an initial section is required", "initial")
        d = grid.dim
        if isinstance(spec, TableSpec):
            if len(spec.values) != grid.node_count:
                raise ConfigError(f"expected {grid.node_count} values, got {len(spec.values)}", "initial.values")
            return JField(grid, spec.values)
        if isinstance(spec, AffineSpec):
            if len(spec.slopes) != grid.branches or len(spec.tangential or [0.0] * d) != d:
                raise ConfigError("slopes need one entry per branch and tangential one per axis", "initial")
            slopes = np.asarray(spec.slopes)
            tg = np.asarray(spec.tangential or [0.0] * d)

            def affine(branch, tang, x):
                return spec.offset + np.tensordot(tang, tg, axes=([-1], [0])) + slopes[branch - 1] * x

            return JField.from_function(grid, affine)
        center = np.asarray(spec.center or [0.0] * d, dtype=float)
        if center.size != d:
            raise ConfigError(f"center needs {d} components", "initial.center")

        def dist(tang, x):
            return np.sqrt(np.sum((tang - center) ** 2, axis=-1) + x**2)

        if isinstance(spec, ConeSpec):
            return JField.from_function(grid, lambda b, t, x: np.minimum(spec.scale * dist(t, x), spec.cap))
        return JField.from_function(
            grid, lambda b, t, x: spec.height * np.maximum(0.0, 1.0 - (dist(t, x) / spec.radius) ** 2)
        )

    def whole_space_initial(self):
        """The initial datum as a function on ``R^(d+1)`` (left half = branch 1 folded)."""
        spec = self.initial
        d = self.dim
        if spec is None:
            raise ConfigError("an initial section is required", "initial")
        if isinstance(spec, TableSpec):
            raise ConfigError("tables are grid-bound; use cone, affine or bump", "initial.kind")
        if isinstance(spec, AffineSpec):
            if len(spec.slopes) != 2:
                raise ConfigError("whole-space affine data need two slopes (left, right)", "initial.slopes")
            tg = np.asarray(spec.tangential or [0.0] * d)
            left, right = spec.slopes

            def affine(X):
                x = X[..., -1]
                return spec.offset + X[..., :-1] @ tg + np.where(x < 0, -left * x, right * x)

            return affine
        center = np.append(np.asarray(spec.center or [0.0] * d, dtype=float), 0.0)
        if center.size != d + 1:
            raise ConfigError(f"center needs {d} components", "initial.center")

        def dist(X):
            return np.sqrt(np.sum((X - center) ** 2, axis=-1))

        if isinstance(spec, ConeSpec):
            return lambda X: np.minimum(spec.scale * dist(X), spec.cap)
        return lambda X: spec.height * np.maximum(0.0, 1.0 - (dist(X) / spec.radius) ** 2)

    def section(self, name: str):
        sec = getattr(self, name)
        if sec is None:
            raise ConfigError(f"the {name} section is required for this subcommand", name)
        return sec


def _path(loc, raw) -> str:
    """Dotted field path; the union tags pydantic inserts into ``loc`` are dropped."""
    parts, node = [], raw
    for p in loc:
        if isinstance(node, dict) and p not in node and p in (node.get("kind"), node.get("family")):
            continue
        parts.append(str(p))
        try:
            node = node[p]
        except (KeyError, IndexError, TypeError):
            node = None
    return ".".join(parts)


def parse_config(text: str, fmt: str | None = None) -> RunConfig:
    """Parse TOML or JSON text (format guessed from the first character when not given)."""
    stripped = text.lstrip()
    if fmt is None:
        fmt = "json" if stripped.startswith("{") else "toml"
    try:
        raw = json.loads(text) if fmt == "json" else _toml.loads(text)
    except (json.JSONDecodeError, _toml.TOMLDecodeError) as exc:
        raise ConfigError(f"malformed {fmt.upper()}: {exc}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = _path(err["loc"], raw)
        if err["type"] == "union_tag_invalid":
            path += "." + str(err["ctx"]["discriminator"]).strip("'")
        raise ConfigError(err["msg"], path) from exc


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
