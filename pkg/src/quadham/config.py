"""Run configuration: YAML text -> validated :class:`RunConfig` -> natural-unit problem."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import fields as F
from .dynamics import FULL, REDUCED, IntegratorConfig, stability_limit
from .grid import Grid, GridError, make_grid
from .units import UnitSystem, natural_frequency


class ConfigError(ValueError):
    """Every problem found in a config, one message per violation."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridBlock(_Strict):
    dim: int = Field(ge=1, le=3)
    extents: list[list[float]]
    points: list[int]
    bc: Literal["periodic", "dirichlet"] = "periodic"


class UnitsBlock(_Strict):
    h: float = Field(gt=0)
    c: float = Field(gt=0)
    mass: float = Field(gt=0)
    length_unit: float = Field(gt=0)


class PotentialBlock(_Strict):
    kind: Literal["free", "harmonic", "box", "barrier", "tabulated"] = "free"
    omega: Optional[float] = None
    trap_mass: Optional[float] = Field(default=None, gt=0)
    height: Optional[float] = None
    center: Optional[list[float]] = None
    width: Optional[float] = Field(default=None, gt=0)
    values: Optional[list[float]] = None
    path: Optional[str] = None


class PhysicsBlock(_Strict):
    m: Optional[float] = Field(default=None, gt=0)
    potential: PotentialBlock = PotentialBlock()
    units: Union[Literal["natural"], UnitsBlock] = "natural"


class PacketBlock(_Strict):
    center: list[float]
    width: float = Field(gt=0)
    wavenumber: Optional[list[float]] = None


class EigenmodeBlock(_Strict):
    index: int = Field(default=0, ge=0)
    phase: float = 0.0


class UniformBlock(_Strict):
    p: float = 0.0
    q: float = 1.0


class InitialBlock(_Strict):
    packet: Optional[PacketBlock] = None
    eigenmode: Optional[EigenmodeBlock] = None
    snapshot: Optional[str] = None
    uniform: Optional[UniformBlock] = None
    hidden: Literal["adiabatic", "cold"] = "adiabatic"


class SchemeBlock(_Strict):
    kind: Literal["full", "reduced"] = REDUCED
    dt: Union[Literal["auto"], float] = "auto"
    t_final: float = 1.0
    snapshot_stride: int = Field(default=0, ge=0)
    observable_stride: int = Field(default=1, ge=1)
    tol: float = 1e-12
    max_iter: int = Field(default=500, ge=1)


class SpectrumBlock(_Strict):
    k: int = Field(default=3, ge=1)
    tol: float = Field(default=1e-10, gt=0)
    method: Literal["auto", "dense", "lanczos"] = "auto"


class ExperimentBlock(_Strict):
    m_list: list[float]
    T: Optional[float] = None
    cold_start: bool = False
    full_dt_factor: float = Field(default=0.1, gt=0)
    reduced_dt: float = Field(default=1e-3, gt=0)
    cold_dt_factor: float = Field(default=0.01, gt=0)


class OutputBlock(_Strict):
    directory: str = "out"
    formats: list[Literal["csv", "snapshot"]] = ["csv", "snapshot"]


class RunConfig(_Strict):
    grid: GridBlock
    physics: PhysicsBlock = PhysicsBlock()
    initial: InitialBlock = InitialBlock()
    scheme: SchemeBlock = SchemeBlock()
    spectrum: Optional[SpectrumBlock] = None
    experiment: Optional[ExperimentBlock] = None
    output: OutputBlock = OutputBlock()

    @model_validator(mode="after")
    def _semantics(self):
        errors = semantic_errors(self)
        if errors:
            raise ValueError("; ".join(errors))
        return self


def semantic_errors(cfg: RunConfig) -> list[str]:
    errs = []
    g = cfg.grid
    if len(g.extents) != g.dim or any(len(e) != 2 for e in g.extents):
        errs.append(f"grid.extents: need {g.dim} [a, b] pairs")
    elif any(b <= a for a, b in g.extents):
        errs.append("grid.extents: every interval needs b > a")
    if len(g.points) != g.dim:
        errs.append(f"grid.points: need {g.dim} entries")
    elif any(n < 3 for n in g.points):
        errs.append("grid.points: need at least 3 points per axis")

    chosen = [k for k in ("packet", "eigenmode", "snapshot", "uniform") if getattr(cfg.initial, k) is not None]
    if len(chosen) != 1:
        errs.append(f"initial: exactly one initial state must be given, got {chosen or 'none'}")

    s = cfg.scheme
    if not np.isfinite(s.t_final) or s.t_final < 0:
        errs.append(f"scheme.t_final: must be >= 0, got {s.t_final}")
    if s.dt != "auto" and not s.dt > 0:
        errs.append(f"scheme.dt: must be positive or 'auto', got {s.dt}")
    if not 0 < s.tol <= 1e-6:
        errs.append(f"scheme.tol: must lie in (0, 1e-6], got {s.tol}")

    ph = cfg.physics
    if ph.units == "natural" and ph.m is None:
        errs.append("physics.m: required with natural units")
    if ph.units != "natural" and ph.m is not None:
        errs.append("physics.m: give the mass in physics.units.mass when using MKS units")
    pot = ph.potential
    if pot.kind == "harmonic" and pot.omega is None:
        errs.append("physics.potential.omega: required for a harmonic potential")
    if pot.kind == "barrier" and (pot.height is None or pot.center is None or pot.width is None):
        errs.append("physics.potential: a barrier needs height, center and width")
    if pot.kind == "tabulated" and (pot.values is None) == (pot.path is None):
        errs.append("physics.potential: a tabulated potential needs exactly one of values or path")
    if pot.kind == "box" and g.bc != "dirichlet":
        errs.append("physics.potential.kind: box needs grid.bc = dirichlet")

    if cfg.initial.packet is not None:
        pk = cfg.initial.packet
        if len(pk.center) != g.dim:
            errs.append(f"initial.packet.center: need {g.dim} entries")
        if pk.wavenumber is not None and len(pk.wavenumber) != g.dim:
            errs.append(f"initial.packet.wavenumber: need {g.dim} entries")

    ex = cfg.experiment
    if ex is not None:
        if len(ex.m_list) < 3:
            errs.append("experiment.m_list: need at least 3 values")
        elif any(b <= a for a, b in zip(ex.m_list, ex.m_list[1:])) or min(ex.m_list) <= 0:
            errs.append("experiment.m_list: must be positive and strictly ascending")
        if ex.T is not None and not ex.T > 0:
            errs.append(f"experiment.T: must be positive, got {ex.T}")
    return errs


def _format_validation(exc: ValidationError) -> list[str]:
    out = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"])
        msg = e["msg"].removeprefix("Value error, ")
        if e["type"] == "extra_forbidden":
            msg = "unknown key"
        for part in msg.split("; "):
            out.append(f"{loc}: {part}" if loc else part)
    return out


def parse_config(text: str) -> RunConfig:
    """Parse YAML text, rejecting unknown keys and reporting every violation."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError([f"syntax error: {where}{getattr(exc, 'problem', exc)}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


# -- resolution to a natural-unit problem ----------------------------------


@dataclass
class Problem:
    """Everything a run needs, expressed in natural units."""

    grid: Grid
    m: float
    V: np.ndarray
    units: UnitSystem
    config: RunConfig
    base_dir: Path

    @property
    def is_mks(self) -> bool:
        return self.config.physics.units != "natural"

    def length(self, x):
        return np.asarray(x, dtype=float) / self.units.length_unit

    def time(self, t: float) -> float:
        return float(t) / self.units.time_unit

    def energy(self, e):
        return np.asarray(e, dtype=float) / self.units.energy_unit


def resolve(cfg: RunConfig, base_dir: Path | str = ".") -> Problem:
    """Build the natural-unit grid, mass and potential for a config."""
    ph = cfg.physics
    if ph.units == "natural":
        units = UnitSystem.natural(ph.m)
    else:
        units = UnitSystem(**ph.units.model_dump())
    m = units.natural_mass
    lam = units.length_unit
    g = cfg.grid
    try:
        grid = make_grid(g.dim, np.asarray(g.extents) / lam, g.points, g.bc)
    except GridError as exc:
        raise ConfigError([f"grid: {exc}"]) from exc
    base_dir = Path(base_dir)
    problem = Problem(grid, m, np.zeros(grid.shape), units, cfg, base_dir)
    problem.V = _potential(problem)
    return problem


def _potential(problem: Problem) -> np.ndarray:
    pot = problem.config.physics.potential
    grid, units = problem.grid, problem.units
    try:
        if pot.kind == "free":
            return F.build_potential(F.Free(), grid)
        if pot.kind == "box":
            return F.build_potential(F.Box(), grid)
        if pot.kind == "harmonic":
            omega = natural_frequency(units, pot.omega)
            mass = problem.m if pot.trap_mass is None else pot.trap_mass * units.c * units.length_unit / units.h
            return F.build_potential(F.HarmonicOscillator(omega), grid, mass)
        if pot.kind == "barrier":
            spec = F.GaussianBarrier(
                float(problem.energy(pot.height)),
                tuple(problem.length(pot.center)),
                float(problem.length(pot.width)),
            )
            return F.build_potential(spec, grid)
        if pot.values is not None:
            values = np.asarray(pot.values, dtype=float)
        else:
            values = np.loadtxt(problem.base_dir / pot.path, dtype=float).ravel()
        return F.build_potential(F.Tabulated(problem.energy(values)), grid)
    except (ValueError, OSError) as exc:
        raise ConfigError([f"physics.potential: {exc}"]) from exc


def integrator_config(problem: Problem) -> IntegratorConfig:
    s = problem.config.scheme
    if s.dt == "auto":
        lim = stability_limit(problem.m, problem.grid, problem.V)
        dt = min(lim.dt_fast, lim.dt_accuracy) if s.kind == FULL else lim.dt_accuracy
    else:
        dt = problem.time(s.dt)
    return IntegratorConfig(dt=dt, scheme=s.kind, tol=s.tol, max_iter=s.max_iter)
