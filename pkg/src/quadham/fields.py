"""State containers, the wave-function map, potentials and initial states."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .grid import (
    DIRICHLET,
    Grid,
    GridError,
    check_field,
    forward_difference,
    inner,
)

SQRT2 = np.sqrt(2.0)


def _as_field(values, shape) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != shape:
        raise GridError(f"field shape {arr.shape} does not match {shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ReducedState:
    """The slow pair ``(p, q)`` on a grid."""

    grid: Grid
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _as_field(self.p, self.grid.shape))
        object.__setattr__(self, "q", _as_field(self.q, self.grid.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "ReducedState":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    def _check(self, other: "ReducedState") -> None:
        if other.grid != self.grid:
            raise GridError("states live on different grids")

    def __add__(self, other: "ReducedState") -> "ReducedState":
        self._check(other)
        return ReducedState(self.grid, self.p + other.p, self.q + other.q)

    def __sub__(self, other: "ReducedState") -> "ReducedState":
        self._check(other)
        return ReducedState(self.grid, self.p - other.p, self.q - other.q)

    def __mul__(self, alpha: float) -> "ReducedState":
        return ReducedState(self.grid, alpha * self.p, alpha * self.q)

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q)))


HIDDEN_FAMILIES = ("P", "Q", "pi", "eta")


@dataclass(frozen=True, eq=False)
class FullState:
    """The slow pair plus both hidden vector pairs ``(P, Q)`` and ``(pi, eta)``.

    Component ``j`` of each hidden family lives on the half-nodes staggered
    along axis ``j`` (see :meth:`Grid.staggered_shape`).
    """

    grid: Grid
    p: np.ndarray
    q: np.ndarray
    P: tuple
    Q: tuple
    pi: tuple
    eta: tuple

    def __post_init__(self):
        g = self.grid
        object.__setattr__(self, "p", _as_field(self.p, g.shape))
        object.__setattr__(self, "q", _as_field(self.q, g.shape))
        for name in HIDDEN_FAMILIES:
            comps = getattr(self, name)
            if len(comps) != g.dim:
                raise GridError(f"{name} needs {g.dim} components, got {len(comps)}")
            fixed = tuple(_as_field(c, g.staggered_shape(j)) for j, c in enumerate(comps))
            object.__setattr__(self, name, fixed)

    @classmethod
    def zeros(cls, grid: Grid) -> "FullState":
        hidden = tuple(np.zeros(grid.staggered_shape(j)) for j in range(grid.dim))
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape), hidden, hidden, hidden, hidden)

    def hidden(self):
        """Iterate over every hidden component array."""
        for name in HIDDEN_FAMILIES:
            yield from getattr(self, name)

    def _map(self, fn, other=None) -> "FullState":
        if other is not None and other.grid != self.grid:
            raise GridError("states live on different grids")

        def pick(x, name, j=None):
            if other is None:
                return fn(x)
            y = getattr(other, name) if j is None else getattr(other, name)[j]
            return fn(x, y)

        return FullState(
            self.grid,
            pick(self.p, "p"),
            pick(self.q, "q"),
            *[
                tuple(pick(c, name, j) for j, c in enumerate(getattr(self, name)))
                for name in HIDDEN_FAMILIES
            ],
        )

    def __add__(self, other: "FullState") -> "FullState":
        return self._map(np.add, other)

    def __sub__(self, other: "FullState") -> "FullState":
        return self._map(np.subtract, other)

    def __mul__(self, alpha: float) -> "FullState":
        return self._map(lambda x: alpha * x)

    __rmul__ = __mul__

    def to_vector(self) -> np.ndarray:
        parts = [self.p.ravel(), self.q.ravel()] + [c.ravel() for c in self.hidden()]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, grid: Grid, vec: np.ndarray) -> "FullState":
        layout = full_layout(grid)
        if vec.shape != (layout[-1][1],):
            raise GridError(f"vector length {vec.shape} does not match layout")
        arrays = [vec[a:b].reshape(shape) for a, b, shape in layout]
        n = grid.dim
        hidden = [tuple(arrays[2 + k * n: 2 + (k + 1) * n]) for k in range(4)]
        return cls(grid, arrays[0], arrays[1], *hidden)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.to_vector()).all())


def full_layout(grid: Grid) -> list[tuple[int, int, tuple[int, ...]]]:
    """``(start, stop, shape)`` of every array in :meth:`FullState.to_vector` order."""
    shapes = [grid.shape, grid.shape]
    for _ in HIDDEN_FAMILIES:
        shapes += [grid.staggered_shape(j) for j in range(grid.dim)]
    out, pos = [], 0
    for shape in shapes:
        n = int(np.prod(shape))
        out.append((pos, pos + n, shape))
        pos += n
    return out


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex field ``psi = (q + i p) / sqrt(2)``."""

    grid: Grid
    psi: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.psi, dtype=complex)
        check_field(self.grid, arr)
        object.__setattr__(self, "psi", arr)


def to_wavefunction(r: ReducedState) -> WaveFunction:
    return WaveFunction(r.grid, (r.q + 1j * r.p) / SQRT2)


def from_wavefunction(w: WaveFunction) -> ReducedState:
    return ReducedState(w.grid, SQRT2 * w.psi.imag, SQRT2 * w.psi.real)


def check_mass(m: float) -> float:
    m = float(m)
    if not np.isfinite(m) or m <= 0:
        raise ValueError(f"mass parameter must be positive and finite, got {m}")
    return m


def adiabatic_lift(r: ReducedState, m: float) -> FullState:
    """Put the hidden pairs at their stationary values for the given slow state.

    ``Q_j = eta_j = d_j p / 2m`` and ``P_j = pi_j = -d_j q / 2m`` with ``d_j``
    the forward (staggered) difference.
    """
    m = check_mass(m)
    g = r.grid
    Q = tuple(forward_difference(g, r.p, j) / (2.0 * m) for j in range(g.dim))
    P = tuple(-forward_difference(g, r.q, j) / (2.0 * m) for j in range(g.dim))
    return FullState(g, r.p, r.q, P, Q, P, Q)


def cold_start(r: ReducedState) -> FullState:
    """Slow pair ``r`` with every hidden field set to zero."""
    z = FullState.zeros(r.grid)
    return FullState(r.grid, r.p, r.q, z.P, z.Q, z.pi, z.eta)


def project(f: FullState) -> ReducedState:
    return ReducedState(f.grid, f.p, f.q)


# -- potentials ------------------------------------------------------------


@dataclass(frozen=True)
class Free:
    pass


@dataclass(frozen=True)
class HarmonicOscillator:
    """``V = m omega^2 |x - x_c|^2 / 2`` centred on the domain midpoint."""

    omega: float = 1.0


@dataclass(frozen=True)
class Box:
    """Zero potential; the walls come from a Dirichlet grid."""


@dataclass(frozen=True)
class GaussianBarrier:
    height: float
    center: Union[float, Sequence[float]]
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"barrier width must be positive, got {self.width}")
        if not np.isfinite(self.height):
            raise ValueError("barrier height must be finite")


@dataclass(frozen=True, eq=False)
class Tabulated:
    values: np.ndarray = field(repr=False)


PotentialSpec = Union[Free, HarmonicOscillator, Box, GaussianBarrier, Tabulated]


def _offsets(grid: Grid, center) -> tuple[np.ndarray, ...]:
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    return tuple(x - cj for x, cj in zip(grid.mesh(), c))


def build_potential(spec: PotentialSpec, grid: Grid, m: float = 1.0) -> np.ndarray:
    """Sample the potential described by ``spec`` at the grid nodes."""
    if isinstance(spec, Free):
        return np.zeros(grid.shape)
    if isinstance(spec, Box):
        if grid.bc != DIRICHLET:
            raise ValueError("a Box potential needs a Dirichlet grid")
        return np.zeros(grid.shape)
    if isinstance(spec, HarmonicOscillator):
        m = check_mass(m)
        r2 = sum(d**2 for d in _offsets(grid, grid.center))
        return 0.5 * m * spec.omega**2 * r2
    if isinstance(spec, GaussianBarrier):
        r2 = sum(d**2 for d in _offsets(grid, spec.center))
        return spec.height * np.exp(-r2 / (2.0 * spec.width**2))
    if isinstance(spec, Tabulated):
        values = np.asarray(spec.values, dtype=float)
        if values.size != grid.size:
            raise ValueError(f"tabulated potential has {values.size} values, grid has {grid.size} nodes")
        values = values.reshape(grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("tabulated potential contains non-finite values")
        return values
    raise TypeError(f"unknown potential spec {spec!r}")


# -- initial states --------------------------------------------------------

BOUNDARY_BAND = 0.05
BOUNDARY_MASS_TOL = 1e-8


def boundary_mass(grid: Grid, density: np.ndarray) -> float:
    """Mass of ``density`` within the outer 5% band of every axis."""
    mask = np.zeros(grid.shape, dtype=bool)
    for j, x in enumerate(grid.mesh()):
        a, b = grid.extents[j]
        band = BOUNDARY_BAND * (b - a)
        mask |= (x < a + band) | (x > b - band)
    return float(np.sum(density[mask]) * grid.cell_volume)


def gaussian_packet(grid: Grid, center, width: float, wavenumber=0.0) -> ReducedState:
    """Normalised Gaussian ``exp(-|x-c|^2 / 4 sigma^2 + i k0.x)``."""
    if not width > 0:
        raise ValueError(f"packet width must be positive, got {width}")
    k0 = np.broadcast_to(np.asarray(wavenumber, dtype=float), (grid.dim,))
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    mesh = grid.mesh()
    r2 = sum((x - cj) ** 2 for x, cj in zip(mesh, c))
    phase = sum(kj * x for kj, x in zip(k0, mesh))
    psi = np.exp(-r2 / (4.0 * width**2)) * np.exp(1j * phase)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_volume)
    edge = boundary_mass(grid, np.abs(psi) ** 2)
    if edge > BOUNDARY_MASS_TOL:
        raise ValueError(f"packet touches the boundary: mass {edge:.3e} in the edge band")
    return from_wavefunction(WaveFunction(grid, psi))


def uniform_state(grid: Grid, p: float = 0.0, q: float = 1.0) -> ReducedState:
    return ReducedState(grid, np.full(grid.shape, float(p)), np.full(grid.shape, float(q)))


def packet_width2(r: ReducedState, axis: int = 0) -> float:
    """Second central moment of ``|psi|^2`` along ``axis``."""
    rho = 0.5 * (r.p**2 + r.q**2)
    x = r.grid.mesh()[axis]
    total = inner(r.grid, rho, np.ones_like(rho))
    mean = inner(r.grid, rho, x) / total
    return inner(r.grid, rho, (x - mean) ** 2) / total
