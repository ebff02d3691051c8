"""Uniform tensor grids and the finite-difference operators used on them.

Fields are plain ``numpy`` arrays whose leading axes match ``Grid.shape``;
extra trailing axes are carried along untouched, so every operator also
acts column-wise on a batch of fields.

Three first-difference operators are provided:

* :func:`partial` -- the central difference, skew-adjoint under :func:`inner`.
* :func:`forward_difference` -- node values to the half-nodes staggered
  along one axis.
* :func:`backward_difference` -- half-node values back to the nodes.

The forward/backward pair satisfies
``inner(forward_difference(a), g) == -inner(a, backward_difference(g))``
and ``backward_difference(forward_difference(f)) == laplacian(f)`` exactly,
which is what lets the hidden-variable coupling reduce to the compact
Laplacian without an O(dx^2) mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PERIODIC = "periodic"
DIRICHLET = "dirichlet"
MAX_DIM = 3


class GridError(ValueError):
    """Raised for invalid grid parameters or mismatched fields."""


@dataclass(frozen=True)
class Grid:
    extents: tuple[tuple[float, float], ...]
    points: tuple[int, ...]
    bc: str = PERIODIC

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.bc == PERIODIC:
            return tuple((b - a) / n for (a, b), n in zip(self.extents, self.points))
        return tuple((b - a) / (n + 1) for (a, b), n in zip(self.extents, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in self.extents)

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(0.5 * (a + b) for a, b in self.extents)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        a, _ = self.extents[axis]
        dx = self.spacing[axis]
        i = np.arange(self.points[axis], dtype=float)
        if self.bc == PERIODIC:
            return a + i * dx
        return a + (i + 1.0) * dx

    def staggered_axis_coordinates(self, axis: int) -> np.ndarray:
        """Half-node coordinates along ``axis`` (home of the hidden component)."""
        a, _ = self.extents[axis]
        dx = self.spacing[axis]
        n = self.staggered_shape(axis)[axis]
        i = np.arange(n, dtype=float)
        return a + (i + 0.5) * dx

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(
            np.meshgrid(*[self.axis_coordinates(j) for j in range(self.dim)], indexing="ij")
        )

    def staggered_shape(self, axis: int) -> tuple[int, ...]:
        # Dirichlet keeps one extra half-node so both walls are represented.
        if self.bc == PERIODIC:
            return self.shape
        shape = list(self.shape)
        shape[axis] += 1
        return tuple(shape)

    def to_metadata(self) -> dict:
        return {
            "dim": self.dim,
            "extents": [list(e) for e in self.extents],
            "points": list(self.points),
            "bc": self.bc,
        }


def make_grid(
    dim: int,
    extents: Sequence[Sequence[float]] | Sequence[float],
    points: Sequence[int] | int,
    bc: str = PERIODIC,
) -> Grid:
    """Build a validated :class:`Grid`.

    ``extents`` may be a single ``(a, b)`` pair for ``dim == 1`` and
    ``points`` a single integer, both broadcast to every axis.
    """
    if not isinstance(dim, (int, np.integer)) or dim < 1:
        raise GridError(f"dim must be a positive integer, got {dim!r}")
    if dim > MAX_DIM:
        raise GridError(f"dim={dim} is not supported (at most {MAX_DIM})")
    bc = str(bc).lower()
    if bc not in (PERIODIC, DIRICHLET):
        raise GridError(f"unsupported boundary condition {bc!r}")

    ext = np.asarray(extents, dtype=float)
    if ext.ndim == 1:
        ext = np.broadcast_to(ext, (dim, 2))
    if ext.shape != (dim, 2):
        raise GridError(f"extents must have shape ({dim}, 2), got {ext.shape}")
    if not np.all(np.isfinite(ext)):
        raise GridError("extents must be finite")
    if np.any(ext[:, 1] <= ext[:, 0]):
        raise GridError(f"degenerate interval in extents {ext.tolist()}")

    pts = np.atleast_1d(np.asarray(points))
    if pts.size == 1:
        pts = np.repeat(pts, dim)
    if pts.shape != (dim,):
        raise GridError(f"points must have {dim} entries, got {pts.tolist()}")
    if not np.all(pts == np.floor(pts)):
        raise GridError(f"points must be integers, got {pts.tolist()}")
    if np.any(pts < 3):
        raise GridError(f"need at least 3 points per axis, got {pts.tolist()}")

    return Grid(
        extents=tuple((float(a), float(b)) for a, b in ext),
        points=tuple(int(n) for n in pts),
        bc=bc,
    )


def check_field(grid: Grid, f: np.ndarray, shape: tuple[int, ...] | None = None) -> None:
    expected = grid.shape if shape is None else shape
    if np.shape(f)[: grid.dim] != expected:
        raise GridError(f"field shape {np.shape(f)} does not match grid shape {expected}")


def _check_axis(grid: Grid, axis: int) -> None:
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for a {grid.dim}-d grid")


def _pad_zero(f: np.ndarray, axis: int) -> np.ndarray:
    width = [(0, 0)] * f.ndim
    width[axis] = (1, 1)
    return np.pad(f, width)


def partial(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    """Central difference ``(f[i+1] - f[i-1]) / (2 dx)`` along ``axis``."""
    _check_axis(grid, axis)
    check_field(grid, f)
    f = np.asarray(f, dtype=float)
    dx = grid.spacing[axis]
    if grid.bc == PERIODIC:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * dx)
    g = _pad_zero(f, axis)
    n = f.shape[axis]
    hi = np.take(g, np.arange(2, n + 2), axis=axis)
    lo = np.take(g, np.arange(0, n), axis=axis)
    return (hi - lo) / (2.0 * dx)


def forward_difference(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    """Node field -> half-node field: ``(f[i+1] - f[i]) / dx``.

    With Dirichlet walls the result has one more entry along ``axis``; the
    extra half-nodes sit between each wall and its neighbouring node.
    """
    _check_axis(grid, axis)
    check_field(grid, f)
    f = np.asarray(f, dtype=float)
    dx = grid.spacing[axis]
    if grid.bc == PERIODIC:
        return (np.roll(f, -1, axis) - f) / dx
    return np.diff(_pad_zero(f, axis), axis=axis) / dx


def backward_difference(grid: Grid, g: np.ndarray, axis: int) -> np.ndarray:
    """Half-node field -> node field; the negative adjoint of :func:`forward_difference`."""
    _check_axis(grid, axis)
    check_field(grid, g, grid.staggered_shape(axis))
    g = np.asarray(g, dtype=float)
    dx = grid.spacing[axis]
    if grid.bc == PERIODIC:
        return (g - np.roll(g, 1, axis)) / dx
    return np.diff(g, axis=axis) / dx


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Compact ``(2n+1)``-point Laplacian with the grid's boundary policy."""
    check_field(grid, f)
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    for axis, dx in enumerate(grid.spacing):
        if grid.bc == PERIODIC:
            out += (np.roll(f, -1, axis) - 2.0 * f + np.roll(f, 1, axis)) / dx**2
        else:
            g = _pad_zero(f, axis)
            n = f.shape[axis]
            hi = np.take(g, np.arange(2, n + 2), axis=axis)
            lo = np.take(g, np.arange(0, n), axis=axis)
            out += (hi - 2.0 * f + lo) / dx**2
    return out


def inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Riemann-sum quadrature of ``a * b`` with weight ``prod(dx)``.

    Works for node fields and for half-node fields alike, since both carry
    the same cell volume.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise GridError(f"inner: shape mismatch {a.shape} vs {b.shape}")
    if a.shape[: grid.dim] != grid.shape and not any(
        a.shape[: grid.dim] == grid.staggered_shape(j) for j in range(grid.dim)
    ):
        raise GridError(f"inner: field shape {a.shape} does not belong to grid {grid.shape}")
    return float(np.sum(a * b) * grid.cell_volume)
