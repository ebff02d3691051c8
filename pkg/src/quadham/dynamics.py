"""Time integration of the full field system and of its slow reduction.

Both integrators are one-step Cayley transforms of a linear generator:
implicit midpoint for the full system and Crank-Nicolson for the reduced
(Schrodinger) system. The implicit equations are solved matrix-free with
GMRES to a relative-residual tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import observables as obs
from .fields import FullState, ReducedState, check_mass, full_layout
from .grid import Grid, backward_difference, check_field, forward_difference, laplacian

log = logging.getLogger(__name__)

FULL = "full"
REDUCED = "reduced"

State = Union[FullState, ReducedState]
Observer = Callable[[State, float], float]


class SolverError(RuntimeError):
    """The implicit linear solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class NumericalError(RuntimeError):
    """Non-finite values appeared during time stepping."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    scheme: str = REDUCED
    tol: float = 1e-12
    max_iter: int = 500

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in (FULL, REDUCED):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.tol <= 1e-6:
            raise ValueError(f"tol must lie in (0, 1e-6], got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    series: dict[str, np.ndarray]
    snapshots: list[tuple[float, State]] = field(default_factory=list)
    final: State | None = None

    def __len__(self) -> int:
        return len(self.times)


# -- right-hand sides --------------------------------------------------------


def _check_potential(grid: Grid, V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    check_field(grid, V)
    return V


def full_rhs(f: FullState, m: float, V: np.ndarray) -> FullState:
    """Hamilton's equations of the full quadratic field system."""
    m = check_mass(m)
    g = f.grid
    V = _check_potential(g, V)
    dp = -V * f.q
    dq = V * f.p
    for j in range(g.dim):
        dp = dp - 0.5 * backward_difference(g, f.P[j] + f.pi[j], j)
        dq = dq - 0.5 * backward_difference(g, f.Q[j] + f.eta[j], j)
    grad_p = [forward_difference(g, f.p, j) for j in range(g.dim)]
    grad_q = [forward_difference(g, f.q, j) for j in range(g.dim)]
    dP = tuple(m * f.Q[j] - 0.5 * grad_p[j] for j in range(g.dim))
    dQ = tuple(-m * f.P[j] - 0.5 * grad_q[j] for j in range(g.dim))
    dpi = tuple(m * f.eta[j] - 0.5 * grad_p[j] for j in range(g.dim))
    deta = tuple(-m * f.pi[j] - 0.5 * grad_q[j] for j in range(g.dim))
    return FullState(g, dp, dq, dP, dQ, dpi, deta)


def reduced_rhs(r: ReducedState, m: float, V: np.ndarray) -> ReducedState:
    """``dp/dt = -H q``, ``dq/dt = H p`` with ``H = -lap/2m + V``."""
    m = check_mass(m)
    V = _check_potential(r.grid, V)
    return ReducedState(
        r.grid,
        -obs.apply_hamiltonian(r.grid, r.q, m, V),
        obs.apply_hamiltonian(r.grid, r.p, m, V),
    )


class _FullGenerator:
    """Vector form of :func:`full_rhs` without per-call state validation."""

    def __init__(self, grid: Grid, m: float, V: np.ndarray):
        self.grid, self.m, self.V = grid, m, V
        self.layout = full_layout(grid)
        self.size = self.layout[-1][1]

    def _views(self, x):
        return [x[a:b].reshape(shape) for a, b, shape in self.layout]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        g, m, V, n = self.grid, self.m, self.V, self.grid.dim
        p, q, *hid = self._views(x)
        P, Q, pi, eta = (hid[k * n:(k + 1) * n] for k in range(4))
        out = np.empty_like(x)
        dp, dq, *dhid = self._views(out)
        dP, dQ, dpi, deta = (dhid[k * n:(k + 1) * n] for k in range(4))
        dp[...] = -V * q
        dq[...] = V * p
        for j in range(n):
            dp -= 0.5 * backward_difference(g, P[j] + pi[j], j)
            dq -= 0.5 * backward_difference(g, Q[j] + eta[j], j)
            gp = forward_difference(g, p, j)
            gq = forward_difference(g, q, j)
            dP[j][...] = m * Q[j] - 0.5 * gp
            dQ[j][...] = -m * P[j] - 0.5 * gq
            dpi[j][...] = m * eta[j] - 0.5 * gp
            deta[j][...] = -m * pi[j] - 0.5 * gq
        return out


# -- linear solves ----------------------------------------------------------


def _solve(matvec, rhs: np.ndarray, x0: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    n = rhs.size
    op = LinearOperator((n, n), matvec=matvec, dtype=rhs.dtype)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    x, info = gmres(op, rhs, x0=x0, rtol=tol, atol=0.0, restart=min(60, n), maxiter=max_iter)
    res = np.linalg.norm(rhs - matvec(x)) / bnorm
    if info != 0 or not np.isfinite(res) or res > 10.0 * tol:
        raise SolverError("implicit step did not converge", float(res))
    return x


def full_step(f: FullState, m: float, V: np.ndarray, cfg: IntegratorConfig, dt: float | None = None) -> FullState:
    """One implicit-midpoint step ``(I - dt/2 L) f+ = (I + dt/2 L) f``.

    ``dt`` overrides ``cfg.dt`` (a negative value steps backwards).
    """
    m = check_mass(m)
    V = _check_potential(f.grid, V)
    gen = _FullGenerator(f.grid, m, V)
    return FullState.from_vector(f.grid, _full_step_vec(gen, f.to_vector(), cfg, cfg.dt if dt is None else dt))


def _full_step_vec(gen: _FullGenerator, x: np.ndarray, cfg: IntegratorConfig, dt: float) -> np.ndarray:
    h = 0.5 * dt
    ax = gen(x)
    rhs = x + h * ax
    return _solve(lambda y: y - h * gen(y), rhs, x + dt * ax, cfg.tol, cfg.max_iter)


def _reduced_step_vec(grid: Grid, m: float, V: np.ndarray, z: np.ndarray, cfg: IntegratorConfig, dt: float) -> np.ndarray:
    """Crank-Nicolson on ``z = q + i p`` (so ``dz/dt = -i H z``)."""
    shape = grid.shape
    a = 0.5j * dt

    def ham(v):
        u = v.reshape(shape)
        hr = obs.apply_hamiltonian(grid, u.real, m, V)
        hi = obs.apply_hamiltonian(grid, u.imag, m, V)
        return (hr + 1j * hi).ravel()

    rhs = z - a * ham(z)
    return _solve(lambda v: v + a * ham(v), rhs, z, cfg.tol, cfg.max_iter)


def reduced_step(r: ReducedState, m: float, V: np.ndarray, cfg: IntegratorConfig, dt: float | None = None) -> ReducedState:
    """One Crank-Nicolson step ``(I + i dt/2 H) psi+ = (I - i dt/2 H) psi``."""
    m = check_mass(m)
    V = _check_potential(r.grid, V)
    z = (r.q + 1j * r.p).ravel()
    z = _reduced_step_vec(r.grid, m, V, z, cfg, cfg.dt if dt is None else dt).reshape(r.grid.shape)
    return ReducedState(r.grid, z.imag, z.real)


# -- trajectories -----------------------------------------------------------


def default_observers(state: State, m: float, V: np.ndarray) -> dict[str, Observer]:
    """The standard observable columns for the kind of ``state``."""
    from .fields import adiabatic_lift, project

    if isinstance(state, FullState):
        return {
            "norm": lambda s, t: obs.norm(project(s)),
            "H_full": lambda s, t: obs.hamiltonian_full(s, m, V),
            "H_reduced": lambda s, t: obs.hamiltonian_reduced(project(s), m, V),
            "hidden_energy": lambda s, t: obs.hidden_energy(s, m),
        }
    return {
        "norm": lambda s, t: obs.norm(s),
        "H_full": lambda s, t: obs.hamiltonian_full(adiabatic_lift(s, m), m, V),
        "H_reduced": lambda s, t: obs.hamiltonian_reduced(s, m, V),
        "H_flux": lambda s, t: obs.hamiltonian_flux_form(s, reduced_rhs(s, m, V)),
        "hidden_energy": lambda s, t: obs.hidden_energy(adiabatic_lift(s, m), m),
    }


def step_count(t_final: float, dt: float) -> int:
    """Number of equal steps covering ``t_final`` with step at most ``dt``."""
    if t_final == 0:
        return 0
    return max(1, math.ceil(t_final / dt - 1e-9))


def evolve(
    state: State,
    m: float,
    V: np.ndarray,
    cfg: IntegratorConfig,
    t_final: float,
    observers: Mapping[str, Observer] | None = None,
    observe_every: int = 1,
    snapshot_every: int = 0,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate ``state`` to ``t0 + t_final`` and sample observables.

    The step is shrunk to ``t_final / ceil(t_final / cfg.dt)`` so the run
    ends exactly at ``t_final``. The first and last states are always
    sampled.
    """
    if not (np.isfinite(t_final) and t_final >= 0):
        raise ValueError(f"t_final must be non-negative, got {t_final}")
    m = check_mass(m)
    grid = state.grid
    V = _check_potential(grid, V)
    full = isinstance(state, FullState)
    if full != (cfg.scheme == FULL):
        raise ValueError(f"scheme {cfg.scheme!r} does not match state type {type(state).__name__}")
    if not state.is_finite():
        raise NumericalError("initial state contains non-finite values")
    if observers is None:
        observers = default_observers(state, m, V)

    nsteps = step_count(t_final, cfg.dt)
    dt = t_final / nsteps if nsteps else cfg.dt

    if full:
        gen = _FullGenerator(grid, m, V)
        x = state.to_vector()
        advance = lambda v: _full_step_vec(gen, v, cfg, dt)  # noqa: E731
        unpack = lambda v: FullState.from_vector(grid, v)  # noqa: E731
    else:
        x = (state.q + 1j * state.p).ravel()
        advance = lambda v: _reduced_step_vec(grid, m, V, v, cfg, dt)  # noqa: E731

        def unpack(v):
            z = v.reshape(grid.shape)
            return ReducedState(grid, z.imag, z.real)

    times: list[float] = []
    series: dict[str, list[float]] = {name: [] for name in observers}
    snapshots: list[tuple[float, State]] = []

    def record(s: State, t: float) -> None:
        times.append(t)
        for name, fn in observers.items():
            series[name].append(float(fn(s, t)))

    current = state
    record(current, t0)
    if snapshot_every:
        snapshots.append((t0, current))
    for i in range(1, nsteps + 1):
        x = advance(x)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state after step {i} (t={t0 + i * dt:.6g})")
        t = t0 + i * dt
        last = i == nsteps
        if last or i % observe_every == 0 or (snapshot_every and i % snapshot_every == 0):
            current = unpack(x)
            if last or i % observe_every == 0:
                record(current, t)
            if snapshot_every and (i % snapshot_every == 0 or last):
                snapshots.append((t, current))
    final = unpack(x) if nsteps else state
    return Trajectory(
        times=np.asarray(times),
        series={k: np.asarray(v) for k, v in series.items()},
        snapshots=snapshots,
        final=final,
    )


class StabilityLimit(NamedTuple):
    dt_fast: float
    dt_accuracy: float


def stability_limit(m: float, grid: Grid, V: np.ndarray) -> StabilityLimit:
    """Recommended step sizes: resolve the hidden frequency ``m`` and the top slow frequency."""
    m = check_mass(m)
    dx_min = min(grid.spacing)
    vmax = float(np.max(np.abs(V))) if np.size(V) else 0.0
    return StabilityLimit(0.1 / m, 0.1 / max(vmax, 2.0 / (m * dx_min**2)))
