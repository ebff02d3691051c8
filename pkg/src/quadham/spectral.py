"""Normal modes of the slow sector: the eigenproblem ``E psi = (V - lap/2m) psi``.

Small grids are solved densely; larger ones with a matrix-free block
Lanczos iteration (thick restart, full reorthogonalisation). A normal mode
rotates rigidly in the ``(q, p)`` plane at angular frequency ``E``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import observables as obs
from .dynamics import IntegratorConfig, REDUCED, evolve
from .fields import ReducedState, check_mass
from .grid import Grid, GridError, check_field, inner

DENSE_LIMIT = 4096
DEGENERACY_TOL = 1e-9


class ConvergenceError(RuntimeError):
    pass


class HamiltonianOperator:
    """Matrix-free ``H f = -lap(f)/2m + V f`` on a grid."""

    def __init__(self, grid: Grid, m: float, V: np.ndarray):
        V = np.asarray(V, dtype=float)
        check_field(grid, V)
        self.grid = grid
        self.m = check_mass(m)
        self.V = V

    @property
    def size(self) -> int:
        return self.grid.size

    def apply(self, f: np.ndarray) -> np.ndarray:
        return obs.apply_hamiltonian(self.grid, f, self.m, self.V)

    def matmat(self, X: np.ndarray) -> np.ndarray:
        """Apply to the columns of an ``(nodes, k)`` array."""
        X = np.asarray(X, dtype=float)
        cols = X.shape[1]
        F = X.reshape(self.grid.shape + (cols,))
        V = self.V.reshape(self.grid.shape + (1,))
        from .grid import laplacian

        return (-laplacian(self.grid, F) / (2.0 * self.m) + V * F).reshape(self.size, cols)

    def to_dense(self) -> np.ndarray:
        return self.matmat(np.eye(self.size))


def build_operator(grid: Grid, m: float, V: np.ndarray) -> HamiltonianOperator:
    return HamiltonianOperator(grid, m, V)


@dataclass(frozen=True, eq=False)
class EigenPair:
    energy: float
    mode: np.ndarray
    residual: float
    grid: Grid


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def _pairs(op: HamiltonianOperator, energies, vectors) -> list[EigenPair]:
    """Rescale Euclidean-orthonormal columns to grid-orthonormal modes."""
    w = op.grid.cell_volume
    out = []
    for e, v in zip(energies, vectors.T):
        v = _fix_sign(v) / np.sqrt(w)
        mode = v.reshape(op.grid.shape)
        r = op.apply(mode) - e * mode
        res = float(np.sqrt(inner(op.grid, r, r)))
        out.append(EigenPair(float(e), mode, res, op.grid))
    return out


def dense_eigenpairs(op: HamiltonianOperator, k: int) -> list[EigenPair]:
    evals, evecs = np.linalg.eigh(op.to_dense())
    return _pairs(op, evals[:k], evecs[:, :k])


def _orthonormalize(W: np.ndarray, basis: np.ndarray | None, drop: float = 1e-10) -> np.ndarray:
    # two passes of classical Gram-Schmidt against the basis, then QR
    for _ in range(2):
        if basis is not None and basis.shape[1]:
            W = W - basis @ (basis.T @ W)
    Q, R = np.linalg.qr(W)
    keep = np.abs(np.diag(R)) > drop * max(1.0, np.abs(R).max(initial=0.0))
    return Q[:, keep]


def lanczos_eigenpairs(
    op: HamiltonianOperator,
    k: int,
    tol: float = 1e-10,
    block: int | None = None,
    krylov_dim: int | None = None,
    max_restarts: int = 2000,
    seed: int = 0,
) -> list[EigenPair]:
    """Lowest ``k`` eigenpairs by thick-restart block Lanczos.

    Each cycle grows an orthonormal Krylov basis block by block, fully
    reorthogonalised, does Rayleigh-Ritz on it, and restarts from the best
    ``k + block`` Ritz vectors. Convergence is declared when every wanted
    pair has Euclidean residual ``<= tol * max(1, |E|)``.
    """
    n = op.size
    if k > n:
        raise ValueError(f"k={k} exceeds the number of nodes {n}")
    b = block or min(4, k + 1)
    kdim = krylov_dim or min(n, max(3 * (k + b), 60))
    keep = min(k + b, kdim - b)
    rng = np.random.default_rng(seed)

    W = _orthonormalize(rng.standard_normal((n, b)), None)
    basis, abasis = W, op.matmat(W)
    last = abasis
    rnorm = np.full(k, np.inf)
    for _ in range(max_restarts):
        while basis.shape[1] < kdim:
            W = _orthonormalize(last, basis)
            if W.shape[1] == 0:
                W = _orthonormalize(rng.standard_normal((n, b)), basis)
                if W.shape[1] == 0:
                    break
            W = W[:, : kdim - basis.shape[1]]
            last = op.matmat(W)
            basis = np.hstack([basis, W])
            abasis = np.hstack([abasis, last])
        T = basis.T @ abasis
        theta, Y = np.linalg.eigh(0.5 * (T + T.T))
        ritz = basis @ Y[:, :keep]
        aritz = abasis @ Y[:, :keep]
        resid = aritz - ritz * theta[:keep]
        rnorm = np.linalg.norm(resid, axis=0)
        if basis.shape[1] >= n or np.all(rnorm[:k] <= tol * np.maximum(1.0, np.abs(theta[:k]))):
            return _pairs(op, theta[:k], ritz[:, :k])
        # thick restart: keep the Ritz vectors and continue along their residuals,
        # which span the next Krylov block
        basis, abasis = ritz, aritz
        last = resid[:, np.argsort(rnorm)[::-1][:b]]
    raise ConvergenceError(f"Lanczos did not converge in {max_restarts} restarts (max residual {rnorm[:k].max():.3e})")


def lowest_eigenpairs(op: HamiltonianOperator, k: int, tol: float = 1e-10, method: str = "auto") -> list[EigenPair]:
    """The ``k`` lowest eigenpairs, sorted ascending, modes grid-orthonormal."""
    if k < 1 or k > op.size:
        raise ValueError(f"k must lie in [1, {op.size}], got {k}")
    if method == "auto":
        method = "dense" if op.size <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        pairs = dense_eigenpairs(op, k)
    elif method == "lanczos":
        pairs = lanczos_eigenpairs(op, k, tol=tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return pairs


def degenerate_blocks(pairs: list[EigenPair], tol: float = DEGENERACY_TOL) -> list[list[int]]:
    """Group indices of ``pairs`` whose energies agree within ``tol``."""
    blocks: list[list[int]] = []
    for i, p in enumerate(pairs):
        if blocks and abs(p.energy - pairs[blocks[-1][-1]].energy) <= tol * max(1.0, abs(p.energy)):
            blocks[-1].append(i)
        else:
            blocks.append([i])
    return blocks


def subspace_distance(a: list[EigenPair], b: list[EigenPair]) -> float:
    """Spectral-norm distance between the projectors onto two mode sets."""
    if not a or len(a) != len(b):
        raise ValueError("mode sets must be non-empty and of equal size")
    w = a[0].grid.cell_volume
    A = np.column_stack([p.mode.ravel() for p in a]) * np.sqrt(w)
    B = np.column_stack([p.mode.ravel() for p in b]) * np.sqrt(w)
    return float(np.linalg.norm(A @ A.T - B @ B.T, 2))


def normal_mode_state(pair: EigenPair, phase: float = 0.0) -> ReducedState:
    """Unit-norm slow state ``q = sqrt2 cos(phase) u``, ``p = sqrt2 sin(phase) u``."""
    u = np.sqrt(2.0) * pair.mode
    return ReducedState(pair.grid, np.sin(phase) * u, np.cos(phase) * u)


def rotating_solution(state0: ReducedState, energy: float, t: float) -> ReducedState:
    """Rigid rotation ``q(t) = q0 cos Et + p0 sin Et``, ``p(t) = p0 cos Et - q0 sin Et``."""
    c, s = np.cos(energy * t), np.sin(energy * t)
    return ReducedState(state0.grid, state0.p * c - state0.q * s, state0.q * c + state0.p * s)


def mode_phase(state: ReducedState, mode: np.ndarray) -> float:
    """Angle of the state's projection on ``mode`` in the ``(q, p)`` plane."""
    return float(np.arctan2(inner(state.grid, state.p, mode), inner(state.grid, state.q, mode)))


@dataclass(frozen=True)
class ModeCheck:
    energy_residual: float
    max_phase_error: float
    return_distance: float
    max_distance: float
    energy_drift: float
    period: float


def verify_effective_hamiltonian(
    pair: EigenPair,
    m: float,
    V: np.ndarray,
    steps_per_period: int = 1000,
    phase: float = 0.0,
    tol: float = 1e-12,
) -> ModeCheck:
    """Compare a mode's reduced-integrator evolution over one period with rigid rotation."""
    state0 = normal_mode_state(pair, phase)
    e_res = abs(obs.hamiltonian_reduced(state0, m, V) - pair.energy * obs.norm(state0))
    period = 2.0 * np.pi / abs(pair.energy)
    cfg = IntegratorConfig(dt=period / steps_per_period, scheme=REDUCED, tol=tol)
    theta0 = mode_phase(state0, pair.mode)

    def phase_err(s, t):
        expected = theta0 - pair.energy * t
        d = mode_phase(s, pair.mode) - expected
        return abs((d + np.pi) % (2.0 * np.pi) - np.pi)

    traj = evolve(
        state0,
        m,
        V,
        cfg,
        period,
        observers={
            "phase_error": phase_err,
            "distance": lambda s, t: obs.l2_distance(s, rotating_solution(state0, pair.energy, t)),
            "H": lambda s, t: obs.hamiltonian_reduced(s, m, V),
        },
    )
    h = traj.series["H"]
    return ModeCheck(
        energy_residual=float(e_res),
        max_phase_error=float(traj.series["phase_error"].max()),
        return_distance=obs.l2_distance(traj.final, state0),
        max_distance=float(traj.series["distance"].max()),
        energy_drift=float(np.max(np.abs(h - h[0])) / abs(h[0])),
        period=period,
    )


def rotation_period(times: np.ndarray, signal: np.ndarray) -> float:
    """Period of an oscillating signal from its linearly interpolated zero crossings."""
    crossings = zero_crossings(times, signal)
    if len(crossings) < 2:
        raise ValueError("need at least two zero crossings")
    return 2.0 * (crossings[-1] - crossings[0]) / (len(crossings) - 1)


def zero_crossings(times: np.ndarray, signal: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    idx = np.nonzero(np.signbit(s[:-1]) != np.signbit(s[1:]))[0]
    return t[idx] - s[idx] * (t[idx + 1] - t[idx]) / (s[idx + 1] - s[idx])


def mode_inner(a: EigenPair, b: EigenPair) -> float:
    if a.grid != b.grid:
        raise GridError("modes on different grids")
    return inner(a.grid, a.mode, b.mode)
