"""Scalar functionals of states: norm, the Hamiltonian forms, distances."""

from __future__ import annotations

import numpy as np

from .fields import FullState, ReducedState, WaveFunction, check_mass
from .grid import Grid, backward_difference, forward_difference, inner, laplacian


def norm(r: ReducedState) -> float:
    """``integral (p^2 + q^2) / 2``, equal to ``integral |psi|^2``."""
    return 0.5 * inner(r.grid, r.p, r.p) + 0.5 * inner(r.grid, r.q, r.q)


def hidden_energy(f: FullState, m: float) -> float:
    """The ``-m/2 sum (P^2 + Q^2 + pi^2 + eta^2)`` part of the full Hamiltonian."""
    return -0.5 * m * sum(inner(f.grid, c, c) for c in f.hidden())


def hidden_amplitude(f: FullState) -> float:
    return max(float(np.max(np.abs(c))) for c in f.hidden())


def hamiltonian_full(f: FullState, m: float, V: np.ndarray) -> float:
    """Quadrature of the full quadratic Hamiltonian density.

    The gradient couplings use the staggered difference pair, so the
    ``p d(Q + eta)`` term is evaluated at the nodes and the
    ``(P + pi) d q`` term at the half-nodes.
    """
    m = check_mass(m)
    g = f.grid
    h = 0.5 * inner(g, V, f.p**2 + f.q**2) + hidden_energy(f, m)
    for j in range(g.dim):
        div = backward_difference(g, f.Q[j] + f.eta[j], j)
        grad = forward_difference(g, f.q, j)
        h -= 0.5 * inner(g, f.p, div)
        h -= 0.5 * inner(g, f.P[j] + f.pi[j], grad)
    return h


def apply_hamiltonian(grid: Grid, f: np.ndarray, m: float, V: np.ndarray) -> np.ndarray:
    """``(-1/2m lap + V) f``."""
    return -laplacian(grid, f) / (2.0 * m) + V * f


def hamiltonian_reduced(r: ReducedState, m: float, V: np.ndarray) -> float:
    m = check_mass(m)
    g = r.grid
    return 0.5 * (
        inner(g, V, r.p**2 + r.q**2)
        - inner(g, r.p, laplacian(g, r.p)) / (2.0 * m)
        - inner(g, r.q, laplacian(g, r.q)) / (2.0 * m)
    )


def hamiltonian_flux_form(r: ReducedState, rdot: ReducedState) -> float:
    """``integral (p dq/dt - q dp/dt) / 2``."""
    return 0.5 * inner(r.grid, r.p, rdot.q) - 0.5 * inner(r.grid, r.q, rdot.p)


def energy_expectation(w: WaveFunction, m: float, V: np.ndarray) -> float:
    """``Re integral psi* (-1/2m lap + V) psi`` in real arithmetic."""
    m = check_mass(m)
    g = w.grid
    re, im = w.psi.real, w.psi.imag
    return inner(g, re, apply_hamiltonian(g, re, m, V)) + inner(g, im, apply_hamiltonian(g, im, m, V))


def energy_variance(r: ReducedState, m: float, V: np.ndarray) -> float:
    """``<H^2> - <H>^2`` of the normalised state."""
    g = r.grid
    n = norm(r)
    hp = apply_hamiltonian(g, r.p, m, V)
    hq = apply_hamiltonian(g, r.q, m, V)
    mean = 0.5 * (inner(g, r.p, hp) + inner(g, r.q, hq)) / n
    second = 0.5 * (inner(g, hp, hp) + inner(g, hq, hq)) / n
    return max(second - mean**2, 0.0)


def l2_distance(a: ReducedState, b: ReducedState) -> float:
    d = a - b
    return float(np.sqrt(inner(d.grid, d.p, d.p) + inner(d.grid, d.q, d.q)))
