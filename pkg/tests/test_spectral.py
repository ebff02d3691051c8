import numpy as np
import pytest

from quadham.fields import GaussianBarrier, HarmonicOscillator, build_potential
from quadham.grid import make_grid
from quadham.spectral import (
    build_operator,
    degenerate_blocks,
    dense_eigenpairs,
    lanczos_eigenpairs,
    lowest_eigenpairs,
    mode_inner,
    normal_mode_state,
    rotating_solution,
    rotation_period,
    subspace_distance,
    verify_effective_hamiltonian,
)
from quadham import observables as obs


def box_closed_form(n, N, L=1.0):
    # discrete spectrum of -lap/2 on N interior nodes of [0, L]
    return (2 - 2 * np.cos(n * np.pi / (N + 1))) * ((N + 1) / L) ** 2 / 2


def test_operator_is_symmetric():
    g = make_grid(2, [(0, 1), (0, 2)], (7, 9), "dirichlet")
    V = np.random.default_rng(0).normal(size=g.shape)
    A = build_operator(g, 2.0, V).to_dense()
    np.testing.assert_allclose(A, A.T, atol=1e-12)


def test_box_dense_closed_form():
    N = 63
    g = make_grid(1, (0, 1), N, "dirichlet")
    pairs = dense_eigenpairs(build_operator(g, 1.0, np.zeros(N)), 6)
    for n, p in enumerate(pairs, start=1):
        assert p.energy == pytest.approx(box_closed_form(n, N), rel=1e-11)
        assert p.residual < 1e-9


def test_modes_are_normalised_and_orthogonal():
    g = make_grid(1, (0, 1), 40, "dirichlet")
    pairs = lowest_eigenpairs(build_operator(g, 1.0, np.zeros(40)), 4)
    gram = np.array([[mode_inner(a, b) for b in pairs] for a in pairs])
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-12)
    for p in pairs:
        assert p.mode[np.argmax(np.abs(p.mode))] > 0


def test_lanczos_matches_dense_1d():
    g = make_grid(1, (-8, 8), 300)
    V = build_potential(HarmonicOscillator(1.0), g)
    op = build_operator(g, 1.0, V)
    d = dense_eigenpairs(op, 6)
    lz = lanczos_eigenpairs(op, 6, tol=1e-10)
    np.testing.assert_allclose([p.energy for p in lz], [p.energy for p in d], rtol=1e-8)
    assert subspace_distance(d, lz) < 1e-6


def test_lanczos_matches_dense_2d_with_degeneracy():
    # square periodic domain: the first excited level is four-fold degenerate
    g = make_grid(2, [(0, 1), (0, 1)], (24, 24))
    op = build_operator(g, 1.0, np.zeros(g.shape))
    d = dense_eigenpairs(op, 5)
    lz = lanczos_eigenpairs(op, 5, tol=1e-10)
    np.testing.assert_allclose([p.energy for p in lz], [p.energy for p in d], rtol=1e-8, atol=1e-10)
    assert degenerate_blocks(d) == [[0], [1, 2, 3, 4]]
    assert subspace_distance(d[1:], lz[1:]) < 1e-6


def test_lanczos_2d_box_closed_form():
    g = make_grid(2, [(0, 1), (0, 1)], (30, 20), "dirichlet")
    pairs = lanczos_eigenpairs(build_operator(g, 1.0, np.zeros(g.shape)), 3, tol=1e-10)
    expected = sorted(
        box_closed_form(a, 30) + box_closed_form(b, 20) for a in range(1, 5) for b in range(1, 5)
    )[:3]
    np.testing.assert_allclose([p.energy for p in pairs], expected, rtol=1e-9)


def test_method_selection_and_validation():
    g = make_grid(1, (0, 1), 20, "dirichlet")
    op = build_operator(g, 1.0, np.zeros(20))
    with pytest.raises(ValueError):
        lowest_eigenpairs(op, 0)
    with pytest.raises(ValueError):
        lowest_eigenpairs(op, 21)
    with pytest.raises(ValueError):
        lowest_eigenpairs(op, 2, method="arpack")


def test_mass_scaling_of_free_spectrum():
    g = make_grid(1, (0, 1), 31, "dirichlet")
    e1 = lowest_eigenpairs(build_operator(g, 1.0, np.zeros(31)), 3)
    e4 = lowest_eigenpairs(build_operator(g, 4.0, np.zeros(31)), 3)
    np.testing.assert_allclose([p.energy * 4 for p in e4], [p.energy for p in e1], rtol=1e-12)


def test_barrier_raises_levels():
    g = make_grid(1, (-4, 4), 120, "dirichlet")
    free = lowest_eigenpairs(build_operator(g, 1.0, np.zeros(120)), 4)
    V = build_potential(GaussianBarrier(3.0, 0.0, 0.3), g)
    bar = lowest_eigenpairs(build_operator(g, 1.0, V), 4)
    assert all(b.energy >= f.energy for b, f in zip(bar, free))


def test_symmetric_potential_gives_parity_modes():
    g = make_grid(1, (-5, 5), 101, "dirichlet")
    V = build_potential(HarmonicOscillator(1.0), g)
    pairs = lowest_eigenpairs(build_operator(g, 1.0, V), 4)
    for n, p in enumerate(pairs):
        np.testing.assert_allclose(p.mode[::-1], (-1) ** n * p.mode, atol=1e-9)


def test_ground_state_of_harmonic_oscillator():
    g = make_grid(1, (-8, 8), 256)
    V = build_potential(HarmonicOscillator(1.0), g)
    assert lowest_eigenpairs(build_operator(g, 1.0, V), 1)[0].energy == pytest.approx(0.5, abs=2e-3)


def test_normal_mode_state_energy():
    g = make_grid(1, (0, 1), 31, "dirichlet")
    pair = lowest_eigenpairs(build_operator(g, 1.0, np.zeros(31)), 1)[0]
    s = normal_mode_state(pair, 0.7)
    assert obs.norm(s) == pytest.approx(1.0, rel=1e-12)
    assert obs.hamiltonian_reduced(s, 1.0, np.zeros(31)) == pytest.approx(pair.energy, rel=1e-12)
    back = rotating_solution(rotating_solution(s, pair.energy, 0.3), pair.energy, -0.3)
    assert obs.l2_distance(back, s) < 1e-13


@pytest.mark.parametrize("m", [1.0, 4.0])
def test_period_scales_with_mass(m):
    g = make_grid(1, (0, 1), 31, "dirichlet")
    V = np.zeros(31)
    pair = lowest_eigenpairs(build_operator(g, m, V), 1)[0]
    check = verify_effective_hamiltonian(pair, m, V, steps_per_period=400)
    assert check.period == pytest.approx(2 * np.pi * m / box_closed_form(1, 31), rel=1e-10)
    assert check.energy_residual < 1e-10
    assert check.energy_drift < 1e-10


def test_rotation_period_of_sine():
    t = np.linspace(0, 10, 2001)
    assert rotation_period(t, np.sin(2.5 * t + 0.3)) == pytest.approx(2 * np.pi / 2.5, rel=1e-4)
