import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_smooth_state, smooth_field
from quadham import observables as obs
from quadham.dynamics import full_rhs, reduced_rhs
from quadham.fields import (
    Box,
    Free,
    FullState,
    GaussianBarrier,
    HarmonicOscillator,
    ReducedState,
    Tabulated,
    adiabatic_lift,
    build_potential,
    cold_start,
    from_wavefunction,
    gaussian_packet,
    packet_width2,
    project,
    to_wavefunction,
    uniform_state,
)
from quadham.grid import make_grid


def test_wavefunction_round_trip(grid2d, rng):
    r = random_smooth_state(grid2d, rng)
    back = from_wavefunction(to_wavefunction(r))
    np.testing.assert_allclose(back.p, r.p, rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(back.q, r.q, rtol=1e-15, atol=1e-15)


def test_norm_matches_wavefunction_norm(grid1d, rng):
    r = random_smooth_state(grid1d, rng)
    w = to_wavefunction(r)
    assert obs.norm(r) == pytest.approx(np.sum(np.abs(w.psi) ** 2) * grid1d.cell_volume, rel=1e-14)


def test_lift_then_project_is_identity(grid2d, rng):
    r = random_smooth_state(grid2d, rng)
    f = adiabatic_lift(r, 7.0)
    np.testing.assert_array_equal(project(f).p, r.p)
    np.testing.assert_array_equal(project(f).q, r.q)
    for P, pi, Q, eta in zip(f.P, f.pi, f.Q, f.eta):
        np.testing.assert_array_equal(P, pi)
        np.testing.assert_array_equal(Q, eta)


def test_lift_is_stationary_for_hidden_fields(grid2d, rng):
    r = random_smooth_state(grid2d, rng)
    m = 13.0
    d = full_rhs(adiabatic_lift(r, m), m, np.zeros(grid2d.shape))
    for c in d.hidden():
        assert np.max(np.abs(c)) < 1e-12 * m


def test_full_rhs_at_lift_matches_reduced(grid2d, rng):
    r = random_smooth_state(grid2d, rng)
    V = smooth_field(grid2d, rng)
    m = 3.0
    d_full = full_rhs(adiabatic_lift(r, m), m, V)
    d_red = reduced_rhs(r, m, V)
    np.testing.assert_allclose(d_full.p, d_red.p, atol=1e-10)
    np.testing.assert_allclose(d_full.q, d_red.q, atol=1e-10)


def test_cold_start_has_zero_hidden(grid1d, rng):
    f = cold_start(random_smooth_state(grid1d, rng))
    assert obs.hidden_energy(f, 5.0) == 0.0
    assert obs.hidden_amplitude(f) == 0.0


def test_full_vector_round_trip(grid2d, rng):
    f = adiabatic_lift(random_smooth_state(grid2d, rng), 2.0)
    g = FullState.from_vector(grid2d, f.to_vector())
    np.testing.assert_array_equal(g.to_vector(), f.to_vector())


def test_mass_must_be_positive(grid1d):
    r = uniform_state(grid1d)
    for bad in (0.0, -1.0, np.nan, np.inf):
        with pytest.raises(ValueError):
            adiabatic_lift(r, bad)


def test_state_shape_checked(grid1d):
    with pytest.raises(ValueError):
        ReducedState(grid1d, np.zeros(3), np.zeros(grid1d.shape))


def test_potentials():
    g = make_grid(1, (-2.0, 2.0), 40)
    x = g.axis_coordinates(0)
    np.testing.assert_array_equal(build_potential(Free(), g), 0)
    np.testing.assert_allclose(build_potential(HarmonicOscillator(2.0), g, 3.0), 0.5 * 3 * 4 * x**2)
    bar = build_potential(GaussianBarrier(5.0, 0.5, 0.25), g)
    np.testing.assert_allclose(bar, 5 * np.exp(-((x - 0.5) ** 2) / (2 * 0.25**2)))
    np.testing.assert_array_equal(build_potential(Tabulated(np.arange(40.0)), g), np.arange(40.0))
    with pytest.raises(ValueError):
        build_potential(Box(), g)
    with pytest.raises(ValueError):
        build_potential(Tabulated(np.arange(39.0)), g)
    with pytest.raises(ValueError):
        build_potential(Tabulated(np.full(40, np.nan)), g)


def test_gaussian_packet_norm_and_width():
    g = make_grid(1, (-10.0, 10.0), 512)
    r = gaussian_packet(g, 1.0, 0.7, 2.0)
    assert obs.norm(r) == pytest.approx(1.0, abs=1e-13)
    assert packet_width2(r) == pytest.approx(0.49, rel=1e-6)


def test_gaussian_packet_rejects_edge():
    g = make_grid(1, (-2.0, 2.0), 128)
    with pytest.raises(ValueError):
        gaussian_packet(g, 1.8, 0.5)


# -- Hamiltonian identities -----------------------------------------------


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    bc=st.sampled_from(["periodic", "dirichlet"]),
    dim=st.integers(1, 2),
    m=st.floats(0.5, 500.0),
)
def test_energy_identity_chain(seed, bc, dim, m):
    g = make_grid(dim, [(0, 1)] * dim, 14 if dim == 2 else 40, bc)
    rng = np.random.default_rng(seed)
    r = random_smooth_state(g, rng)
    V = smooth_field(g, rng)
    h_red = obs.hamiltonian_reduced(r, m, V)
    values = [
        obs.hamiltonian_full(adiabatic_lift(r, m), m, V),
        obs.energy_expectation(to_wavefunction(r), m, V),
        obs.hamiltonian_flux_form(r, reduced_rhs(r, m, V)),
    ]
    scale = max(abs(h_red), obs.norm(r) * (np.max(np.abs(V)) + 1.0))
    for v in values:
        assert abs(v - h_red) <= 1e-10 * scale


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(-5, 5))
def test_functionals_are_quadratic(seed, alpha):
    g = make_grid(1, (0, 1), 30, "dirichlet")
    rng = np.random.default_rng(seed)
    r = random_smooth_state(g, rng)
    V = smooth_field(g, rng)
    f = adiabatic_lift(r, 4.0)
    assert obs.norm(r * alpha) == pytest.approx(alpha**2 * obs.norm(r), rel=1e-12, abs=1e-300)
    assert obs.hamiltonian_reduced(r * alpha, 4.0, V) == pytest.approx(
        alpha**2 * obs.hamiltonian_reduced(r, 4.0, V), rel=1e-10, abs=1e-12
    )
    assert obs.hamiltonian_full(f * alpha, 4.0, V) == pytest.approx(
        alpha**2 * obs.hamiltonian_full(f, 4.0, V), rel=1e-10, abs=1e-12
    )


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_l2_distance_is_a_metric(seed):
    g = make_grid(2, [(0, 1), (0, 1)], (8, 9))
    rng = np.random.default_rng(seed)
    a, b, c = (ReducedState(g, rng.normal(size=g.shape), rng.normal(size=g.shape)) for _ in range(3))
    assert obs.l2_distance(a, a) == 0.0
    assert obs.l2_distance(a, b) == pytest.approx(obs.l2_distance(b, a), rel=1e-15)
    assert obs.l2_distance(a, c) <= obs.l2_distance(a, b) + obs.l2_distance(b, c) + 1e-12


def test_distance_matches_norm():
    g = make_grid(1, (0, 1), 20)
    rng = np.random.default_rng(3)
    a = ReducedState(g, rng.normal(size=20), rng.normal(size=20))
    z = ReducedState.zeros(g)
    assert obs.l2_distance(a, z) ** 2 == pytest.approx(2 * obs.norm(a), rel=1e-14)


def test_variance_of_eigenfunction_is_zero():
    g = make_grid(1, (0, 1), 63, "dirichlet")
    x = g.axis_coordinates(0)
    r = ReducedState(g, np.zeros(63), np.sin(2 * np.pi * x))
    assert obs.energy_variance(r, 1.0, np.zeros(63)) < 1e-9
