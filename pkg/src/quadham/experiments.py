"""Measured convergence of the full field system to Schrodinger dynamics as ``m`` grows."""

from __future__ import annotations

import csv
import io
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import observables as obs
from .dynamics import FULL, REDUCED, IntegratorConfig, evolve
from .fields import (
    HarmonicOscillator,
    PotentialSpec,
    ReducedState,
    adiabatic_lift,
    build_potential,
    cold_start,
    gaussian_packet,
    project,
)
from .grid import Grid, make_grid

log = logging.getLogger(__name__)

MIN_SEPARATION = 10.0
STUDY_COLUMNS = (
    "m",
    "err_T",
    "fitted_order",
    "fit_r2",
    "norm_fluct_order",
    "norm_fluct_r2",
    "max_hidden_amp",
    "norm_fluct",
    "H_drift",
    "separation_ratio",
)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A fixed grid, potential and initial slow state shared by every cell of a sweep."""

    grid: Grid
    V: np.ndarray
    initial: ReducedState
    name: str = "scenario"


def harmonic_trap_scenario(
    points: int = 128,
    half_width: float = 6.0,
    omega: float = 1.0,
    trap_mass: float = 1.0,
    center: float = 0.5,
    width: float = 0.5,
    wavenumber: float = 0.0,
) -> Scenario:
    """1-D periodic packet in ``V = trap_mass omega^2 x^2 / 2``, held fixed across ``m``."""
    g = make_grid(1, (-half_width, half_width), points, "periodic")
    V = build_potential(HarmonicOscillator(omega), g, trap_mass)
    return Scenario(g, V, gaussian_packet(g, center, width, wavenumber), "harmonic_trap")


def scenario_from(grid: Grid, potential: PotentialSpec, initial: ReducedState, potential_mass: float = 1.0, name: str = "scenario") -> Scenario:
    return Scenario(grid, build_potential(potential, grid, potential_mass), initial, name)


def characteristic_frequency(r: ReducedState, m: float, V: np.ndarray) -> float:
    """Upper estimate ``|<H>| + 3 dH`` of the state's slow frequencies."""
    n = obs.norm(r)
    if n == 0:
        return 0.0
    mean = obs.hamiltonian_reduced(r, m, V) / n
    return abs(mean) + 3.0 * np.sqrt(obs.energy_variance(r, m, V))


def frequency_separation_ratio(r: ReducedState, m: float, V: np.ndarray) -> float:
    """Planck frequency (``m`` in natural units) over the characteristic slow frequency."""
    f = characteristic_frequency(r, m, V)
    return float(m / f) if f > 0 else float("inf")


@dataclass(frozen=True)
class StudyConfig:
    full_dt_factor: float = 0.1
    reduced_dt: float = 1e-3
    tol: float = 1e-12
    self_check_fraction: float = 0.01
    max_refinements: int = 8
    threads: int = 1


@dataclass
class StudyRow:
    m: float
    err_T: float
    max_hidden_amp: float
    hidden_amp_t0: float
    norm_fluct: float
    H_drift: float
    separation_ratio: float
    reduced_dt: float
    reduced_error_estimate: float
    wall_time_s: float


@dataclass
class StudyResult:
    rows: list[StudyRow]
    fitted_order: float = float("nan")
    fit_r2: float = float("nan")
    norm_fluct_order: float = float("nan")
    norm_fluct_r2: float = float("nan")
    warnings: list[str] = field(default_factory=list)

    @property
    def ms(self) -> np.ndarray:
        return np.array([r.m for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.err_T for r in self.rows])

    def to_csv(self) -> str:
        """Deterministic table; the fitted quantities appear on the last row only."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STUDY_COLUMNS)
        for i, r in enumerate(self.rows):
            last = i == len(self.rows) - 1
            fit = [self.fitted_order, self.fit_r2, self.norm_fluct_order, self.norm_fluct_r2]
            w.writerow(
                [fmt(r.m), fmt(r.err_T)]
                + [fmt(v) if last else "" for v in fit]
                + [fmt(r.max_hidden_amp), fmt(r.norm_fluct), fmt(r.H_drift), fmt(r.separation_ratio)]
            )
        return buf.getvalue()


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def power_law_fit(ms: Sequence[float], errs: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``log err`` against ``log(1/m)`` and its ``R^2``."""
    ms = np.asarray(ms, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if ms.size < 3 or ms.shape != errs.shape:
        raise ValueError("need at least 3 (m, err) points of matching length")
    if np.any(ms <= 0) or np.any(errs <= 0) or not np.all(np.isfinite(errs)):
        raise ValueError("power-law fit needs positive finite values")
    x = np.log(1.0 / ms)
    y = np.log(errs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def measured_order(ms: Sequence[float], errs: Sequence[float]) -> float:
    return power_law_fit(ms, errs)[0]


def _reference(scenario: Scenario, m: float, T: float, cfg: StudyConfig, target: float):
    """Reduced solution at ``T`` with a half-step self-check on its time error."""
    dt = cfg.reduced_dt
    coarse = evolve(scenario.initial, m, scenario.V, IntegratorConfig(dt, REDUCED, cfg.tol), T, observers={}).final
    for _ in range(cfg.max_refinements):
        fine = evolve(scenario.initial, m, scenario.V, IntegratorConfig(dt / 2, REDUCED, cfg.tol), T, observers={}).final
        # Crank-Nicolson is second order: e(dt/2) ~ |x(dt) - x(dt/2)| / 3
        estimate = obs.l2_distance(coarse, fine) / 3.0
        dt /= 2
        if estimate <= max(target, 1e-12):
            return fine, dt, estimate
        coarse = fine
    warnings.warn(f"reduced reference at m={m} did not meet its self-check ({estimate:.3e} > {target:.3e})")
    return fine, dt, estimate


def _study_cell(scenario: Scenario, m: float, T: float, cfg: StudyConfig) -> tuple[StudyRow, list[str]]:
    t_start = time.perf_counter()
    notes = []
    V = scenario.V
    ratio = frequency_separation_ratio(scenario.initial, m, V)
    if ratio < MIN_SEPARATION:
        notes.append(f"m={m}: frequency separation ratio {ratio:.3g} < {MIN_SEPARATION:g}")

    f0 = adiabatic_lift(scenario.initial, m)
    full_cfg = IntegratorConfig(cfg.full_dt_factor / m, FULL, cfg.tol)
    traj = evolve(
        f0,
        m,
        V,
        full_cfg,
        T,
        observers={
            "norm": lambda s, t: obs.norm(project(s)),
            "H_full": lambda s, t: obs.hamiltonian_full(s, m, V),
            "hidden_amp": lambda s, t: obs.hidden_amplitude(s),
        },
    )
    slow = project(traj.final)
    rough = evolve(scenario.initial, m, V, IntegratorConfig(cfg.reduced_dt, REDUCED, cfg.tol), T, observers={}).final
    target = cfg.self_check_fraction * obs.l2_distance(slow, rough)
    reference, dt_r, estimate = _reference(scenario, m, T, cfg, target)
    err = obs.l2_distance(slow, reference)

    norm = traj.series["norm"]
    h = traj.series["H_full"]
    h_scale = abs(h[0]) if h[0] != 0 else 1.0
    row = StudyRow(
        m=float(m),
        err_T=err,
        max_hidden_amp=float(traj.series["hidden_amp"].max()),
        hidden_amp_t0=float(traj.series["hidden_amp"][0]),
        norm_fluct=float(np.max(np.abs(norm - norm[0]))),
        H_drift=float(np.max(np.abs(h - h[0])) / h_scale),
        separation_ratio=ratio,
        reduced_dt=dt_r,
        reduced_error_estimate=estimate,
        wall_time_s=time.perf_counter() - t_start,
    )
    return row, notes


def adiabatic_convergence_study(
    scenario: Scenario,
    m_list: Sequence[float],
    T: float,
    cfg: StudyConfig | None = None,
) -> StudyResult:
    """Run full and reduced dynamics to time ``T`` for each ``m`` and fit the error order."""
    cfg = cfg or StudyConfig()
    ms = [float(m) for m in m_list]
    if len(ms) < 3:
        raise ValueError("a convergence study needs at least 3 values of m")
    if any(b <= a for a, b in zip(ms, ms[1:])):
        raise ValueError("m_list must be strictly ascending")
    if not T > 0:
        raise ValueError("T must be positive")

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            cells = list(pool.map(lambda m: _study_cell(scenario, m, T, cfg), ms))
    else:
        cells = [_study_cell(scenario, m, T, cfg) for m in ms]

    result = StudyResult(rows=[row for row, _ in cells])
    for _, notes in cells:
        for note in notes:
            warnings.warn(note)
            result.warnings.append(note)

    errs = result.errors
    if np.all(errs > 0):
        result.fitted_order, result.fit_r2 = power_law_fit(ms, errs)
    fluct = np.array([r.norm_fluct for r in result.rows])
    if np.all(fluct > 0):
        result.norm_fluct_order, result.norm_fluct_r2 = power_law_fit(ms, fluct)
    return result


@dataclass(frozen=True)
class TransientReport:
    m: float
    fast_frequency: float
    hidden_energy_t0: float
    cold_amplitude: float
    adiabatic_amplitude: float
    amplitude_ratio: float
    mean_distance: float
    H_drift: float


def oscillation_frequency(times: np.ndarray, signal: np.ndarray) -> float:
    """Angular frequency of ``signal`` about its mean, from zero crossings."""
    from .spectral import zero_crossings

    s = np.asarray(signal, dtype=float)
    crossings = zero_crossings(times, s - s.mean())
    if len(crossings) < 3:
        raise ValueError("signal has too few zero crossings to estimate a frequency")
    return float(np.pi * (len(crossings) - 1) / (crossings[-1] - crossings[0]))


def cold_start_transient(
    scenario: Scenario,
    m: float,
    T: float,
    dt_factor: float = 0.01,
    tol: float = 1e-12,
    sample_every: int = 10,
) -> TransientReport:
    """Evolve from zero hidden fields and measure the fast hidden-energy oscillation."""
    V = scenario.V
    dt = dt_factor / m
    full_cfg = IntegratorConfig(dt, FULL, tol)
    energy = {"hidden": lambda s, t: obs.hidden_energy(s, m), "H": lambda s, t: obs.hamiltonian_full(s, m, V)}

    cold = evolve(cold_start(scenario.initial), m, V, full_cfg, T, observers=energy, snapshot_every=sample_every)
    adiabatic = evolve(adiabatic_lift(scenario.initial, m), m, V, full_cfg, T, observers={"hidden": energy["hidden"]})
    reduced = evolve(scenario.initial, m, V, IntegratorConfig(dt, REDUCED, tol), T, observers={}, snapshot_every=sample_every)

    hidden = cold.series["hidden"]
    cold_amp = 0.5 * float(hidden.max() - hidden.min())
    ad = adiabatic.series["hidden"]
    ad_amp = 0.5 * float(ad.max() - ad.min())
    distances = [
        obs.l2_distance(project(f), r) for (_, f), (_, r) in zip(cold.snapshots, reduced.snapshots)
    ]
    h = cold.series["H"]
    return TransientReport(
        m=float(m),
        fast_frequency=oscillation_frequency(cold.times, hidden),
        hidden_energy_t0=float(hidden[0]),
        cold_amplitude=cold_amp,
        adiabatic_amplitude=ad_amp,
        amplitude_ratio=ad_amp / cold_amp if cold_amp else float("nan"),
        mean_distance=float(np.mean(distances)),
        H_drift=float(np.max(np.abs(h - h[0])) / abs(h[0])),
    )
