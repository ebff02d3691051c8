"""Command-line entry point: ``quadham <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import observables as obs
from .config import ConfigError, Problem, integrator_config, load_config, resolve
from .dynamics import FULL, NumericalError, SolverError, evolve, full_rhs, reduced_rhs
from .experiments import Scenario, StudyConfig, adiabatic_convergence_study, cold_start_transient, fmt
from .fields import (
    FullState,
    ReducedState,
    WaveFunction,
    adiabatic_lift,
    cold_start,
    from_wavefunction,
    gaussian_packet,
    project,
    to_wavefunction,
    uniform_state,
)
from .snapshot import SnapshotError, read_snapshot, state_arrays, state_from_snapshot, write_snapshot
from .spectral import ConvergenceError, build_operator, lowest_eigenpairs, normal_mode_state, rotating_solution
from .units import Params, from_natural, planck_frequency, to_natural

log = logging.getLogger("quadham")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

OBSERVABLE_COLUMNS = ("t", "norm", "H_full", "H_reduced", "H_flux", "E_expect", "hidden_energy", "l2_vs_reference")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# -- initial states --------------------------------------------------------


def initial_slow_state(problem: Problem) -> ReducedState | FullState:
    init = problem.config.initial
    grid = problem.grid
    if init.packet is not None:
        pk = init.packet
        k0 = 0.0 if pk.wavenumber is None else np.asarray(pk.wavenumber) * problem.units.length_unit
        try:
            return gaussian_packet(grid, tuple(problem.length(pk.center)), float(problem.length(pk.width)), k0)
        except ValueError as exc:
            raise ConfigError([f"initial.packet: {exc}"]) from exc
    if init.uniform is not None:
        return uniform_state(grid, init.uniform.p, init.uniform.q)
    if init.eigenmode is not None:
        pairs = _eigenpairs(problem, init.eigenmode.index + 1)
        return normal_mode_state(pairs[-1], init.eigenmode.phase)
    snap = read_snapshot(problem.base_dir / init.snapshot)
    if snap.grid != grid:
        raise ConfigError([f"initial.snapshot: grid {snap.grid} does not match the configured grid"])
    return state_from_snapshot(snap)


def initial_state(problem: Problem) -> ReducedState | FullState:
    s = initial_slow_state(problem)
    full = problem.config.scheme.kind == FULL
    if full and isinstance(s, ReducedState):
        return adiabatic_lift(s, problem.m) if problem.config.initial.hidden == "adiabatic" else cold_start(s)
    if not full and isinstance(s, FullState):
        return project(s)
    return s


def _eigenpairs(problem: Problem, k: int):
    sp = problem.config.spectrum
    op = build_operator(problem.grid, problem.m, problem.V)
    return lowest_eigenpairs(op, k, tol=sp.tol if sp else 1e-10, method=sp.method if sp else "auto")


def _free_packet_reference(problem: Problem, t: float) -> ReducedState:
    """Continuum free evolution of the configured Gaussian packet (nearest periodic image)."""
    pk = problem.config.initial.packet
    grid, m = problem.grid, problem.m
    c = problem.length(pk.center)
    sigma = float(problem.length(pk.width))
    k0 = np.zeros(grid.dim) if pk.wavenumber is None else np.asarray(pk.wavenumber) * problem.units.length_unit
    a = 1.0 + 1j * t / (2.0 * m * sigma**2)
    psi = np.ones(grid.shape, dtype=complex)
    for j, x in enumerate(grid.mesh()):
        L = grid.lengths[j]
        d = x - c[j] - k0[j] * t / m
        d = d - L * np.round(d / L)
        psi *= (2 * np.pi * sigma**2) ** -0.25 * a**-0.5 * np.exp(
            -(d**2) / (4 * sigma**2 * a) + 1j * k0[j] * (d + k0[j] * t / (2 * m))
        )
    return from_wavefunction(WaveFunction(grid, psi))


# -- subcommands -----------------------------------------------------------


class Outputs:
    def __init__(self, directory: Path):
        self.directory = directory
        self.files: dict[str, str] = {}

    def write(self, relpath: str, data: bytes | str) -> None:
        path = self.directory / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        raw = data.encode() if isinstance(data, str) else data
        path.write_bytes(raw)
        self.files[relpath] = hashlib.sha256(raw).hexdigest()


def simulate(problem: Problem, out: Outputs) -> None:
    cfg = problem.config
    m, V, grid = problem.m, problem.V, problem.grid
    state0 = initial_state(problem)
    icfg = integrator_config(problem)
    stride = cfg.scheme.observable_stride
    t_final = problem.time(cfg.scheme.t_final)
    full = isinstance(state0, FullState)

    reference = None
    if full:
        # reduced solution from the same slow data, sampled at the same steps
        from .dynamics import IntegratorConfig, REDUCED

        ref_cfg = IntegratorConfig(icfg.dt, REDUCED, icfg.tol, icfg.max_iter)
        ref = evolve(project(state0), m, V, ref_cfg, t_final, observers={}, observe_every=stride, snapshot_every=stride)
        ref_states = iter([s for _, s in ref.snapshots])
        reference = lambda t: next(ref_states)  # noqa: E731
    elif cfg.initial.eigenmode is not None:
        pair_energy = obs.hamiltonian_reduced(state0, m, V) / obs.norm(state0)
        reference = lambda t: rotating_solution(state0, pair_energy, t)  # noqa: E731
    elif cfg.initial.packet is not None and cfg.physics.potential.kind == "free" and grid.bc == "periodic":
        reference = lambda t: _free_packet_reference(problem, t)  # noqa: E731

    def slow(s):
        return project(s) if full else s

    def flux(s, t):
        if full:
            d = full_rhs(s, m, V)
            return obs.hamiltonian_flux_form(project(s), project(d))
        return obs.hamiltonian_flux_form(s, reduced_rhs(s, m, V))

    observers = {
        "norm": lambda s, t: obs.norm(slow(s)),
        "H_full": lambda s, t: obs.hamiltonian_full(s if full else adiabatic_lift(s, m), m, V),
        "H_reduced": lambda s, t: obs.hamiltonian_reduced(slow(s), m, V),
        "H_flux": flux,
        "E_expect": lambda s, t: obs.energy_expectation(to_wavefunction(slow(s)), m, V),
        "hidden_energy": lambda s, t: obs.hidden_energy(s if full else adiabatic_lift(s, m), m),
        "l2_vs_reference": (lambda s, t: obs.l2_distance(slow(s), reference(t))) if reference else (lambda s, t: float("nan")),
    }
    snap_every = cfg.scheme.snapshot_stride if "snapshot" in cfg.output.formats else 0
    traj = evolve(state0, m, V, icfg, t_final, observers=observers, observe_every=stride, snapshot_every=snap_every)

    if "csv" in cfg.output.formats:
        rows = [[t] + [traj.series[c][i] for c in OBSERVABLE_COLUMNS[1:]] for i, t in enumerate(traj.times)]
        out.write("observables.csv", csv_text(OBSERVABLE_COLUMNS, rows))
    for i, (t, s) in enumerate(traj.snapshots):
        out.write(f"snapshots/snap_{i:06d}.qhs", _snapshot_bytes(grid, s, V, {"t": t, "m": m}))


def _snapshot_bytes(grid, state, V, attrs) -> bytes:
    from .snapshot import encode

    return encode(grid, state_arrays(state, V), attrs)


def spectrum(problem: Problem, out: Outputs) -> None:
    k = problem.config.spectrum.k if problem.config.spectrum else 3
    pairs = _eigenpairs(problem, k)
    header = ["index", "E", "residual"]
    if problem.is_mks:
        header.append("E_joule")
    rows = []
    for i, p in enumerate(pairs):
        row = [i, p.energy, p.residual]
        if problem.is_mks:
            row.append(p.energy * problem.units.energy_unit)
        rows.append(row)
    out.write("eigenpairs.csv", csv_text(header, rows))
    if "snapshot" in problem.config.output.formats:
        for i, p in enumerate(pairs):
            state = normal_mode_state(p, 0.0)
            out.write(f"modes/mode_{i:04d}.qhs", _snapshot_bytes(problem.grid, state, problem.V, {"E": p.energy, "index": i}))


def sweep(problem: Problem, out: Outputs, threads: int = 1) -> dict:
    ex = problem.config.experiment
    if ex is None:
        raise ConfigError(["experiment: the sweep subcommand needs an experiment block"])
    slow0 = initial_slow_state(problem)
    if isinstance(slow0, FullState):
        slow0 = project(slow0)
    scenario = Scenario(problem.grid, problem.V, slow0, "config")
    T = problem.time(ex.T if ex.T is not None else problem.config.scheme.t_final)
    ms = [problem.units.natural_mass * m / problem.units.mass if problem.is_mks else m for m in ex.m_list]
    study_cfg = StudyConfig(
        full_dt_factor=ex.full_dt_factor,
        reduced_dt=problem.time(ex.reduced_dt),
        tol=problem.config.scheme.tol,
        threads=threads,
    )
    result = adiabatic_convergence_study(scenario, ms, T, study_cfg)
    out.write("study.csv", result.to_csv())
    timing = {fmt(r.m): r.wall_time_s for r in result.rows}
    if ex.cold_start:
        reports = [cold_start_transient(scenario, m, T, dt_factor=ex.cold_dt_factor, tol=study_cfg.tol) for m in ms]
        cols = ("m", "fast_frequency", "hidden_energy_t0", "cold_amplitude", "adiabatic_amplitude", "amplitude_ratio", "mean_distance", "H_drift")
        out.write("cold_start.csv", csv_text(cols, [[float(getattr(r, c)) for c in cols] for r in reports]))
    return {"wall_time_s_by_m": timing, "warnings": result.warnings}


def convert_units(problem: Problem, energy, length, time_) -> dict:
    u = problem.units
    mks = Params(mass=u.mass, energy=energy, length=length, time=time_)
    nat, s = to_natural(u, mks)
    back = from_natural(u, nat)
    return {
        "scales": {"energy": s.energy, "length": s.length, "time": s.time},
        "natural_mass": nat.mass,
        "planck_frequency": planck_frequency(u),
        "natural": {"energy": nat.energy, "length": nat.length, "time": nat.time},
        "round_trip": {"energy": back.energy, "length": back.length, "time": back.time},
    }


# -- driver ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadham", description="Quadratic Hamiltonian field simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "spectrum", "sweep", "convert-units", "validate-config"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--output", type=Path, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="reserved; every algorithm is deterministic")
        p.add_argument("--verbose", action="store_true")
        if name == "convert-units":
            p.add_argument("--energy", type=float, default=None, help="energy in joules")
            p.add_argument("--length", type=float, default=None, help="length in metres")
            p.add_argument("--time", type=float, default=None, help="time in seconds")
    return parser


def _write_manifest(out: Outputs, command: str, cfg_text: str, cfg, problem: Problem, extra: dict, wall: float) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg.model_dump(mode="json"),
        "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "units": "natural" if not problem.is_mks else {
            "system": cfg.physics.units.model_dump(),
            "energy_unit": problem.units.energy_unit,
            "time_unit": problem.units.time_unit,
            "length_unit": problem.units.length_unit,
            "natural_mass": problem.m,
        },
        "outputs": dict(sorted(out.files.items())),
        "wall_time_s": wall,
        **extra,
    }
    path = out.directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        cfg_text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        from .config import parse_config

        cfg = parse_config(cfg_text)
        problem = resolve(cfg, args.config.parent)
        if args.command == "validate-config":
            print("config ok")
            return EXIT_OK
        if args.command == "convert-units":
            print(json.dumps(convert_units(problem, args.energy, args.length, args.time), indent=2))
            return EXIT_OK
        out = Outputs(args.output or (args.config.parent / cfg.output.directory))
        out.directory.mkdir(parents=True, exist_ok=True)
        extra: dict = {}
        if args.command == "simulate":
            simulate(problem, out)
        elif args.command == "spectrum":
            spectrum(problem, out)
        elif args.command == "sweep":
            extra = sweep(problem, out, threads=max(1, args.threads))
        _write_manifest(out, args.command, cfg_text, cfg, problem, extra, time.perf_counter() - start)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NumericalError, ConvergenceError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SnapshotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
