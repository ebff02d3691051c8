import csv
import json
from pathlib import Path

import numpy as np
import pytest

from quadham.cli import main
from quadham.config import ConfigError, integrator_config, parse_config, resolve
from quadham.fields import ReducedState, adiabatic_lift
from quadham.grid import make_grid
from quadham.snapshot import (
    SnapshotError,
    decode,
    encode,
    read_snapshot,
    state_arrays,
    state_from_snapshot,
    write_snapshot,
)

BOX = """
grid: {dim: 1, extents: [[0, 1]], points: [31], bc: dirichlet}
physics: {m: 1.0, potential: {kind: box}}
initial: {eigenmode: {index: 0}}
scheme: {kind: reduced, dt: 0.001, t_final: 0.02, snapshot_stride: 10}
spectrum: {k: 3}
"""

PACKET_FULL = """
grid: {dim: 1, extents: [[-6, 6]], points: [48]}
physics: {m: 20.0, potential: {kind: harmonic, omega: 1.0, trap_mass: 1.0}}
initial: {packet: {center: [0.5], width: 0.5}, hidden: cold}
scheme: {kind: full, t_final: 0.05, observable_stride: 5}
"""

SWEEP = """
grid: {dim: 1, extents: [[-6, 6]], points: [48]}
physics: {m: 10.0, potential: {kind: harmonic, omega: 1.0, trap_mass: 1.0}}
initial: {packet: {center: [0.5], width: 0.5}}
experiment: {m_list: [10, 20, 40], T: 0.1}
"""

MKS = """
grid: {dim: 1, extents: [[-8.0e-10, 8.0e-10]], points: [64], bc: dirichlet}
physics:
  units: {h: 6.62607015e-34, c: 2.99792458e8, mass: 9.1093837015e-31, length_unit: 1.0e-10}
  potential: {kind: harmonic, omega: 1.0e16}
initial: {eigenmode: {index: 0}}
spectrum: {k: 3}
"""


def write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# -- config -------------------------------------------------------------------


def test_defaults():
    cfg = parse_config("grid: {dim: 1, extents: [[0, 1]], points: [16]}\nphysics: {m: 2}\ninitial: {uniform: {}}\n")
    assert cfg.grid.bc == "periodic"
    assert cfg.scheme.kind == "reduced"
    assert cfg.scheme.dt == "auto"
    assert cfg.scheme.tol == 1e-12
    assert cfg.output.directory == "out"
    assert cfg.physics.potential.kind == "free"


def test_negative_t_final_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(BOX.replace("t_final: 0.02", "t_final: -1"))
    assert any("t_final" in e for e in info.value.errors)


def test_initial_state_exclusivity():
    text = BOX.replace("initial: {eigenmode: {index: 0}}", "initial: {eigenmode: {index: 0}, uniform: {}}")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert any("exactly one initial state" in e for e in info.value.errors)


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(BOX + "bogus: 1\n")
    assert any("bogus" in e and "unknown key" in e for e in info.value.errors)


def test_all_violations_reported():
    text = BOX.replace("t_final: 0.02", "t_final: -1").replace("[0, 1]", "[1, 0]")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert len(info.value.errors) >= 2


def test_yaml_syntax_error_has_location():
    with pytest.raises(ConfigError) as info:
        parse_config("grid: {dim: 1\nphysics: [")
    assert "line" in info.value.errors[0]


def test_box_needs_dirichlet():
    with pytest.raises(ConfigError):
        parse_config(BOX.replace("bc: dirichlet", "bc: periodic"))


def test_auto_dt():
    problem = resolve(parse_config(PACKET_FULL))
    cfg = integrator_config(problem)
    assert cfg.scheme == "full"
    assert cfg.dt == pytest.approx(0.1 / 20.0)


def test_mks_resolution():
    problem = resolve(parse_config(MKS))
    assert problem.grid.extents[0] == pytest.approx((-8.0, 8.0))
    assert problem.m == pytest.approx(9.1093837015e-31 * 2.99792458e8 * 1e-10 / 6.62607015e-34)


# -- snapshots ------------------------------------------------------------------


def test_snapshot_round_trip_is_bit_exact(tmp_path):
    g = make_grid(2, [(0, 1), (0, 2)], (6, 8), "dirichlet")
    rng = np.random.default_rng(9)
    f = adiabatic_lift(ReducedState(g, rng.normal(size=g.shape), rng.normal(size=g.shape)), 3.0)
    V = rng.normal(size=g.shape)
    path = tmp_path / "s.qhs"
    write_snapshot(path, g, state_arrays(f, V), {"t": 0.25})
    snap = read_snapshot(path)
    assert snap.grid == g
    assert snap.attrs == {"t": 0.25}
    back = state_from_snapshot(snap)
    assert back.to_vector().tobytes() == f.to_vector().tobytes()
    assert snap.arrays["V"].tobytes() == V.tobytes()
    assert encode(snap.grid, snap.arrays, snap.attrs) == path.read_bytes()


@pytest.mark.parametrize("mutate", [lambda b: b"XXXX" + b[4:], lambda b: b[:-3], lambda b: b + b"\0"])
def test_corrupt_snapshots_rejected(mutate):
    g = make_grid(1, (0, 1), 8)
    data = encode(g, {"p": np.zeros(8), "q": np.ones(8)})
    with pytest.raises(SnapshotError):
        decode(mutate(data))


def test_snapshot_shape_checked():
    g = make_grid(1, (0, 1), 8)
    with pytest.raises(SnapshotError):
        encode(g, {"p": np.zeros(7)})
    with pytest.raises(SnapshotError):
        encode(g, {"P2": np.zeros(8)})


# -- CLI --------------------------------------------------------------------------


def test_validate_config_exit_codes(tmp_path, capsys):
    assert main(["validate-config", "--config", str(write(tmp_path, BOX))]) == 0
    assert main(["validate-config", "--config", str(write(tmp_path, BOX + "x: 1\n", "bad.yaml"))]) == 2
    assert main(["validate-config", "--config", str(tmp_path / "missing.yaml")]) == 4


def test_simulate_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, BOX)
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "observables.csv").read_bytes()
    assert a == (tmp_path / "b" / "observables.csv").read_bytes()
    rows = read_csv(tmp_path / "a" / "observables.csv")
    assert rows[0][:4] == ["t", "norm", "H_full", "H_reduced"]
    h = np.array([float(r[rows[0].index("H_reduced")]) for r in rows[1:]])
    assert np.max(np.abs(h - h[0])) < 1e-10 * abs(h[0])
    snaps = sorted((tmp_path / "a" / "snapshots").iterdir())
    assert len(snaps) == 3
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(manifest["outputs"]) >= {"observables.csv"}


def test_simulate_full_cold(tmp_path):
    cfg = write(tmp_path, PACKET_FULL)
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "observables.csv")
    col = rows[0].index("hidden_energy")
    assert float(rows[1][col]) == 0.0
    assert float(rows[-1][rows[0].index("t")]) == pytest.approx(0.05)


def test_spectrum_sorted(tmp_path):
    cfg = write(tmp_path, BOX)
    assert main(["spectrum", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "eigenpairs.csv")
    energies = [float(r[1]) for r in rows[1:]]
    assert len(energies) == 3
    assert energies == sorted(energies)
    expected = (2 - 2 * np.cos(np.pi / 32)) * 32**2 / 2
    assert energies[0] == pytest.approx(expected, rel=1e-10)
    assert len(list((tmp_path / "o" / "modes").iterdir())) == 3


def test_sweep_schema(tmp_path):
    cfg = write(tmp_path, SWEEP)
    with pytest.warns(UserWarning):
        assert main(["sweep", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "study.csv")
    assert rows[0][:2] == ["m", "err_T"]
    assert [float(r[0]) for r in rows[1:]] == [10.0, 20.0, 40.0]


def test_sweep_without_experiment_block(tmp_path):
    assert main(["sweep", "--config", str(write(tmp_path, BOX)), "--output", str(tmp_path / "o")]) == 2


def test_convert_units_round_trip(tmp_path, capsys):
    cfg = write(tmp_path, MKS)
    assert main(["convert-units", "--config", str(cfg), "--energy", "1e-18", "--length", "3e-10", "--time", "1e-15"]) == 0
    out = json.loads(capsys.readouterr().out)
    for key, value in (("energy", 1e-18), ("length", 3e-10), ("time", 1e-15)):
        assert out["round_trip"][key] == pytest.approx(value, rel=1e-14)
    assert out["natural"]["length"] == pytest.approx(3.0)
    assert out["planck_frequency"] == pytest.approx(1.236e20, rel=1e-3)


def test_packet_at_wall_is_a_config_error(tmp_path):
    text = PACKET_FULL.replace("center: [0.5]", "center: [5.8]")
    assert main(["simulate", "--config", str(write(tmp_path, text)), "--output", str(tmp_path / "o")]) == 2


def test_snapshot_restart(tmp_path):
    cfg = write(tmp_path, BOX)
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "a")]) == 0
    snap = sorted((tmp_path / "a" / "snapshots").iterdir())[-1]
    restart = BOX.replace("initial: {eigenmode: {index: 0}}", f"initial: {{snapshot: {snap}}}")
    assert main(["simulate", "--config", str(write(tmp_path, restart, "r.yaml")), "--output", str(tmp_path / "b")]) == 0
    assert Path(tmp_path / "b" / "observables.csv").exists()
