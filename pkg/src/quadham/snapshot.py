"""Self-describing binary snapshots of field states.

Layout (all little-endian)::

    b"QHSN"                magic
    uint32                 format version
    uint32 + bytes         JSON metadata (grid block plus free attributes)
    uint32                 number of arrays
    per array:
        uint16 + bytes     name (utf-8)
        uint64             element count
        float64[count]     values in row-major node order
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .fields import FullState, ReducedState
from .grid import Grid, make_grid

MAGIC = b"QHSN"
VERSION = 1
_NAME = re.compile(r"^(p|q|V|(P|Q|pi|eta)([1-9]))$")


class SnapshotError(ValueError):
    pass


@dataclass
class Snapshot:
    grid: Grid
    arrays: dict[str, np.ndarray]
    attrs: dict


def array_shape(grid: Grid, name: str) -> tuple[int, ...]:
    match = _NAME.match(name)
    if not match:
        raise SnapshotError(f"invalid array name {name!r}")
    if match.group(3) is None:
        return grid.shape
    axis = int(match.group(3)) - 1
    if axis >= grid.dim:
        raise SnapshotError(f"array {name!r} names axis {axis + 1} on a {grid.dim}-d grid")
    return grid.staggered_shape(axis)


def encode(grid: Grid, arrays: Mapping[str, np.ndarray], attrs: Mapping | None = None) -> bytes:
    meta = dict(attrs or {})
    meta["grid"] = grid.to_metadata()
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    out = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(arrays))]
    for name, values in arrays.items():
        values = np.asarray(values, dtype=float)
        if values.shape != array_shape(grid, name):
            raise SnapshotError(f"array {name!r} has shape {values.shape}, expected {array_shape(grid, name)}")
        raw = name.encode()
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<Q", values.size))
        out.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return b"".join(out)


def decode(data: bytes) -> Snapshot:
    if data[:4] != MAGIC:
        raise SnapshotError("not a snapshot file (bad magic)")
    pos = 4
    try:
        version, meta_len = struct.unpack_from("<II", data, pos)
        pos += 8
        if version != VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        meta = json.loads(data[pos:pos + meta_len].decode())
        pos += meta_len
        g = meta.pop("grid")
        grid = make_grid(g["dim"], g["extents"], g["points"], g["bc"])
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nlen].decode()
            pos += nlen
            (size,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            shape = array_shape(grid, name)
            if size != int(np.prod(shape)):
                raise SnapshotError(f"array {name!r} has {size} values, expected shape {shape}")
            end = pos + 8 * size
            if end > len(data):
                raise SnapshotError("truncated snapshot")
            arrays[name] = np.frombuffer(data[pos:end], dtype="<f8").astype(float).reshape(shape)
            pos = end
    except (struct.error, KeyError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SnapshotError(f"corrupt snapshot: {exc}") from exc
    if pos != len(data):
        raise SnapshotError("trailing bytes after the last array")
    return Snapshot(grid, arrays, meta)


def write_snapshot(path, grid: Grid, arrays: Mapping[str, np.ndarray], attrs: Mapping | None = None) -> None:
    Path(path).write_bytes(encode(grid, arrays, attrs))


def read_snapshot(path) -> Snapshot:
    return decode(Path(path).read_bytes())


def state_arrays(state: ReducedState | FullState, V: np.ndarray | None = None) -> dict[str, np.ndarray]:
    arrays = {"p": state.p, "q": state.q}
    if isinstance(state, FullState):
        for family in ("P", "Q", "pi", "eta"):
            for j, comp in enumerate(getattr(state, family)):
                arrays[f"{family}{j + 1}"] = comp
    if V is not None:
        arrays["V"] = np.asarray(V, dtype=float)
    return arrays


def state_from_snapshot(snap: Snapshot) -> ReducedState | FullState:
    a = snap.arrays
    if "p" not in a or "q" not in a:
        raise SnapshotError("snapshot lacks the p and q fields")
    n = snap.grid.dim
    names = {f"{fam}{j + 1}" for fam in ("P", "Q", "pi", "eta") for j in range(n)}
    present = names & a.keys()
    if not present:
        return ReducedState(snap.grid, a["p"], a["q"])
    if present != names:
        raise SnapshotError(f"incomplete hidden fields: missing {sorted(names - present)}")
    hidden = [tuple(a[f"{fam}{j + 1}"] for j in range(n)) for fam in ("P", "Q", "pi", "eta")]
    return FullState(snap.grid, a["p"], a["q"], *hidden)
