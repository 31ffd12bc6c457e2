"""File formats: delimited outputs, matrix serialisation, JSON sidecars.

Floats are written with repr (shortest round-trip decimal), so a write/read
cycle reproduces every double exactly.  All writes go through a temp file
and an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .dynamics import PopulationIndex, TransitionMatrix
from .errors import ValidationError


def _atomic_write(path: Path, data, mode: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        kwargs = {"encoding": "utf-8", "newline": "\n"} if mode == "w" else {}
        with os.fdopen(fd, mode, **kwargs) as handle:
            handle.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str):
    _atomic_write(path, text, "w")


def atomic_write_bytes(path: Path, data: bytes):
    _atomic_write(path, data, "wb")


def write_json(path: Path, payload: dict):
    atomic_write_text(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _fmt(value: float) -> str:
    return repr(float(value))


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_matrix_csv(path: Path, matrix: TransitionMatrix):
    """One row per line, full-precision decimals, plus a metadata sidecar."""
    lines = [",".join(_fmt(x) for x in row) for row in matrix.p]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
    write_json(sidecar_path(path), matrix.meta)


def read_matrix_csv(path: Path) -> TransitionMatrix:
    path = Path(path)
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise ValidationError(f"matrix file {path} is empty")
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
    return TransitionMatrix(p=np.array(rows), meta=meta)


_BIN_MAGIC = b"SGTM"


def write_matrix_binary(path: Path, matrix: TransitionMatrix):
    """Magic + dimensions header, then row-major little-endian doubles."""
    k = matrix.size
    header = _BIN_MAGIC + struct.pack("<qq", k, k)
    payload = matrix.p.astype("<f8").tobytes(order="C")
    atomic_write_bytes(Path(path), header + payload)
    write_json(sidecar_path(path), matrix.meta)


def read_matrix_binary(path: Path) -> TransitionMatrix:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != _BIN_MAGIC:
        raise ValidationError(f"{path} is not a matrix binary file")
    rows, cols = struct.unpack("<qq", data[4:20])
    expected = 20 + rows * cols * 8
    if len(data) != expected:
        raise ValidationError(f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(data)}")
    p = np.frombuffer(data[20:], dtype="<f8").reshape(rows, cols).copy()
    meta = {}
    side = sidecar_path(Path(path))
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
    return TransitionMatrix(p=p, meta=meta)


def read_matrix_auto(path: Path) -> TransitionMatrix:
    path = Path(path)
    with open(path, "rb") as handle:
        head = handle.read(4)
    if head == _BIN_MAGIC:
        return read_matrix_binary(path)
    return read_matrix_csv(path)


def write_populations_csv(path: Path, index: PopulationIndex):
    header = "index," + ",".join(f"omega_{w}" for w in index.omegas.omegas)
    lines = [header]
    for i, pop in enumerate(index.populations):
        lines.append(f"{i}," + ",".join(str(c) for c in pop))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_ensemble_csv(path: Path, ensemble):
    m = ensemble.mean_counts.shape[1]
    header = (
        ["t"]
        + [f"mean_n{r + 1}" for r in range(m)]
        + [f"std_n{r + 1}" for r in range(m)]
        + ["mean_cost", "std_cost"]
    )
    lines = [",".join(header)]
    for i, t in enumerate(ensemble.t):
        cells = [str(int(t))]
        cells += [_fmt(x) for x in ensemble.mean_counts[i]]
        cells += [_fmt(x) for x in ensemble.std_counts[i]]
        cells.append(_fmt(ensemble.mean_cost[i]))
        cells.append(_fmt(ensemble.std_cost[i]))
        lines.append(",".join(cells))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_diagnostics_csv(path: Path, rows):
    """rows: iterable of (t_from, t_to, resource, distance)."""
    lines = ["t_from,t_to,resource,distance"]
    for t0, t1, resource, distance in rows:
        lines.append(f"{int(t0)},{int(t1)},{int(resource)},{_fmt(distance)}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_trajectory_csv(path: Path, trajectory):
    m = trajectory.profiles.shape[1]
    header = (
        ["t", "state"]
        + [f"n{r + 1}" for r in range(m)]
        + [f"u{r + 1}" for r in range(m)]
        + [f"v{r + 1}" for r in range(m)]
        + ["cost"]
    )
    lines = [",".join(header)]
    for i in range(trajectory.horizon):
        cells = [str(i + 1), str(int(trajectory.states[i]))]
        cells += [str(int(x)) for x in trajectory.profiles[i]]
        cells += [_fmt(x) for x in trajectory.signal_u[i]]
        cells += [_fmt(x) for x in trajectory.signal_v[i]]
        cells.append(_fmt(trajectory.costs[i]))
        lines.append(",".join(cells))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
