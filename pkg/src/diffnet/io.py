"""File output helpers: atomic writes, trajectory CSV, plot-data columns."""

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .types import CellKind, Trajectory


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def fmt(v: float) -> str:
    # repr is the shortest string that round-trips a float64
    return repr(float(v))


def trajectory_to_csv(traj: Trajectory, path=None) -> str:
    """Long format: ``time,cell_id,kind,species,value``.

    Species are the intracellular proteins plus ``u`` (intracellular AHL) and,
    when recorded, ``v`` (field at the cell).
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "cell_id", "kind", "species", "value"])
    off = traj.offsets
    for k, t in enumerate(traj.times):
        ts = fmt(t)
        for i, kind in enumerate(traj.kinds):
            kind = CellKind(kind)
            for c, name in enumerate(kind.species):
                w.writerow([ts, i, kind.value, name, fmt(traj.states[k, off[i] + c])])
            w.writerow([ts, i, kind.value, "u", fmt(traj.signals[k, i])])
            if traj.field_samples is not None:
                w.writerow([ts, i, kind.value, "v", fmt(traj.field_samples[k, i])])
    text = buf.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text


def trajectory_from_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    times = sorted({float(r["time"]) for r in rows})
    tindex = {t: k for k, t in enumerate(times)}
    kinds = {}
    for r in rows:
        kinds[int(r["cell_id"])] = CellKind(r["kind"])
    kinds = tuple(kinds[i] for i in range(len(kinds)))
    dims = [k.state_dim for k in kinds]
    off = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    T, n = len(times), len(kinds)
    states = np.full((T, off[-1]), np.nan)
    signals = np.full((T, n), np.nan)
    field = np.full((T, n), np.nan)
    has_field = False
    for r in rows:
        k, i, sp = tindex[float(r["time"])], int(r["cell_id"]), r["species"]
        v = float(r["value"])
        if sp == "u":
            signals[k, i] = v
        elif sp == "v":
            field[k, i] = v
            has_field = True
        else:
            states[k, off[i] + kinds[i].species.index(sp)] = v
    return Trajectory(np.array(times), states, signals, kinds, field if has_field else None)


def plot_data(traj: Trajectory, path=None) -> str:
    """Whitespace-separated columns with a ``#`` header, one row per time."""
    cols = ["time"]
    data = [traj.times]
    off = traj.offsets
    for i, kind in enumerate(traj.kinds):
        kind = CellKind(kind)
        for c, name in enumerate(kind.species):
            cols.append(f"{name}[{i}]")
            data.append(traj.states[:, off[i] + c])
        cols.append(f"u[{i}]")
        data.append(traj.signals[:, i])
        if traj.field_samples is not None:
            cols.append(f"v[{i}]")
            data.append(traj.field_samples[:, i])
    lines = ["# " + " ".join(cols)]
    arr = np.column_stack(data)
    lines += [" ".join(fmt(v) for v in row) for row in arr]
    text = "\n".join(lines) + "\n"
    if path is not None:
        atomic_write_text(path, text)
    return text
