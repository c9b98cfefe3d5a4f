"""Plain-text persistence: field snapshots and CSV series, written atomically."""

from __future__ import annotations

import csv
import io
import os
import tempfile

import numpy as np

FIELD_MAGIC = "lake-field"
FIELD_VERSION = "v1"
CSV_VERSION = "lake-csv v1"


def write_atomic(path, text):
    """Write ``text`` to a temporary file beside ``path`` and rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_field(values, grid, config_hash=""):
    """Snapshot text: ``lake-field v1 n_r n_theta components``, a hash line, one node per line.

    Nodes run ring by ring (interior rings outward, then the boundary ring
    ``r = 1``), angle fastest. A vector node lists its Cartesian components.
    """
    values = np.asarray(values, dtype=float)
    comps = 1 if values.shape == grid.shape else values.shape[0]
    want = grid.shape if comps == 1 else (comps, *grid.shape)
    if values.shape != want:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    flat = values.reshape(1, -1) if comps == 1 else values.reshape(comps, -1)
    lines = [f"{FIELD_MAGIC} {FIELD_VERSION} {grid.n_r} {grid.n_theta} {comps}",
             f"# config={config_hash}"]
    lines.extend(" ".join(repr(float(v)) for v in node) for node in flat.T)
    return "\n".join(lines) + "\n"


def write_field(path, values, grid, config_hash=""):
    write_atomic(path, format_field(values, grid, config_hash))


def read_field(path):
    """Return ``(values, n_r, n_theta, components, config_hash)``."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 5 or head[0] != FIELD_MAGIC or head[1] != FIELD_VERSION:
            raise ValueError(f"{path}: not a {FIELD_MAGIC} {FIELD_VERSION} file")
        n_r, n_theta, comps = (int(x) for x in head[2:])
        rest = fh.read().splitlines()
    chash = ""
    if rest and rest[0].startswith("#"):
        chash = rest[0].partition("config=")[2].strip()
        rest = rest[1:]
    data = np.array([[float(x) for x in line.split()] for line in rest if line.strip()])
    nodes = (n_r + 1) * n_theta
    if data.shape != (nodes, comps):
        raise ValueError(f"{path}: expected {nodes} nodes with {comps} components, got {data.shape}")
    shape = (n_r + 1, n_theta)
    values = data[:, 0].reshape(shape) if comps == 1 else data.T.reshape(comps, *shape)
    return values, n_r, n_theta, comps, chash


def format_csv(columns, rows, config_hash="", kind=""):
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION} {kind} config={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_num(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, columns, rows, config_hash="", kind=""):
    write_atomic(path, format_csv(columns, rows, config_hash, kind))


def read_csv(path):
    """Return ``(columns, rows)`` with numeric cells parsed; empty cells become ``None``."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    rows = []
    for rec in reader:
        row = {}
        for c, v in zip(columns, rec):
            try:
                row[c] = float(v) if v != "" else None
            except ValueError:
                row[c] = v
        rows.append(row)
    return columns, rows
