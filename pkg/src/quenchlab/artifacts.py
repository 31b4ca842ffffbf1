"""On-disk artifact formats: field snapshots, delimited tables, manifests.

Snapshots are flat float64 row-major binaries with a JSON sidecar carrying the
geometry and run parameters; tables are comma-separated with a header row and
17 significant digits so a re-read round-trips the doubles exactly.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ValidationError

FLOAT_FMT = "%.17g"

MONITOR_COLUMNS = ("t", "sup_norm", "l1", "burned_area", "min_seed_cell",
                   "dissipation", "oscillation")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return "%d" % v
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_table(path, columns, rows):
    """Write a delimited table; rows is an iterable of tuples matching columns."""
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_table(path):
    """Read a table written by write_table back into a dict of float arrays.

    Non-numeric entries (verdict strings) come back as object arrays.
    """
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        raw = [line.strip().split(",") for line in fh if line.strip()]
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in raw]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col, dtype=object)
    return out


def save_field_raw(path, values, sidecar):
    """Write the float64 array row-major plus path + '.json' metadata."""
    path = os.fspath(path)
    values = np.ascontiguousarray(values, dtype=np.float64)
    values.tofile(path)
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def load_field_raw(path):
    path = os.fspath(path)
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    values = np.fromfile(path, dtype=np.float64)
    nx, ny = int(sidecar["nx"]), int(sidecar["ny"])
    if values.size != nx * ny:
        raise ValidationError(
            "snapshot size mismatch: %d values for nx=%d ny=%d" % (values.size, nx, ny))
    return values.reshape(ny, nx), sidecar


def write_manifest(path, payload):
    """Run manifest: configuration echo, seed, code version, wall time."""
    from . import __version__
    doc = {"code_version": "quenchlab " + __version__}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError("not JSON serializable: %r" % type(v))


def out_root(default="."):
    """Artifact root directory: $QUENCHLAB_OUT if set, else the given default."""
    root = os.environ.get("QUENCHLAB_OUT", "") or default
    os.makedirs(root, exist_ok=True)
    return root
