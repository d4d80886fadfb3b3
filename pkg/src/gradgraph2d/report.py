"""Report persistence: canonical JSON and plot-ready CSV tables.

Floats are written with 17 significant digits, which round-trips every
double exactly, so a CSV cell and the matching JSON number parse to the
same value.  Non-finite floats become ``null`` in JSON and an empty CSV cell.
"""

import csv
import io
import json
import math
import os

import numpy as np

from .exceptions import IoFailure

__all__ = [
    "SCHEMA_VERSION",
    "format_float",
    "parse_float",
    "to_plain",
    "canonical_json",
    "write_text",
    "write_csv",
    "write_rings_csv",
    "read_csv",
    "TABLES",
]

SCHEMA_VERSION = 1

# report section -> (csv file, column order)
TABLES = {
    "coefficients": ("coefficients.csv",
                     ("case", "field", "component", "fit", "error", "oracle", "abs_diff")),
    "flux": ("flux.csv", ("case", "formula_id", "variant", "radius", "d")),
    "certificates": ("certificates.csv", ("case", "name", "key", "value")),
}


def format_float(x):
    x = float(x)
    if not math.isfinite(x):
        return ""
    return format(x, ".17g")


def parse_float(text):
    return None if text == "" else float(text)


def to_plain(obj):
    """Numpy scalars and arrays to Python builtins, recursively."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value  # str enums
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj) or "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=True)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical_json(obj, indent=2):
    """Sorted keys, 17-digit floats, ASCII only, trailing newline."""
    return _encode(to_plain(obj), indent, 0) + "\n"


def write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    write_text(path, buf.getvalue())


def read_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def write_rings_csv(rings, path):
    """Long-format dump ``r, theta, <component columns>`` of a :class:`RingSamples`."""
    values = rings.values.reshape(rings.radii.size, rings.thetas.size, -1)
    ncomp = values.shape[-1]
    if rings.kind == "gradient":
        names = ["u1", "u2"]
    elif rings.kind == "hessian":
        names = ["u11", "u12", "u21", "u22"]
    else:
        names = ["value"] if ncomp == 1 else [f"c{i}" for i in range(ncomp)]
    columns = ["r", "theta", *names]
    rows = []
    for i, r in enumerate(rings.radii):
        for j, t in enumerate(rings.thetas):
            row = {"r": float(r), "theta": float(t)}
            row.update({n: float(values[i, j, c]) for c, n in enumerate(names)})
            rows.append(row)
    parent = os.path.dirname(os.fspath(path))
    if parent and not os.path.isdir(parent):
        raise IoFailure(f"directory {parent} does not exist")
    write_csv(path, columns, rows)
