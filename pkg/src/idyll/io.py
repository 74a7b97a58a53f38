"""CSV / JSON writers that print every float with 17 significant digits."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .fields import PeriodicGrid1D


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot serialize non-finite float {x}")
    return format(x, ".17g")


def to_plain(obj):
    """Convert numpy scalars/arrays and complex numbers into JSON-ready objects."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with deterministic key order and 17-digit floats."""
    obj = to_plain(obj) if _level == 0 else obj
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(v, indent, _level + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt(obj)
    return json.dumps(obj)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj) + "\n")
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def samples_to_csv(path, grid: PeriodicGrid1D, **columns) -> Path:
    """Write ``index, y, <columns...>``; complex columns split into ``_re``/``_im``."""
    header = ["index", "y"]
    data = []
    for name, values in columns.items():
        values = np.asarray(values)
        if np.iscomplexobj(values):
            header += [f"{name}_re", f"{name}_im"]
            data += [values.real, values.imag]
        else:
            header.append(name)
            data.append(values.astype(float))
    y = grid.nodes
    rows = ([j, float(y[j])] + [float(col[j]) for col in data] for j in range(grid.n))
    return write_csv(path, header, rows)


def samples_from_csv(path):
    """Read a file written by :func:`samples_to_csv` back into ``(y, {name: array})``."""
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    cols = {name: rows[:, i] for i, name in enumerate(header)}
    return cols.pop("y"), {k: v for k, v in cols.items() if k != "index"}


def samples_to_json(grid: PeriodicGrid1D, values) -> dict:
    return {"grid": {"n": grid.n, "length": grid.length}, "data": to_plain(np.asarray(values))}


def samples_from_json(envelope: dict):
    grid = PeriodicGrid1D(envelope["grid"]["n"], envelope["grid"]["length"])
    return grid, np.asarray(envelope["data"], dtype=float)
