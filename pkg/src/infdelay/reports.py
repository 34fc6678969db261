"""Delimited and JSON output with fixed 17-digit formatting, plus gnuplot scripts."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .history import fmt


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, complex) or np.iscomplexobj(obj):
        z = complex(obj)
        return {"re": _num(z.real), "im": _num(z.imag)}
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _num(x: float):
    # round-trip through the fixed format so output is byte-stable
    return float(fmt(x)) if np.isfinite(x) else None


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return path


def root_rows(roots):
    rows = []
    for r in roots:
        rows.append([float(r.lambda0.real), float(r.lambda0.imag), int(r.pole_order), float(r.residual),
                     int(bool(r.is_simple))])
    return sorted(rows, key=lambda row: (row[0], row[1]))


ROOT_HEADER = ["re", "im", "pole_order", "residual", "simple"]


def write_gnuplot(path, data_file: str, title: str, xlabel: str, ylabel: str, columns, image: str | None = None,
                  style: str = "lines") -> Path:
    """Minimal gnuplot script plotting ``columns`` (list of ``(x, y, label)``) from a CSV."""
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set grid",
    ]
    if image:
        lines += ["set terminal pngcairo size 900,600", f"set output '{image}'"]
    plots = [f"'{data_file}' using {x}:{y} with {style} title '{label}'" for x, y, label in columns]
    lines.append("plot " + ", \\\n     ".join(plots))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
