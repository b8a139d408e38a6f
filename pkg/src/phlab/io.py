"""CSV and JSON writers with deterministic formatting."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np


def fmt(v):
    """Shortest round-trip text for numbers; stable across platforms."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return repr(f)
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows, footer=None):
    """RFC 4180 CSV with a header row; an optional JSON footer line follows."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        if footer is not None:
            fh.write("# " + json.dumps(jsonable(footer), sort_keys=True) + "\r\n")
    return path


def read_csv(path):
    """Rows of a CSV written by ``write_csv``; returns (header, rows, footer)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    footer = None
    if lines and lines[-1].startswith("# "):
        footer = json.loads(lines[-1][2:])
        lines = lines[:-1]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:], footer


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), indent=2) + "\n", encoding="utf-8")
    return path


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
