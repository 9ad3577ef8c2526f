"""Atomic CSV/JSON writers.

Floats are written with ``%.17g`` so that every value round-trips; the
JSON mirror of a table is a list of row objects with the same keys.
"""

from __future__ import annotations

import json
import math
import os
import tempfile

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if v is None:
        return ""
    return str(v)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, json.dumps(_plain(obj), indent=2, sort_keys=False) + "\n")


def write_table(path, columns, rows):
    """Write a headered CSV and its ``.json`` mirror; returns both paths."""
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(r.get(c)) for c in columns))
    atomic_write(path, "\n".join(lines) + "\n")
    mirror = os.path.splitext(os.fspath(path))[0] + ".json"
    write_json(mirror, [{c: r.get(c) for c in columns} for r in rows])
    return [os.fspath(path), mirror]


def read_table(path):
    """Read a CSV written by :func:`write_table` back as a list of dicts."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        return [dict(zip(header, ln.rstrip("\n").split(","))) for ln in fh if ln.strip()]
