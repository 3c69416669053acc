"""Grid CSV files and atomic output.

A grid file holds one lattice row per line, northernmost row first, values
separated by commas; ``NA`` or an empty field marks a missing cell. Values
are written with Python's shortest round-trip representation, so reading
back a written grid gives the identical array.
"""

import csv
import json
import math
import os
import tempfile

import numpy as np

from .errors import DataError
from .lattice import Grid

MISSING = "NA"


def parse_grid_text(text, skip_header=False, source="<text>"):
    rows = []
    reader = csv.reader(text.splitlines())
    for lineno, fields in enumerate(reader, start=1):
        if skip_header and lineno == 1:
            continue
        if not fields or all(not f.strip() for f in fields):
            continue
        row = []
        for col, tok in enumerate(fields, start=1):
            tok = tok.strip()
            if tok == MISSING or not tok:
                row.append(math.nan)
                continue
            try:
                v = float(tok)
            except ValueError:
                raise DataError(f"{source}:{lineno}: column {col}: cannot parse {tok!r} as a number") from None
            if not math.isfinite(v):
                raise DataError(f"{source}:{lineno}: column {col}: non-finite value {tok!r}; use {MISSING} for missing")
            row.append(v)
        if rows and len(row) != len(rows[0][1]):
            raise DataError(
                f"{source}:{lineno}: expected {len(rows[0][1])} values, found {len(row)}"
            )
        rows.append((lineno, row))
    if not rows:
        raise DataError(f"{source}: no data rows")
    return Grid.from_rows_north_first([r for _, r in rows])


def read_grid(path, skip_header=False):
    """Read a grid CSV file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_grid_text(text, skip_header, str(path))


def _fmt(v):
    return MISSING if math.isnan(v) else repr(float(v))


def format_grid(grid):
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in grid.rows_north_first())


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".latiso-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_grid(grid, path):
    atomic_write_text(path, format_grid(grid))


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def write_json(obj, path):
    atomic_write_text(path, dumps_json(obj))
