"""CSV field dumps and JSON reports."""

import datetime as _dt
import json
import math

import numpy as np

from .errors import GridMismatch, SchemaError
from .grid import Field

MAGIC = "# crestfield v1"


def _fmt(v):
    return repr(float(v))


def field_columns(dim, N, with_H=False):
    cols = [f"x{i + 1}" for i in range(dim)] + [f"u{a + 1}" for a in range(N)]
    return cols + (["absH"] if with_H else [])


def field_to_csv(fld, absH=None):
    """Rows ``x1[,x2],u1[,u2][,absH]`` in row-major node order."""
    grid = fld.grid
    x = grid.points()
    u = fld.flat()
    cols = [x, u]
    if absH is not None:
        cols.append(np.ravel(absH)[:, None])
    data = np.hstack(cols)
    lines = [MAGIC, "# columns: " + ",".join(field_columns(grid.dim, u.shape[1], absH is not None))]
    lines += [",".join(_fmt(v) for v in row) for row in data]
    return "\n".join(lines) + "\n"


def field_from_csv(text, grid, N):
    """Rebuild a :class:`Field` on ``grid``; raises :class:`GridMismatch` if nodes differ."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise SchemaError(f"field file must start with {MAGIC!r}", "field:1")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            rows.append([float(v) for v in s.split(",")])
        except ValueError:
            raise SchemaError(f"non-numeric entry in {s!r}", f"field:{i}") from None
    if not rows:
        raise GridMismatch("field file has no rows", "field")
    widths = {len(r) for r in rows}
    want = grid.dim + N
    if len(widths) != 1 or widths.pop() not in (want, want + 1):
        raise GridMismatch(f"expected {want} (or {want + 1}) columns per row", "field")
    data = np.array(rows)
    if data.shape[0] != grid.size:
        raise GridMismatch(f"field has {data.shape[0]} nodes, grid has {grid.size}", "field")
    pts = grid.points()
    scale = max(1.0, float(np.max(np.abs(pts))))
    err = np.abs(data[:, :grid.dim] - pts)
    if np.any(err > 1e-9 * scale):
        k = int(np.argmax(err.max(axis=1)))
        raise GridMismatch(f"node {k} is at {data[k, :grid.dim].tolist()}, grid has {pts[k].tolist()}",
                           f"field:row {k + 1}")
    u = data[:, grid.dim:grid.dim + N].reshape(grid.shape + (N,))
    try:
        return Field(grid, u)
    except ValueError as err:
        raise SchemaError(str(err), "field") from None


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def report_body(body):
    """Deterministic JSON text of a report body."""
    return json.dumps(_clean(body), sort_keys=True, indent=2)


def report_json(body, provenance):
    prov = dict(provenance)
    prov.setdefault("timestamp", _dt.datetime.now(_dt.timezone.utc).isoformat())
    return json.dumps({"body": json.loads(report_body(body)), "provenance": _clean(prov)},
                      sort_keys=True, indent=2) + "\n"


def table_csv(header, rows):
    lines = [MAGIC, ",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else _fmt(v) for v in row))
    return "\n".join(lines) + "\n"
