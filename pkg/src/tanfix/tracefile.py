"""Trace CSV serialization.

Header order: ``n, alpha, res_1..res_m, [dist_p], [dist_F], <point columns>``
followed, when intermediates were recorded, by ``y<j>_<point column>``.
Floats are written with ``repr`` (shortest round-trip decimal).
"""

import csv
import io

from tanfix.errors import ConfigError
from tanfix.iteration import Trace
from tanfix.spaces import TREE


def _fmt(v):
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def header(trace, space):
    cols = ["n", "alpha"] + [f"res_{i}" for i in range(1, trace.m + 1)]
    if trace.dist_p is not None:
        cols.append("dist_p")
    if trace.dist_F is not None:
        cols.append("dist_F")
    cols += space.columns()
    if trace.intermediates is not None:
        cols += [f"y{j}_{c}" for j in range(1, trace.m) for c in space.columns()]
    return cols


def _point_cells(p):
    if p.kind == TREE:
        return [str(p[0]), _fmt(p[1])]
    return [_fmt(c) for c in p.coords]


def trace_to_csv(trace, space):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header(trace, space))
    width = len(space.columns()) * (trace.m - 1)
    for i, x in enumerate(trace.points):
        row = [str(i + 1), _fmt(trace.alphas[i])] + [_fmt(r) for r in trace.residuals[i]]
        if trace.dist_p is not None:
            row.append(_fmt(trace.dist_p[i]))
        if trace.dist_F is not None:
            row.append(_fmt(trace.dist_F[i]))
        row += _point_cells(x)
        if trace.intermediates is not None:
            if i < len(trace.intermediates):
                for y in trace.intermediates[i]:
                    row += _point_cells(y)
            else:
                row += [""] * width
        w.writerow(row)
    return buf.getvalue()


def write_trace(path, trace, space):
    with open(path, "w", newline="") as fh:
        fh.write(trace_to_csv(trace, space))


def read_trace(path, space):
    """Parse a trace CSV written by :func:`write_trace`.

    Raises ConfigError when the header or a row does not match the schema.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise ConfigError(f"cannot read trace: {err}", key="trace") from None
    if not rows:
        raise ConfigError("trace file is empty", key="trace")
    head = rows[0]
    pcols = space.columns()
    if head[:2] != ["n", "alpha"]:
        raise ConfigError("trace header must start with n,alpha", key="trace")
    res_cols = [c for c in head if c.startswith("res_")]
    m = len(res_cols)
    if m < 1 or res_cols != [f"res_{i}" for i in range(1, m + 1)] or head[2:2 + m] != res_cols:
        raise ConfigError("trace header needs res_1..res_m after alpha", key="trace")
    pos = 2 + m
    has_p = pos < len(head) and head[pos] == "dist_p"
    pos += has_p
    has_F = pos < len(head) and head[pos] == "dist_F"
    pos += has_F
    if head[pos:pos + len(pcols)] != pcols:
        raise ConfigError(f"trace point columns must be {','.join(pcols)}", key="trace")
    ppos = pos
    pos += len(pcols)
    icols = head[pos:]
    inter = bool(icols)
    if inter and icols != [f"y{j}_{c}" for j in range(1, m) for c in pcols]:
        raise ConfigError("unexpected trailing trace columns", key="trace")

    tr = Trace(m, dist_p=[] if has_p else None, dist_F=[] if has_F else None,
               intermediates=[] if inter else None)
    width = len(pcols)
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(head):
            raise ConfigError(f"line {lineno}: expected {len(head)} fields, got {len(row)}", key="trace")
        try:
            if int(row[0]) != lineno - 1:
                raise ConfigError(f"line {lineno}: steps must be numbered 1, 2, ...", key="trace")
            tr.alphas.append(float(row[1]))
            tr.residuals.append(tuple(float(v) for v in row[2:2 + m]))
            k = 2 + m
            if has_p:
                tr.dist_p.append(float(row[k]))
                k += 1
            if has_F:
                tr.dist_F.append(float(row[k]))
            tr.points.append(_parse_point(space, row[ppos:ppos + width]))
            if inter and row[pos] != "":
                cells = row[pos:]
                tr.intermediates.append([_parse_point(space, cells[j:j + width])
                                         for j in range(0, len(cells), width)])
        except ValueError as err:
            raise ConfigError(f"line {lineno}: {err}", key="trace") from None
    if not tr.points:
        raise ConfigError("trace has no rows", key="trace")
    return tr


def _parse_point(space, cells):
    if space.point_kind == TREE:
        return space.point((int(cells[0]), float(cells[1])))
    return space.point(tuple(float(c) for c in cells))
