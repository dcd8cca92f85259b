"""Plain-text readers and writers.

Measurement files::

    nodes 34
    default_n 1
    # i j n x
    0 1 1 1

Q files use ``default_q v`` and lines ``i j Q``; graph files are ``nodes N``
followed by ``i j`` lines.  Node ids are 0-based, ``#`` starts a comment.
"""

import io as _io
import math
import os
from contextlib import contextmanager

from .graph import AdjacencyView, MeasurementData, canonical
from .measurement import ExtrinsicUncertainty


class DataError(ValueError):
    """Malformed input file."""


@contextmanager
def _open(src, mode="r"):
    if isinstance(src, (str, os.PathLike)):
        with open(src, mode) as fh:
            yield fh
    else:
        yield src


def _lines(fh, name):
    for lineno, raw in enumerate(fh, 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield f"{name}:{lineno}", line.split()


def _name(src):
    return str(src) if isinstance(src, (str, os.PathLike)) else getattr(src, "name", "<stream>")


def _int(tok, where, what):
    try:
        return int(tok)
    except ValueError:
        raise DataError(f"{where}: {what} must be an integer, got '{tok}'") from None


def _pair(tokens, N, where):
    if N is None:
        raise DataError(f"{where}: 'nodes' must come before pair lines")
    i = _int(tokens[0], where, "node id")
    j = _int(tokens[1], where, "node id")
    for v in (i, j):
        if not 0 <= v < N:
            raise DataError(f"{where}: unknown node id {v}")
    if i == j:
        raise DataError(f"{where}: self-pair ({i}, {i})")
    return canonical(i, j)


def parse_measurement_file(src):
    """Read a measurement file into :class:`MeasurementData`."""
    name = _name(src)
    N = None
    default_n = 0
    ov = {}
    with _open(src) as fh:
        for where, tok in _lines(fh, name):
            if tok[0] == "nodes" and len(tok) == 2:
                N = _int(tok[1], where, "node count")
                if N < 1:
                    raise DataError(f"{where}: node count must be positive")
            elif tok[0] == "default_n" and len(tok) == 2:
                default_n = _int(tok[1], where, "default_n")
                if default_n < 0:
                    raise DataError(f"{where}: default_n must be nonnegative")
            elif len(tok) == 4:
                p = _pair(tok, N, where)
                n = _int(tok[2], where, "n")
                x = _int(tok[3], where, "x")
                if n < 0 or x < 0:
                    raise DataError(f"{where}: counts must be nonnegative")
                if x > n:
                    raise DataError(f"{where}: x exceeds n")
                if p in ov:
                    raise DataError(f"{where}: duplicate pair {p}")
                ov[p] = (n, x)
            else:
                raise DataError(f"{where}: malformed line")
    if N is None:
        raise DataError(f"{name}: missing 'nodes' directive")
    return MeasurementData(N, default_n, ov)


def write_measurement_file(D, dst):
    with _open(dst, "w") as fh:
        fh.write(f"nodes {D.node_count}\ndefault_n {D.default_n}\n")
        for (i, j), (n, x) in sorted(D.overrides.items()):
            fh.write(f"{i} {j} {n} {x}\n")


def parse_q_file(src):
    """Read a Q file into :class:`ExtrinsicUncertainty`."""
    name = _name(src)
    N = None
    default_q = None
    vals = {}
    with _open(src) as fh:
        for where, tok in _lines(fh, name):
            if tok[0] == "nodes" and len(tok) == 2:
                N = _int(tok[1], where, "node count")
            elif tok[0] == "default_q" and len(tok) == 2:
                default_q = _float(tok[1], where)
            elif len(tok) == 3:
                p = _pair(tok, N, where)
                q = _float(tok[2], where)
                if not 0.0 <= q <= 1.0:
                    raise DataError(f"{where}: Q out of range [0, 1]: {q}")
                if p in vals:
                    raise DataError(f"{where}: duplicate pair {p}")
                vals[p] = q
            else:
                raise DataError(f"{where}: malformed line")
    if N is None:
        raise DataError(f"{name}: missing 'nodes' directive")
    try:
        return ExtrinsicUncertainty(N, vals, default_q)
    except ValueError as e:
        raise DataError(f"{name}: {e}") from None


def _float(tok, where):
    try:
        v = float(tok)
    except ValueError:
        raise DataError(f"{where}: expected a number, got '{tok}'") from None
    if not math.isfinite(v):
        raise DataError(f"{where}: value must be finite")
    return v


def write_q_file(Q, dst):
    with _open(dst, "w") as fh:
        fh.write(f"nodes {Q.node_count}\n")
        if Q.default_q is not None:
            fh.write(f"default_q {Q.default_q!r}\n")
        for (i, j), q in sorted(Q.values.items()):
            fh.write(f"{i} {j} {q!r}\n")


def read_graph(src):
    name = _name(src)
    N = None
    edges = set()
    with _open(src) as fh:
        for where, tok in _lines(fh, name):
            if tok[0] == "nodes" and len(tok) == 2:
                N = _int(tok[1], where, "node count")
            elif len(tok) == 2:
                edges.add(_pair(tok, N, where))
            else:
                raise DataError(f"{where}: malformed line")
    if N is None:
        raise DataError(f"{name}: missing 'nodes' directive")
    return AdjacencyView(N, frozenset(edges))


def write_graph(A, dst):
    with _open(dst, "w") as fh:
        fh.write(f"nodes {A.node_count}\n")
        for i, j in sorted(A.edges):
            fh.write(f"{i} {j}\n")


def read_labels(src):
    """Optional sidecar mapping 0-based ids to names, one ``id name`` per line."""
    out = {}
    with _open(src) as fh:
        for where, tok in _lines(fh, _name(src)):
            out[_int(tok[0], where, "node id")] = " ".join(tok[1:])
    return out


def to_string(writer, obj):
    buf = _io.StringIO()
    writer(obj, buf)
    return buf.getvalue()
