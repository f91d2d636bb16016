"""IMESH text format.

::

    IMESH 1
    {"family": ..., "params": {...}, "resolution": ..., "seed": ..., "space": ...}
    V n
    u v x_1 ... x_d        (n lines)
    F m
    i j k                  (m lines, 0-based, counter-clockwise)
    B r                    (optional)
    i_0 i_1 ...            (r lines, one boundary loop each)

Floats are written with 17 significant digits so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import io as _io
import json

import numpy as np

from .ambient import space_from_header
from .errors import LabError, ParseError
from .mesh import ImmersedMesh

MAGIC = "IMESH 1"
_HEADER_KEYS = ("space", "params", "family", "family_params", "resolution", "seed")


def _fmt(x):
    return "%.17g" % x


def dumps(mesh: ImmersedMesh) -> str:
    out = _io.StringIO()
    out.write(MAGIC + "\n")
    out.write(json.dumps(mesh.header(), sort_keys=True, separators=(", ", ": ")) + "\n")
    out.write(f"V {mesh.n_vertices}\n")
    for uv, x in zip(mesh.uv, mesh.points):
        out.write(" ".join(_fmt(v) for v in (*uv, *x)) + "\n")
    out.write(f"F {mesh.n_faces}\n")
    for f in mesh.faces:
        out.write(f"{f[0]} {f[1]} {f[2]}\n")
    if mesh.boundary_loops:
        out.write(f"B {len(mesh.boundary_loops)}\n")
        for loop in mesh.boundary_loops:
            out.write(" ".join(str(int(i)) for i in loop) + "\n")
    return out.getvalue()


def save(mesh: ImmersedMesh, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(mesh))


def _section(lines, pos, tag):
    if pos >= len(lines):
        raise ParseError(f"missing section {tag!r}")
    parts = lines[pos].split()
    if len(parts) != 2 or parts[0] != tag:
        raise ParseError(f"line {pos + 1}: expected '{tag} <count>', got {lines[pos]!r}")
    try:
        count = int(parts[1])
    except ValueError:
        raise ParseError(f"line {pos + 1}: bad count {parts[1]!r}") from None
    if count < 0 or pos + 1 + count > len(lines):
        raise ParseError(f"section {tag}: {count} rows announced, file too short")
    return count


def loads(text: str) -> ImmersedMesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ParseError("not an IMESH 1 file")
    if len(lines) < 2:
        raise ParseError("missing header line")
    try:
        header = json.loads(lines[1])
    except json.JSONDecodeError as exc:
        raise ParseError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict) or "space" not in header:
        raise ParseError("header must be a JSON object with a 'space' key")
    try:
        space = space_from_header(header)
    except LabError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad space parameters: {exc}") from None

    pos = 2
    n = _section(lines, pos, "V")
    try:
        rows = np.array([[float(t) for t in ln.split()] for ln in lines[pos + 1 : pos + 1 + n]], dtype=float)
    except ValueError as exc:
        raise ParseError(f"bad vertex row: {exc}") from None
    if n and (rows.ndim != 2 or rows.shape[1] != 2 + space.d):
        raise ParseError(f"vertex rows must have {2 + space.d} columns (u v x_1..x_{space.d})")
    rows = rows.reshape(n, 2 + space.d)
    pos += 1 + n

    m = _section(lines, pos, "F")
    try:
        faces = np.array([[int(t) for t in ln.split()] for ln in lines[pos + 1 : pos + 1 + m]], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"bad face row: {exc}") from None
    if m and (faces.ndim != 2 or faces.shape[1] != 3):
        raise ParseError("face rows must have three indices")
    faces = faces.reshape(m, 3)
    pos += 1 + m

    loops = []
    if pos < len(lines) and lines[pos].strip():
        r = _section(lines, pos, "B")
        try:
            loops = [[int(t) for t in ln.split()] for ln in lines[pos + 1 : pos + 1 + r]]
        except ValueError as exc:
            raise ParseError(f"bad boundary row: {exc}") from None
        pos += 1 + r
    if any(ln.strip() for ln in lines[pos:]):
        raise ParseError(f"unexpected content at line {pos + 1}")

    extra = {k: v for k, v in header.items() if k not in _HEADER_KEYS}
    return ImmersedMesh(
        space,
        rows[:, 2:],
        faces,
        uv=rows[:, :2],
        boundary_loops=loops,
        family=header.get("family", "custom"),
        family_params=header.get("family_params", {}),
        resolution=int(header.get("resolution", 0)),
        seed=int(header.get("seed", 0)),
        extra=extra,
    )


def load(path) -> ImmersedMesh:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
