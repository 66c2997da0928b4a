"""ASCII readers and writers for OFF, OBJ, PLY, XYZ and correspondence files."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometry, IndexOutOfRange, LengthMismatch, ParseError
from .geometry import PointCloud, TriangleMesh

FORMATS = ("OFF", "OBJ", "PLY", "XYZ")
UNMATCHED = -1


def guess_format(path):
    ext = Path(path).suffix.lstrip(".").upper()
    if ext not in FORMATS:
        raise ParseError(f"unknown shape format {ext!r}", path)
    return ext


def _data_lines(path):
    """(line number, stripped text) for non-empty, non-comment lines."""
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ParseError("file not found", path) from None
    except UnicodeDecodeError:
        raise ParseError("not an ASCII file", path) from None
    out = []
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            out.append((no, line))
    return out


def _fan(poly):
    return [(poly[0], poly[t], poly[t + 1]) for t in range(1, len(poly) - 1)]


def _floats(tokens, path, no):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"bad number in {' '.join(tokens)!r}", path, no) from None


def _ints(tokens, path, no):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"bad index in {' '.join(tokens)!r}", path, no) from None


def _read_off(path):
    lines = _data_lines(path)
    if not lines:
        raise ParseError("empty file", path)
    no, head = lines[0]
    tokens = head.split()
    if not tokens[0].endswith("OFF"):
        raise ParseError("missing OFF header", path, no)
    rest = lines[1:]
    if len(tokens) > 1:
        counts = tokens[1:]
    else:
        if not rest:
            raise ParseError("missing counts line", path)
        no, line = rest[0]
        counts = line.split()
        rest = rest[1:]
    nv, nf = _ints(counts[:2], path, no)
    if len(rest) < nv + nf:
        raise ParseError(f"expected {nv} vertices and {nf} faces, file is too short", path)
    verts = []
    for no, line in rest[:nv]:
        xyz = line.split()
        if len(xyz) < 3:
            raise ParseError("vertex needs 3 coordinates", path, no)
        verts.append(_floats(xyz[:3], path, no))
    faces, face_lines = [], []
    for no, line in rest[nv:nv + nf]:
        tokens = line.split()
        count = _ints(tokens[:1], path, no)[0]
        if count < 3 or len(tokens) < count + 1:
            raise ParseError("malformed face", path, no)
        poly = _ints(tokens[1:count + 1], path, no)
        for idx in poly:
            if not 0 <= idx < nv:
                raise ParseError(f"face index {idx} out of range [0, {nv})", path, no)
        for tri in _fan(poly):
            faces.append(tri)
            face_lines.append(no)
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64), face_lines


def _read_obj(path):
    verts, faces, face_lines = [], [], []
    for no, line in _data_lines(path):
        tokens = line.split()
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise ParseError("vertex needs 3 coordinates", path, no)
            verts.append(_floats(tokens[1:4], path, no))
        elif tokens[0] == "f":
            poly = []
            for t in tokens[1:]:
                idx = _ints([t.split("/")[0]], path, no)[0]
                idx = idx - 1 if idx > 0 else len(verts) + idx
                poly.append(idx)
            if len(poly) < 3:
                raise ParseError("face needs at least 3 vertices", path, no)
            for tri in _fan(poly):
                faces.append(tri)
                face_lines.append(no)
    nv = len(verts)
    for (a, b, c), no in zip(faces, face_lines):
        for idx in (a, b, c):
            if not 0 <= idx < nv:
                raise ParseError(f"face index out of range [1, {nv}]", path, no)
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64), face_lines


def _read_ply(path):
    lines = _data_lines(path)
    if not lines or lines[0][1] != "ply":
        raise ParseError("missing ply header", path)
    elements, current = [], None
    body = None
    for pos, (no, line) in enumerate(lines[1:], 1):
        tokens = line.split()
        if tokens[0] == "format":
            if tokens[1] != "ascii":
                raise ParseError("only ASCII PLY is supported", path, no)
        elif tokens[0] == "element":
            current = {"name": tokens[1], "count": int(tokens[2]), "props": []}
            elements.append(current)
        elif tokens[0] == "property":
            if current is None:
                raise ParseError("property before element", path, no)
            current["props"].append(tokens[-1] if tokens[1] != "list" else "list:" + tokens[-1])
        elif tokens[0] == "end_header":
            body = lines[pos + 1:]
            break
    if body is None:
        raise ParseError("missing end_header", path)
    verts, faces, face_lines = [], [], []
    cursor = 0
    nv = 0
    for el in elements:
        rows = body[cursor:cursor + el["count"]]
        if len(rows) < el["count"]:
            raise ParseError(f"expected {el['count']} {el['name']} rows", path)
        cursor += el["count"]
        if el["name"] == "vertex":
            try:
                cols = [el["props"].index(c) for c in ("x", "y", "z")]
            except ValueError:
                raise ParseError("vertex element lacks x/y/z", path) from None
            for no, line in rows:
                vals = _floats(line.split(), path, no)
                if len(vals) < len(el["props"]):
                    raise ParseError("short vertex row", path, no)
                verts.append([vals[c] for c in cols])
            nv = len(verts)
        elif el["name"] == "face":
            for no, line in rows:
                tokens = line.split()
                count = _ints(tokens[:1], path, no)[0]
                if count < 3 or len(tokens) < count + 1:
                    raise ParseError("malformed face", path, no)
                poly = _ints(tokens[1:count + 1], path, no)
                for idx in poly:
                    if not 0 <= idx < nv:
                        raise ParseError(f"face index {idx} out of range [0, {nv})", path, no)
                for tri in _fan(poly):
                    faces.append(tri)
                    face_lines.append(no)
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64), face_lines


def _read_xyz(path):
    pts = []
    for no, line in _data_lines(path):
        tokens = line.split()
        if len(tokens) != 3:
            raise ParseError(f"expected 3 columns, got {len(tokens)}", path, no)
        pts.append(_floats(tokens, path, no))
    if not pts:
        raise ParseError("no points", path)
    return np.array(pts, dtype=np.float64)


def load_shape(path, format=None, k_local=10, isolated="reject"):
    """Read a mesh (OFF/OBJ/PLY) or point cloud (XYZ).

    The format defaults to the file extension. Vertex order is kept exactly.
    """
    fmt = (format or guess_format(path)).upper()
    if fmt not in FORMATS:
        raise ParseError(f"unknown shape format {fmt!r}", path)
    if fmt == "XYZ":
        pts = _read_xyz(path)
        try:
            return PointCloud(pts, k_local=k_local)
        except ValueError as exc:
            raise ParseError(str(exc), path) from None
    reader = {"OFF": _read_off, "OBJ": _read_obj, "PLY": _read_ply}[fmt]
    verts, faces, face_lines = reader(path)
    try:
        mesh = TriangleMesh(verts, faces, isolated=isolated)
    except IndexOutOfRange as exc:
        raise ParseError(str(exc), path) from None
    except DegenerateGeometry as exc:
        raise DegenerateGeometry(f"{path}: {exc}", exc.indices) from None
    zero = np.flatnonzero(mesh.face_areas <= 0)
    if len(zero):
        lines = sorted({face_lines[z] for z in zero})
        raise DegenerateGeometry(
            f"{path}: {len(zero)} zero-area faces (lines {lines[:10]})", zero
        )
    return mesh


def _fmt(x):
    return repr(float(x))


def save_shape(shape, path, format=None):
    fmt = (format or guess_format(path)).upper()
    path = Path(path)
    if fmt == "XYZ":
        lines = [" ".join(_fmt(c) for c in p) for p in shape.points]
    elif fmt == "OFF":
        lines = ["OFF", f"{shape.n} {len(shape.faces)} 0"]
        lines += [" ".join(_fmt(c) for c in v) for v in shape.vertices]
        lines += ["3 " + " ".join(str(int(i)) for i in f) for f in shape.faces]
    elif fmt == "OBJ":
        lines = ["v " + " ".join(_fmt(c) for c in v) for v in shape.vertices]
        lines += ["f " + " ".join(str(int(i) + 1) for i in f) for f in shape.faces]
    elif fmt == "PLY":
        lines = [
            "ply", "format ascii 1.0",
            f"element vertex {shape.n}", "property double x", "property double y", "property double z",
            f"element face {len(shape.faces)}", "property list uchar int vertex_indices",
            "end_header",
        ]
        lines += [" ".join(_fmt(c) for c in v) for v in shape.vertices]
        lines += ["3 " + " ".join(str(int(i)) for i in f) for f in shape.faces]
    else:
        raise ParseError(f"unknown shape format {fmt!r}", path)
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def read_correspondence(path, n=None, n_target=None):
    """One 0-based target index per line; ``-1`` marks an unmatched point."""
    out = []
    try:
        with open(path) as fh:
            for no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    out.append(int(line))
                except ValueError:
                    raise ParseError(f"bad index {line!r}", path, no) from None
    except FileNotFoundError:
        raise ParseError("file not found", path) from None
    t = np.array(out, dtype=np.int64)
    if n is not None and len(t) != n:
        raise LengthMismatch(f"{path}: {len(t)} entries, expected {n}")
    if np.any(t < UNMATCHED) or (n_target is not None and np.any(t >= n_target)):
        raise ParseError("correspondence index out of range", path)
    return t


def write_correspondence(path, t):
    atomic_write_text(path, "".join(f"{int(x)}\n" for x in t))


def read_pairs(path):
    """Landmark file: one ``source target`` pair per line."""
    pairs = []
    for no, line in _data_lines(path):
        tokens = line.replace(",", " ").split()
        if len(tokens) != 2:
            raise ParseError("expected 'source target'", path, no)
        pairs.append(tuple(_ints(tokens, path, no)))
    if not pairs:
        raise ParseError("no landmark pairs", path)
    return np.array(pairs, dtype=np.int64)
