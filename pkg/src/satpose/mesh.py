"""Wavefront OBJ loading for the part-labeled satellite mesh.

Part labels ride on `g` (group) or `usemtl` (material) statements whose
name matches one of the five part categories, case-insensitively:
antenna1, antenna2, antenna3, solar_panel, body. Faces inherit the most
recent label; polygons are fan-triangulated; negative indices count
from the end of the vertex list as usual for OBJ.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import NoTriangles, ParseError, UnknownPartLabel
from .geometry import PART_NAMES, LabeledMesh

__all__ = ["load_mesh", "save_mesh"]

_NAME_TO_LABEL = {name: label for label, name in PART_NAMES.items()}


def _parse_index(token: str, n_vertices: int, line_no: int) -> int:
    """Resolve one face-vertex token (v, v/t, v//n, v/t/n) to a 0-based index."""
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise ParseError(f"bad face index {token!r}", line=line_no) from None
    if idx > 0:
        out = idx - 1
    elif idx < 0:
        out = n_vertices + idx
    else:
        raise ParseError("face indices are 1-based, got 0", line=line_no)
    if out < 0 or out >= n_vertices:
        raise ParseError(f"face index {idx} out of range", line=line_no)
    return out


def load_mesh(path) -> LabeledMesh:
    """Load an OBJ file into a LabeledMesh.

    Raises UnknownPartLabel for a group or material name outside the
    five categories, ParseError for malformed geometry, and NoTriangles
    when no usable (non-degenerate) triangle survives.
    """
    vertices: list[list[float]] = []
    triangles: list[list[int]] = []
    labels: list[int] = []
    current_label: int | None = None

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            keyword = parts[0]
            if keyword == "v":
                if len(parts) < 4:
                    raise ParseError("vertex needs 3 coordinates", line=line_no)
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise ParseError("non-numeric vertex coordinate", line=line_no) from None
            elif keyword in ("g", "usemtl", "o"):
                if keyword == "o":
                    continue  # object names carry no label information
                if len(parts) < 2:
                    raise ParseError(f"{keyword} needs a name", line=line_no)
                name = parts[1].lower()
                if name not in _NAME_TO_LABEL:
                    raise UnknownPartLabel(parts[1])
                current_label = _NAME_TO_LABEL[name]
            elif keyword == "f":
                if len(parts) < 4:
                    raise ParseError("face needs at least 3 vertices", line=line_no)
                if current_label is None:
                    raise ParseError(
                        "face appears before any part group or material", line=line_no
                    )
                idx = [_parse_index(tok, len(vertices), line_no) for tok in parts[1:]]
                for k in range(1, len(idx) - 1):
                    triangles.append([idx[0], idx[k], idx[k + 1]])
                    labels.append(current_label)
            # vn, vt, s, mtllib and other statements are ignored

    if not triangles:
        raise NoTriangles(f"no faces in {os.fspath(path)!r}")
    mesh = LabeledMesh(np.array(vertices), np.array(triangles), labels)
    if mesh.triangles.shape[0] == 0:
        raise NoTriangles("every face was degenerate")
    return mesh


def save_mesh(path, mesh: LabeledMesh) -> None:
    """Write a LabeledMesh as OBJ, one group per contiguous label run."""
    from .io import atomic_write_text

    lines = []
    for vx, vy, vz in mesh.vertices:
        lines.append(f"v {float(vx)!r} {float(vy)!r} {float(vz)!r}")
    last_label = None
    for tri, label in zip(mesh.triangles, mesh.labels):
        if label != last_label:
            lines.append(f"g {PART_NAMES[int(label)]}")
            last_label = label
        lines.append(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}")
    atomic_write_text(path, "\n".join(lines) + "\n")
