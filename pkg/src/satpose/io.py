"""File formats: heatmap grids, mask PNGs, dataset/pose JSON, CSV tables.

Every writer goes through an atomic temp-file-and-rename so a crashed
run never leaves a truncated artifact, and every format is byte-stable:
re-serializing identical data produces identical bytes (JSON keys are
sorted, CSV uses a fixed line terminator, the binary formats carry no
timestamps). That stability is what makes golden-file regression tests
possible.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import NonUnitQuaternion, ParseError, SchemaError
from .geometry import LandmarkSet, Pose, Quaternion
from .heatmap import Heatmap
from .raster import FineMask

__all__ = [
    "GRID_MAGIC",
    "STATE_MAGIC",
    "MASK_PALETTE",
    "DatasetRecord",
    "PoseRecord",
    "DEFAULT_FIELD_MAP",
    "atomic_write_bytes",
    "atomic_write_text",
    "save_grid",
    "load_grid",
    "save_heatmap",
    "load_heatmap",
    "save_depth",
    "load_depth",
    "save_mask_png",
    "load_mask_png",
    "load_dataset",
    "save_dataset",
    "load_poses",
    "save_poses",
    "load_landmarks",
    "save_landmarks",
    "save_keypoints_csv",
    "load_keypoints_csv",
    "save_predictor_state",
    "load_predictor_state",
]

GRID_MAGIC = b"SPHM"
STATE_MAGIC = b"SPST"

MASK_PALETTE = {
    0: (0, 0, 0),
    1: (255, 0, 0),
    2: (0, 255, 0),
    3: (0, 0, 255),
    4: (255, 255, 0),
    5: (128, 128, 128),
}

DEFAULT_FIELD_MAP = {
    "filename": "filename",
    "quaternion": "quaternion",
    "translation": "translation",
    "domain": "domain",
}

_QUAT_NORM_TOL = 1e-3


def atomic_write_bytes(path, data: bytes) -> None:
    """Write bytes to path via a same-directory temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        # mkstemp creates 0600; grant the usual umask-governed mode instead
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- flat binary grid (heatmaps, depth buffers) -------------------------------


def save_grid(path, grid: np.ndarray) -> None:
    """Write a (C, H, W) float array: magic + 3 uint32 dims + float32 data."""
    arr = np.ascontiguousarray(grid, dtype=np.float32)
    if arr.ndim != 3:
        raise ValueError("grid must be a (C, H, W) array")
    header = GRID_MAGIC + struct.pack("<III", *arr.shape)
    atomic_write_bytes(path, header + arr.tobytes(order="C"))


def load_grid(path) -> np.ndarray:
    """Read a grid written by save_grid, as float64."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != GRID_MAGIC:
            raise ParseError(f"not a grid file: {os.fspath(path)!r}")
        c, h, w = struct.unpack("<III", header[4:])
        data = fh.read()
    expected = c * h * w * 4
    if len(data) != expected:
        raise ParseError(
            f"grid payload is {len(data)} bytes, expected {expected}"
        )
    arr = np.frombuffer(data, dtype="<f4").reshape(c, h, w)
    return arr.astype(np.float64)


def save_heatmap(path, heatmap: Heatmap) -> None:
    save_grid(path, heatmap.values)


def load_heatmap(path, stride: int) -> Heatmap:
    """Read a heatmap grid; the stride is not stored and must be supplied."""
    values = np.clip(load_grid(path), 0.0, 1.0)
    return Heatmap(values, stride=stride)


def save_depth(path, depth: np.ndarray) -> None:
    arr = np.asarray(depth, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("depth buffer must be a 2D array")
    save_grid(path, arr[None])


def load_depth(path) -> np.ndarray:
    grid = load_grid(path)
    if grid.shape[0] != 1:
        raise ParseError("depth file must hold exactly one channel")
    return grid[0]


# -- palette PNG masks ---------------------------------------------------------


def save_mask_png(path, mask: FineMask) -> None:
    from PIL import Image

    img = Image.fromarray(mask.labels, mode="P")
    palette = []
    for label in range(256):
        palette.extend(MASK_PALETTE.get(label, (0, 0, 0)))
    img.putpalette(palette)
    buf = _stdio.BytesIO()
    img.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def load_mask_png(path) -> FineMask:
    from PIL import Image

    with Image.open(path) as img:
        if img.mode != "P":
            raise ParseError(f"mask PNG must be palette mode, got {img.mode!r}")
        labels = np.asarray(img, dtype=np.uint8)
    if labels.size and labels.max() > 5:
        raise ParseError("mask PNG contains labels outside 0..5")
    return FineMask(labels)


# -- dataset records -----------------------------------------------------------


@dataclass(frozen=True)
class DatasetRecord:
    """One annotated sample: an image filename and its ground-truth pose."""

    filename: str
    quaternion: Quaternion
    translation: np.ndarray
    domain: str | None = None

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    @property
    def pose(self) -> Pose:
        return Pose.valid(self.quaternion, self.translation)


def _field(obj: dict, key: str, record_id: str):
    if key not in obj:
        raise SchemaError(key, f"missing in record '{record_id}'")
    return obj[key]


def _as_float_list(value, field: str, n: int, record_id: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SchemaError(field, f"record '{record_id}': expected {n} numbers")
    out = []
    for x in value:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise SchemaError(field, f"record '{record_id}': non-numeric entry")
        out.append(float(x))
    return out


def _ingest_quaternion(values: list[float], record_id: str) -> Quaternion:
    norm = float(np.linalg.norm(values))
    if abs(norm - 1.0) > _QUAT_NORM_TOL:
        raise NonUnitQuaternion(record_id, norm)
    return Quaternion(*values)


def load_dataset(path, field_map: dict | None = None) -> list[DatasetRecord]:
    """Read a JSON array of annotated samples, order preserved.

    field_map renames the expected keys (filename, quaternion,
    translation, domain) to whatever the file uses.
    """
    fm = dict(DEFAULT_FIELD_MAP)
    if field_map:
        fm.update(field_map)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(data, list):
        raise SchemaError("<root>", "dataset must be a JSON array")

    records = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise SchemaError("<root>", f"record {i} is not an object")
        name = _field(obj, fm["filename"], str(i))
        if not isinstance(name, str):
            raise SchemaError(fm["filename"], f"record {i}: expected a string")
        q_vals = _as_float_list(_field(obj, fm["quaternion"], name), fm["quaternion"], 4, name)
        t_vals = _as_float_list(_field(obj, fm["translation"], name), fm["translation"], 3, name)
        domain = obj.get(fm["domain"])
        if domain is not None and not isinstance(domain, str):
            raise SchemaError(fm["domain"], f"record '{name}': expected a string")
        records.append(
            DatasetRecord(
                filename=name,
                quaternion=_ingest_quaternion(q_vals, name),
                translation=np.array(t_vals),
                domain=domain,
            )
        )
    return records


def save_dataset(path, records, field_map: dict | None = None) -> None:
    fm = dict(DEFAULT_FIELD_MAP)
    if field_map:
        fm.update(field_map)
    out = []
    for r in records:
        obj = {
            fm["filename"]: r.filename,
            fm["quaternion"]: [float(x) for x in r.quaternion.as_array()],
            fm["translation"]: [float(x) for x in r.translation],
        }
        if r.domain is not None:
            obj[fm["domain"]] = r.domain
        out.append(obj)
    atomic_write_text(path, json.dumps(out, sort_keys=True, indent=2) + "\n")


# -- pose files ----------------------------------------------------------------


@dataclass(frozen=True)
class PoseRecord:
    """A predicted or ground-truth pose for one sample; n_in optional."""

    sample_id: str
    pose: Pose
    n_in: int | None = None


def load_poses(path) -> list[PoseRecord]:
    """Read a JSON array of pose entries ({quaternion, translation} or
    {zero: true}), order preserved."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(data, list):
        raise SchemaError("<root>", "pose file must be a JSON array")

    records = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise SchemaError("<root>", f"entry {i} is not an object")
        sid = _field(obj, "sample_id", str(i))
        if not isinstance(sid, str):
            raise SchemaError("sample_id", f"entry {i}: expected a string")
        n_in = obj.get("n_in")
        if n_in is not None and (isinstance(n_in, bool) or not isinstance(n_in, int)):
            raise SchemaError("n_in", f"entry '{sid}': expected an integer")
        if obj.get("zero"):
            pose = Pose.zero()
        else:
            q_vals = _as_float_list(_field(obj, "quaternion", sid), "quaternion", 4, sid)
            t_vals = _as_float_list(_field(obj, "translation", sid), "translation", 3, sid)
            pose = Pose.valid(_ingest_quaternion(q_vals, sid), np.array(t_vals))
        records.append(PoseRecord(sample_id=sid, pose=pose, n_in=n_in))
    return records


def save_poses(path, records) -> None:
    out = []
    for r in records:
        obj: dict = {"sample_id": r.sample_id}
        if r.pose.is_zero:
            obj["zero"] = True
        else:
            obj["quaternion"] = [float(x) for x in r.pose.rotation.as_array()]
            obj["translation"] = [float(x) for x in r.pose.translation]
        if r.n_in is not None:
            obj["n_in"] = int(r.n_in)
        out.append(obj)
    atomic_write_text(path, json.dumps(out, sort_keys=True, indent=2) + "\n")


# -- landmark files ------------------------------------------------------------


def load_landmarks(path) -> LandmarkSet:
    """Read a JSON array of [x, y, z] body-frame points (meters)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(data, list):
        raise SchemaError("<root>", "landmark file must be a JSON array")
    points = [_as_float_list(row, "<point>", 3, str(i)) for i, row in enumerate(data)]
    return LandmarkSet(points)


def save_landmarks(path, landmarks: LandmarkSet) -> None:
    out = [[float(x) for x in row] for row in landmarks.points]
    atomic_write_text(path, json.dumps(out, sort_keys=True, indent=2) + "\n")


# -- keypoint tables -----------------------------------------------------------

_KP_HEADER = ["sample_id", "kp_index", "u", "v", "depth"]


def save_keypoints_csv(path, rows) -> None:
    """rows: iterable of (sample_id, kp_index, u, v, depth)."""
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_KP_HEADER)
    for sid, k, u, v, d in rows:
        writer.writerow([sid, int(k), repr(float(u)), repr(float(v)), repr(float(d))])
    atomic_write_text(path, buf.getvalue())


def load_keypoints_csv(path) -> list[tuple[str, int, float, float, float]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _KP_HEADER:
            raise ParseError(f"expected header {','.join(_KP_HEADER)}", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError("expected 5 columns", line=line_no)
            try:
                rows.append(
                    (row[0], int(row[1]), float(row[2]), float(row[3]), float(row[4]))
                )
            except ValueError:
                raise ParseError("non-numeric keypoint field", line=line_no) from None
    return rows


# -- predictor state blobs -----------------------------------------------------

_STATE_VERSION = 1


def save_predictor_state(path, state: dict) -> None:
    """Versioned binary blob: magic, version, length-prefixed JSON payload."""
    payload = json.dumps(state, sort_keys=True).encode("utf-8")
    blob = STATE_MAGIC + struct.pack("<II", _STATE_VERSION, len(payload)) + payload
    atomic_write_bytes(path, blob)


def load_predictor_state(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12 or head[:4] != STATE_MAGIC:
            raise ParseError(f"not a predictor state file: {os.fspath(path)!r}")
        version, length = struct.unpack("<II", head[4:])
        if version != _STATE_VERSION:
            raise ParseError(f"unsupported state version {version}")
        payload = fh.read()
    if len(payload) != length:
        raise ParseError(f"state payload is {len(payload)} bytes, expected {length}")
    return json.loads(payload.decode("utf-8"))
