"""File formats: float grids, PGM rasters, masks, JSON configs and reports.

Float container layout (little-endian)::

    magic       8 bytes  b"DEFKFLD1"
    height      uint32
    width       uint32
    components  uint8    1 = raster or mask, 2 = displacement field
    payload     float32, one row-major plane per component (u plane, then v)

Masks are stored as 0.0 / 1.0. In-memory grids are float64, so a write
rounds to float32; a read-write-read cycle is bit-exact.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import io as _io
import json
import math
import struct
import types
import typing
from pathlib import Path

import numpy as np

from .core import ConfigInvalid, DisplacementField, FaultflowError, InvalidValue, Raster, RegionMask
from .warp import bilinear_grid

MAGIC = b"DEFKFLD1"
HEADER = struct.Struct("<8sIIB")
MAX_SIDE = 2**16
CONFIG_VERSION = 1


class FormatError(FaultflowError, ValueError):
    pass


class BadMagic(FormatError):
    pass


class Truncated(FormatError):
    pass


class DimensionOverflow(FormatError):
    pass


class ComponentMismatch(FormatError):
    pass


class LineOutOfBounds(FaultflowError, ValueError):
    pass


# ---------------------------------------------------------------------------
# float container


def _check_dims(h, w):
    if h < 1 or w < 1:
        raise FormatError(f"dimensions must be >= 1, got {h} x {w}")
    if h > MAX_SIDE or w > MAX_SIDE:
        raise DimensionOverflow(f"{h} x {w} exceeds {MAX_SIDE} per side")


def encode_grids(planes) -> bytes:
    h, w = planes[0].shape
    _check_dims(h, w)
    body = b"".join(np.asarray(p, dtype="<f4").tobytes(order="C") for p in planes)
    return HEADER.pack(MAGIC, h, w, len(planes)) + body


def decode_grids(buf: bytes, components: int):
    if len(buf) < HEADER.size:
        raise Truncated(f"header needs {HEADER.size} bytes, got {len(buf)}")
    magic, h, w, comps = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    _check_dims(h, w)
    if comps != components:
        raise ComponentMismatch(f"expected {components} component(s), file has {comps}")
    need = HEADER.size + 4 * h * w * comps
    if len(buf) < need:
        raise Truncated(f"payload needs {need} bytes, got {len(buf)}")
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes")
    flat = np.frombuffer(buf, dtype="<f4", count=h * w * comps, offset=HEADER.size)
    planes = flat.astype(np.float64).reshape(comps, h, w)
    if not np.all(np.isfinite(planes)):
        raise FormatError("payload contains non-finite values")
    return planes


def write_field(path, df: DisplacementField):
    Path(path).write_bytes(encode_grids([df.u, df.v]))


def read_field(path) -> DisplacementField:
    u, v = decode_grids(Path(path).read_bytes(), 2)
    return DisplacementField(u, v)


def write_mask(path, mask: RegionMask):
    Path(path).write_bytes(encode_grids([mask.bits.astype(np.float64)]))


def read_mask(path) -> RegionMask:
    (plane,) = decode_grids(Path(path).read_bytes(), 1)
    if not np.all((plane == 0.0) | (plane == 1.0)):
        raise FormatError("mask payload must be 0 or 1")
    return RegionMask(plane == 1.0)


# ---------------------------------------------------------------------------
# rasters: float container or PGM (by suffix)


def encode_pgm(raster: Raster, maxval: int = 255) -> bytes:
    if not 1 <= maxval <= 65535:
        raise FormatError("PGM maxval must be in [1, 65535]")
    _check_dims(raster.height, raster.width)
    q = np.rint(np.clip(raster.data, 0.0, 1.0) * maxval)
    dtype = "u1" if maxval < 256 else ">u2"
    head = f"P5\n{raster.width} {raster.height}\n{maxval}\n".encode("ascii")
    return head + q.astype(dtype).tobytes()


def _pgm_tokens(buf):
    # yields (token, end offset) for the 4 header fields, skipping comments
    pos = 0
    out = []
    while len(out) < 4:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(buf):
            raise Truncated("PGM header ended early")
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        out.append(buf[start:pos])
    return out, pos + 1


def decode_pgm(buf: bytes) -> Raster:
    if buf[:2] != b"P5":
        raise BadMagic(f"not a binary PGM: {buf[:2]!r}")
    (magic, w, h, maxval), pos = _pgm_tokens(buf)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FormatError(f"bad PGM header: {exc}") from None
    _check_dims(h, w)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"bad PGM maxval {maxval}")
    nbytes = 1 if maxval < 256 else 2
    need = pos + h * w * nbytes
    if len(buf) < need:
        raise Truncated(f"PGM payload needs {need} bytes, got {len(buf)}")
    dtype = "u1" if nbytes == 1 else ">u2"
    q = np.frombuffer(buf, dtype=dtype, count=h * w, offset=pos).reshape(h, w)
    return Raster(q.astype(np.float64) / maxval)


def write_raster(path, raster: Raster, maxval: int = 255):
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        path.write_bytes(encode_pgm(raster, maxval))
    else:
        path.write_bytes(encode_grids([raster.data]))


def read_raster(path) -> Raster:
    path = Path(path)
    buf = path.read_bytes()
    if path.suffix.lower() == ".pgm":
        return decode_pgm(buf)
    (plane,) = decode_grids(buf, 1)
    return Raster(plane)


# ---------------------------------------------------------------------------
# profiles


def extract_profile(df: DisplacementField, center, angle: float, length: float, samples: int):
    """Bilinear samples of (u, v) along a segment centred on ``center``.

    Returns an array of rows ``(s, u, v)`` where ``s`` is the arc length from
    the start of the segment.
    """
    if samples < 2:
        raise ValueError("a profile needs at least 2 samples")
    cx, cy = center
    s = np.linspace(0.0, float(length), samples)
    t = s - length / 2.0
    xs = cx + t * math.cos(angle)
    ys = cy + t * math.sin(angle)
    uu, inb = bilinear_grid(df.u, xs, ys)
    vv, _ = bilinear_grid(df.v, xs, ys)
    if not (inb[0] and inb[-1]):
        raise LineOutOfBounds("profile endpoints must lie inside the field")
    return np.column_stack([s, uu, vv])


def profile_csv(rows) -> str:
    buf = _io.StringIO()
    buf.write("s,u,v\n")
    for s, u, v in rows:
        buf.write(f"{s:.9g},{u:.9g},{v:.9g}\n")
    return buf.getvalue()


def write_profile(path, rows):
    Path(path).write_text(profile_csv(rows))


# ---------------------------------------------------------------------------
# JSON configs: strict dataclass (de)serialization


def _json_key(f: dataclasses.Field) -> str:
    return f.metadata.get("key", f.name)


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {_json_key(f): to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _coerce(tp, value, where):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if dataclasses.is_dataclass(tp):
        return from_jsonable(tp, value, where)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            raise ConfigInvalid(f"{where}: {value!r} is not one of {[m.value for m in tp]}") from None
    if origin in (tuple, list):
        if not isinstance(value, list):
            raise ConfigInvalid(f"{where}: expected a list")
        if origin is tuple and len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{where}[{i}]") for i, v in enumerate(value))
        if origin is tuple:
            if len(value) != len(args):
                raise ConfigInvalid(f"{where}: expected {len(args)} items")
            return tuple(_coerce(a, v, f"{where}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
        return [_coerce(args[0], v, f"{where}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid(f"{where}: expected a boolean")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigInvalid(f"{where}: expected a string")
        return value
    return value


def from_jsonable(cls, data, where=None):
    """Build dataclass ``cls`` from a JSON object; unknown keys are errors."""
    where = where or cls.__name__
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    fields = {_json_key(f): f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigInvalid(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    for key, f in fields.items():
        if key in data:
            kwargs[f.name] = _coerce(hints[f.name], data[key], f"{where}.{key}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigInvalid(f"{where}: {exc}") from None
    except InvalidValue as exc:
        raise ConfigInvalid(f"{where}: {exc}") from None


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def load_config(path, cls):
    """Read a versioned JSON config into dataclass ``cls``."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: top level must be an object")
    data = dict(data)
    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        raise ConfigInvalid(f"{path}: expected version {CONFIG_VERSION}, got {version!r}")
    return from_jsonable(cls, data)


def save_config(path, obj):
    data = to_jsonable(obj)
    data["version"] = CONFIG_VERSION
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# reports


def write_report_json(path, reports, extra=None):
    payload = {"reports": [r.as_dict() for r in reports]}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_report_csv(path, reports):
    rows = [r.as_dict() for r in reports]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in row.items()})


def read_report_json(path):
    return json.loads(Path(path).read_text())["reports"]
