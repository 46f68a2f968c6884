"""Binary and text file formats for frames, events, fields, weight maps and traces.

All binary formats are little-endian and start with a four-byte magic.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Union

import numpy as np
from PIL import Image

from .events import EventStream
from .exposure import ExposureModel, GlobalShutter, RollingShutter, TimeBins, WeightMap
from .field import DisplacementField
from .imaging import Frame

PathLike = Union[str, Path]

FRM_MAGIC = b"FRM1"
EVS_MAGIC = b"EVS1"
DFB_MAGIC = b"DFB1"
WMP_MAGIC = b"WMP1"
EVS_VERSION = 1

_FRM_HEAD = struct.Struct("<4sIIId")
_EVS_HEAD = struct.Struct("<4sIIIQdd")
_DFB_HEAD = struct.Struct("<4sIIIdd")
_WMP_HEAD = struct.Struct("<4sIII")
EVENT_RECORD = np.dtype([("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "V3")])

TRACE_COLUMNS = ("iter", "total", "field", "rs2rs", "gs2rs", "step")


class FormatError(ValueError):
    """A file is missing, truncated or carries the wrong magic."""


def _read(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _header(buf: bytes, head: struct.Struct, magic: bytes, path) -> tuple:
    if len(buf) < head.size or buf[:4] != magic:
        raise FormatError(f"{path}: not a {magic.decode()} file")
    return head.unpack_from(buf)


def sniff(path: PathLike) -> bytes:
    """First four bytes of a file, used to dispatch on format."""
    with open(path, "rb") as fh:
        return fh.read(4)


# -- frames -------------------------------------------------------------------

def write_frame(path: PathLike, frame: Frame):
    data = frame.data if frame.data.ndim == 3 else frame.data[..., None]
    H, W, C = data.shape
    with open(path, "wb") as fh:
        fh.write(_FRM_HEAD.pack(FRM_MAGIC, H, W, C, float(frame.timestamp)))
        fh.write(data.astype("<f4").tobytes())


def read_frame(path: PathLike) -> Frame:
    buf = _read(path)
    _, H, W, C, ts = _header(buf, _FRM_HEAD, FRM_MAGIC, path)
    n = H * W * C
    if len(buf) != _FRM_HEAD.size + 4 * n:
        raise FormatError(f"{path}: payload size does not match {H}x{W}x{C}")
    data = np.frombuffer(buf, "<f4", n, _FRM_HEAD.size).astype(np.float64).reshape(H, W, C)
    return Frame(data[..., 0] if C == 1 else data, ts)


def write_pnm(path: PathLike, frame: Frame):
    """8-bit PGM (grayscale) or PPM (colour)."""
    data = np.round(np.clip(frame.data, 0.0, 1.0) * 255).astype(np.uint8)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[..., 0]
    Image.fromarray(data).save(path, format="PPM")


def read_pnm(path: PathLike, timestamp: float = 0.0) -> Frame:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if im.mode.startswith("RGB") else "L")
            data = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    return Frame(data, timestamp)


def load_frame(path: PathLike, timestamp: float = 0.0) -> Frame:
    """Read FRM1, PGM or PPM by content."""
    head = sniff(path)
    if head == FRM_MAGIC:
        return read_frame(path)
    if head[:2] in (b"P5", b"P6"):
        return read_pnm(path, timestamp)
    raise FormatError(f"{path}: unrecognised frame format")


# -- events -------------------------------------------------------------------

def write_events(path: PathLike, stream: EventStream):
    rec = np.zeros(len(stream), dtype=EVENT_RECORD)
    rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
    with open(path, "wb") as fh:
        fh.write(_EVS_HEAD.pack(EVS_MAGIC, EVS_VERSION, stream.width, stream.height, len(stream),
                                float(stream.t_begin), float(stream.t_end)))
        fh.write(rec.tobytes())


def read_events(path: PathLike) -> EventStream:
    buf = _read(path)
    _, version, W, H, n, t0, t1 = _header(buf, _EVS_HEAD, EVS_MAGIC, path)
    if version != EVS_VERSION:
        raise FormatError(f"{path}: unsupported EVS version {version}")
    if len(buf) != _EVS_HEAD.size + n * EVENT_RECORD.itemsize:
        raise FormatError(f"{path}: expected {n} event records")
    rec = np.frombuffer(buf, EVENT_RECORD, n, _EVS_HEAD.size)
    try:
        return EventStream(rec["t"], rec["x"], rec["y"], rec["p"], W, H, t0, t1)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_events_csv(path: PathLike, stream: EventStream):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "p"])
        for row in zip(stream.t, stream.x, stream.y, stream.p):
            w.writerow([repr(float(row[0])), int(row[1]), int(row[2]), int(row[3])])


def read_events_csv(path: PathLike, width: int, height: int, t_begin=None, t_end=None) -> EventStream:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    t = np.array([float(r["t"]) for r in rows])
    cols = [np.array([int(r[k]) for r in rows], dtype=np.int64) for k in ("x", "y", "p")]
    t0 = float(t.min()) if t_begin is None and len(t) else (t_begin or 0.0)
    t1 = float(t.max()) if t_end is None and len(t) else (t_end or t0)
    return EventStream(t, *cols, width, height, t0, t1)


def load_events(path: PathLike, width: int = 0, height: int = 0) -> EventStream:
    if sniff(path) == EVS_MAGIC:
        return read_events(path)
    if str(path).endswith(".csv"):
        return read_events_csv(path, width, height)
    raise FormatError(f"{path}: not an EVS1 or CSV event file")


# -- displacement fields ---------------------------------------------------------

def write_field(path: PathLike, field: DisplacementField):
    b = field.bins
    with open(path, "wb") as fh:
        fh.write(_DFB_HEAD.pack(DFB_MAGIC, field.T, field.height, field.width, float(b.t0), float(b.t1)))
        fh.write(field.data.astype("<f4").tobytes())


def read_field(path: PathLike) -> DisplacementField:
    buf = _read(path)
    _, T, H, W, t0, t1 = _header(buf, _DFB_HEAD, DFB_MAGIC, path)
    n = 2 * T * H * W
    if len(buf) != _DFB_HEAD.size + 4 * n:
        raise FormatError(f"{path}: payload size does not match 2x{T}x{H}x{W}")
    data = np.frombuffer(buf, "<f4", n, _DFB_HEAD.size).astype(np.float64).reshape(2, T, H, W)
    return DisplacementField(data, TimeBins(t0, t1, T))


# -- weight maps -----------------------------------------------------------------

_RS_TAG, _GS_TAG = 0, 1


def _pack_model(m: ExposureModel) -> bytes:
    if isinstance(m, RollingShutter):
        return struct.pack("<Bdd", _RS_TAG, m.t_start, m.t_end)
    return struct.pack("<Bd", _GS_TAG, m.t_g)


def _unpack_model(buf: bytes, off: int, height: int, path):
    if off >= len(buf):
        raise FormatError(f"{path}: truncated exposure model")
    tag = buf[off]
    if tag == _RS_TAG:
        t_s, t_e = struct.unpack_from("<dd", buf, off + 1)
        return RollingShutter(t_s, t_e, height), off + 17
    if tag == _GS_TAG:
        (t_g,) = struct.unpack_from("<d", buf, off + 1)
        return GlobalShutter(t_g, height), off + 9
    raise FormatError(f"{path}: unknown exposure tag {tag}")


def write_weight_map(path: PathLike, wm: WeightMap):
    T, H, W = wm.weights.shape
    with open(path, "wb") as fh:
        fh.write(_WMP_HEAD.pack(WMP_MAGIC, T, H, W))
        fh.write(_pack_model(wm.src) + _pack_model(wm.dst))
        fh.write(wm.weights.astype("<f4").tobytes())


def read_weight_map(path: PathLike) -> WeightMap:
    buf = _read(path)
    _, T, H, W = _header(buf, _WMP_HEAD, WMP_MAGIC, path)
    try:
        src, off = _unpack_model(buf, _WMP_HEAD.size, H, path)
        dst, off = _unpack_model(buf, off, H, path)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: bad exposure model: {exc}") from exc
    n = T * H * W
    if len(buf) != off + 4 * n:
        raise FormatError(f"{path}: payload size does not match {T}x{H}x{W}")
    data = np.frombuffer(buf, "<f4", n, off).astype(np.float64).reshape(T, H, W)
    return WeightMap(data, src, dst)


# -- text outputs ------------------------------------------------------------------

def write_trace(path: PathLike, trace: Iterable[Dict[str, float]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace:
            w.writerow([int(row["iter"])] + [repr(float(row[k])) for k in TRACE_COLUMNS[1:]])


def read_trace(path: PathLike) -> List[Dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "iter" else float(v)) for k, v in r.items()} for r in csv.DictReader(fh)]


def write_json(path: PathLike, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: PathLike):
    try:
        return json.loads(_read(path).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
