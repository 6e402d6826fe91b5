"""On-disk formats: binary event streams, depth CSV, and dense tensor files.

All formats are little-endian and round-trip byte-identically: writing what
was just read reproduces the file exactly. Malformed binary inputs raise
:class:`FormatError` naming the byte offset of the problem.

Event stream layout: an 8-byte magic, then u16 version, u16 width, u16
height, then fixed 13-byte records of (t: u64 microseconds, x: u16, y: u16,
p: s8). Records must be time-ordered.

Tensor layout: a small ASCII header (magic/version line, representation
tag, shape, covered interval, "data" terminator), then row-major float32.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .events import DepthMeasurement, EventHistory, SparseDisparityGrid
from .matching import DisparityMap
from .stacking import Stack

__all__ = [
    "FormatError",
    "EVENT_MAGIC",
    "TENSOR_MAGIC",
    "write_events",
    "read_events",
    "read_events_csv",
    "write_depth_csv",
    "read_depth_csv",
    "write_tensor",
    "read_tensor",
    "disparity_to_stack",
    "stack_to_disparity",
    "grid_to_stack",
    "stack_to_grid",
]

EVENT_MAGIC = b"EVSTREAM"
EVENT_VERSION = 1
_EVENT_HEADER = struct.Struct("<8sHHH")
_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])

TENSOR_MAGIC = b"EVTENSOR"
TENSOR_VERSION = 1


class FormatError(ValueError):
    """Malformed input file; the message names the byte offset."""


def write_events(path, history: EventHistory, width: int, height: int) -> None:
    """Serialize a history; coordinates must fit the declared grid."""
    if len(history):
        if int(history.x.max()) >= width or int(history.y.max()) >= height:
            raise ValueError("event coordinates exceed the declared grid")
        if int(history.x.min()) < 0 or int(history.y.min()) < 0:
            raise ValueError("event coordinates must be non-negative")
    rec = np.empty(len(history), dtype=_RECORD)
    rec["t"] = history.t
    rec["x"] = history.x
    rec["y"] = history.y
    rec["p"] = history.p
    with open(path, "wb") as f:
        f.write(_EVENT_HEADER.pack(EVENT_MAGIC, EVENT_VERSION, width, height))
        f.write(rec.tobytes())


def read_events(path, side: str = "left") -> tuple[EventHistory, tuple[int, int]]:
    """Parse a binary event stream; returns the history and its (width, height)."""
    raw = Path(path).read_bytes()
    if len(raw) < _EVENT_HEADER.size:
        raise FormatError(f"{path}: truncated header at byte 0 (need {_EVENT_HEADER.size} bytes)")
    magic, version, width, height = _EVENT_HEADER.unpack_from(raw, 0)
    if magic != EVENT_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0 (got {magic!r})")
    if version != EVENT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 8")
    body = raw[_EVENT_HEADER.size :]
    n, rem = divmod(len(body), _RECORD.itemsize)
    if rem:
        raise FormatError(f"{path}: truncated record at byte {_EVENT_HEADER.size + n * _RECORD.itemsize}")
    rec = np.frombuffer(body, dtype=_RECORD)

    def offset(i: int, field: int = 0) -> int:
        return _EVENT_HEADER.size + i * _RECORD.itemsize + field

    bad_p = ~np.isin(rec["p"], (-1, 1))
    if bad_p.any():
        i = int(np.argmax(bad_p))
        raise FormatError(f"{path}: invalid polarity {rec['p'][i]} at byte {offset(i, 12)}")
    t = rec["t"].astype(np.int64)
    if n:
        regress = np.diff(t) < 0
        if regress.any():
            i = int(np.argmax(regress)) + 1
            raise FormatError(f"{path}: timestamps regress at byte {offset(i)}")
        oob = (rec["x"].astype(np.int64) >= width) | (rec["y"].astype(np.int64) >= height)
        if oob.any():
            i = int(np.argmax(oob))
            raise FormatError(f"{path}: coordinates outside {width}x{height} grid at byte {offset(i, 8)}")
    history = EventHistory(rec["x"].astype(np.int32), rec["y"].astype(np.int32), rec["p"], t, side)
    return history, (int(width), int(height))


def read_events_csv(path, side: str = "left") -> EventHistory:
    """Import events from text CSV with header t_us,x,y,p (sorted on load)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["t_us", "x", "y", "p"]:
            raise FormatError(f"{path}: expected header 't_us,x,y,p', got {header}")
        rows = [(int(r[0]), int(r[1]), int(r[2]), int(r[3])) for r in reader if r]
    if not rows:
        return EventHistory.empty(side)
    t, x, y, p = (np.array(col) for col in zip(*rows))
    return EventHistory.from_unsorted(x, y, p, t, side)


def write_depth_csv(path, measurements: Sequence[DepthMeasurement]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "z_m", "t_us"])
        for m in measurements:
            writer.writerow([m.x, m.y, repr(m.z), m.t_z])


def read_depth_csv(path) -> list[DepthMeasurement]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["x", "y", "z_m", "t_us"]:
            raise FormatError(f"{path}: expected header 'x,y,z_m,t_us', got {header}")
        out = []
        for i, r in enumerate(reader, start=2):
            if not r:
                continue
            try:
                out.append(DepthMeasurement(int(r[0]), int(r[1]), float(r[2]), int(r[3])))
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path}: bad depth row at line {i}: {exc}") from None
    return out


def write_tensor(path, stack: Stack) -> None:
    """Serialize a stack: ASCII header, then row-major float32 payload."""
    h, w, c = stack.data.shape
    lo, hi = stack.interval
    header = (
        f"{TENSOR_MAGIC.decode()} {TENSOR_VERSION}\n"
        f"kind {stack.kind}\n"
        f"shape {h} {w} {c}\n"
        f"interval {lo} {hi}\n"
        "data\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(stack.data.astype("<f4").tobytes())


def read_tensor(path) -> Stack:
    raw = Path(path).read_bytes()
    probe = raw[: len(TENSOR_MAGIC)]
    if probe != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0 (got {probe!r})")
    end = raw.find(b"data\n")
    if end < 0:
        raise FormatError(f"{path}: header terminator 'data' missing (searched from byte 0)")
    body_at = end + len(b"data\n")
    fields: dict[str, list[str]] = {}
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    for line in lines[1:]:
        key, *rest = line.split()
        fields[key] = rest
    first = lines[0].split()
    if len(first) != 2 or first[1] != str(TENSOR_VERSION):
        raise FormatError(f"{path}: unsupported version line {lines[0]!r} at byte 0")
    try:
        kind = fields["kind"][0]
        h, w, c = (int(v) for v in fields["shape"])
        lo, hi = (int(v) for v in fields["interval"])
    except (KeyError, ValueError, IndexError):
        raise FormatError(f"{path}: malformed header fields before byte {end}") from None
    expected = h * w * c * 4
    if len(raw) - body_at != expected:
        raise FormatError(
            f"{path}: payload is {len(raw) - body_at} bytes at byte {body_at}, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=h * w * c, offset=body_at)
    return Stack(data.astype(np.float64).reshape(h, w, c), kind, (lo, hi))


def disparity_to_stack(dm: DisparityMap) -> Stack:
    """Pack a disparity map as a 2-channel tensor (values, validity)."""
    data = np.stack([dm.data, dm.valid.astype(np.float64)], axis=2)
    return Stack(data, "disparity", (0, 0))


def stack_to_disparity(stack: Stack) -> DisparityMap:
    if stack.kind != "disparity" or stack.channels != 2:
        raise FormatError(f"tensor of kind {stack.kind!r} with {stack.channels} channels is not a disparity map")
    return DisparityMap(np.array(stack.data[:, :, 0]), stack.data[:, :, 1] > 0.5)


def grid_to_stack(grid: SparseDisparityGrid) -> Stack:
    """Pack a hint grid as a 2-channel tensor; the interval carries its scan time."""
    data = np.stack([grid.disparity, grid.valid.astype(np.float64)], axis=2)
    return Stack(data, "hints", (grid.t_z, grid.t_z))


def stack_to_grid(stack: Stack) -> SparseDisparityGrid:
    if stack.kind != "hints" or stack.channels != 2:
        raise FormatError(f"tensor of kind {stack.kind!r} with {stack.channels} channels is not a hint grid")
    return SparseDisparityGrid(np.array(stack.data[:, :, 0]), stack.data[:, :, 1] > 0.5, stack.interval[0])
