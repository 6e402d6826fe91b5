"""Core data model: events, event histories, stereo geometry, and depth hints.

Coordinates follow image convention: x is the column (0-based, left to right),
y is the row. Timestamps are integer microseconds. A W x H grid is stored in
numpy image layout, i.e. as an (H, W) array.

All rounding of fractional columns or timestamps goes through
:func:`round_half_away` so every consumer discretizes the same way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Event",
    "EventHistory",
    "StereoRig",
    "DepthMeasurement",
    "SparseDisparityGrid",
    "ProjectionStats",
    "OCCLUSION_POLICIES",
    "round_half_away",
    "triangulate",
    "project_to_grid",
    "sample_sbn",
    "sample_sbt",
    "conservative_range",
    "insert_sorted",
]

# keep-nearest and discard-occluded produce the same surviving cells (the
# largest disparity wins a collision); they exist as separate names because
# callers track the losers differently. keep-all skips collision handling.
OCCLUSION_POLICIES = ("keep-nearest", "keep-all", "discard-occluded")


class Event(NamedTuple):
    """A single brightness-change record."""

    x: int
    y: int
    p: int
    t: int


def round_half_away(values):
    """Round to the nearest integer, halves away from zero.

    Returns a plain int for scalar input, an int64 array otherwise.
    """
    v = np.asarray(values, dtype=np.float64)
    rounded = np.where(v >= 0.0, np.floor(v + 0.5), np.ceil(v - 0.5))
    if np.ndim(values) == 0:
        return int(rounded)
    return rounded.astype(np.int64)


class EventHistory:
    """Time-ordered event stream for one camera.

    Events are stored as parallel numpy arrays. The ordering invariant
    (t[k] <= t[k+1]) is checked at construction and the arrays are frozen
    afterwards. Duplicate events are allowed.
    """

    __slots__ = ("x", "y", "p", "t", "side")

    def __init__(self, x, y, p, t, side: str = "left") -> None:
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        x = np.ascontiguousarray(x, dtype=np.int32)
        y = np.ascontiguousarray(y, dtype=np.int32)
        p = np.ascontiguousarray(p, dtype=np.int8)
        t = np.ascontiguousarray(t, dtype=np.int64)
        n = t.size
        if not (x.size == y.size == p.size == n):
            raise ValueError("event component arrays must have equal length")
        if n:
            if not np.isin(p, (-1, 1)).all():
                bad = p[~np.isin(p, (-1, 1))][0]
                raise ValueError(f"polarity must be -1 or +1, got {bad}")
            if t[0] < 0:
                raise ValueError("timestamps must be non-negative")
            gaps = np.diff(t)
            if gaps.size and gaps.min() < 0:
                k = int(np.argmax(gaps < 0)) + 1
                raise ValueError(f"timestamps must be non-decreasing (violated at index {k})")
        for arr in (x, y, p, t):
            arr.setflags(write=False)
        self.x = x
        self.y = y
        self.p = p
        self.t = t
        self.side = side

    @classmethod
    def empty(cls, side: str = "left") -> "EventHistory":
        return cls([], [], [], [], side)

    @classmethod
    def from_events(cls, events: Sequence[Event], side: str = "left") -> "EventHistory":
        if not events:
            return cls.empty(side)
        x, y, p, t = zip(*events)
        return cls(x, y, p, t, side)

    @classmethod
    def from_unsorted(cls, x, y, p, t, side: str = "left") -> "EventHistory":
        """Build a history from arrays in arbitrary time order.

        The stable sort keeps the given order among equal timestamps.
        """
        t = np.asarray(t, dtype=np.int64)
        order = np.argsort(t, kind="stable")
        x = np.asarray(x)[order]
        y = np.asarray(y)[order]
        p = np.asarray(p)[order]
        return cls(x, y, p, t[order], side)

    def __len__(self) -> int:
        return self.t.size

    def __iter__(self) -> Iterator[Event]:
        for i in range(self.t.size):
            yield Event(int(self.x[i]), int(self.y[i]), int(self.p[i]), int(self.t[i]))

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), int(self.p[i]), int(self.t[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventHistory):
            return NotImplemented
        return (
            self.side == other.side
            and self.t.size == other.t.size
            and bool(
                np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y)
                and np.array_equal(self.p, other.p)
                and np.array_equal(self.t, other.t)
            )
        )

    def __repr__(self) -> str:
        if self.t.size:
            lo, hi = self.range
            span = f"[{lo}, {hi}] us"
        else:
            span = "empty"
        return f"EventHistory(side={self.side!r}, n={self.t.size}, {span})"

    @property
    def range(self) -> tuple[int, int]:
        """Covered time range (first timestamp, last timestamp)."""
        if not self.t.size:
            raise ValueError("empty history has no time range")
        return int(self.t[0]), int(self.t[-1])

    def _slice(self, lo: int, hi: int) -> "EventHistory":
        return EventHistory(self.x[lo:hi], self.y[lo:hi], self.p[lo:hi], self.t[lo:hi], self.side)


@dataclass(frozen=True)
class StereoRig:
    """Rectified stereo geometry and the disparity search range."""

    baseline_m: float
    focal_px: float
    width: int
    height: int
    d_max: int

    def __post_init__(self) -> None:
        if self.baseline_m <= 0:
            raise ValueError(f"baseline must be positive, got {self.baseline_m}")
        if self.focal_px <= 0:
            raise ValueError(f"focal length must be positive, got {self.focal_px}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.d_max < 1:
            raise ValueError(f"d_max must be at least 1, got {self.d_max}")


def triangulate(rig: StereoRig, z: float) -> float:
    """Disparity in pixels of a point at depth ``z`` meters: baseline * focal / z.

    Fractional disparities are preserved; discretization happens only at
    injection or projection sites.
    """
    if z <= 0:
        raise ValueError(f"depth must be positive, got {z}")
    return rig.baseline_m * rig.focal_px / z


@dataclass(frozen=True)
class DepthMeasurement:
    """One active-sensor depth point, registered to the left image grid."""

    x: int
    y: int
    z: float
    t_z: int = 0

    def __post_init__(self) -> None:
        if self.z <= 0:
            raise ValueError(f"depth must be positive, got {self.z}")


@dataclass(frozen=True)
class ProjectionStats:
    """Bookkeeping from projecting measurements onto the hint grid."""

    n_measurements: int = 0
    n_dropped: int = 0
    n_overwritten: int = 0
    n_occluded: int = 0

    @property
    def n_used(self) -> int:
        return self.n_measurements - self.n_dropped - self.n_overwritten - self.n_occluded


class SparseDisparityGrid:
    """Sparse per-pixel disparity hints on the left image grid."""

    __slots__ = ("disparity", "valid", "t_z", "stats")

    def __init__(self, disparity, valid, t_z: int = 0, stats: ProjectionStats | None = None) -> None:
        disparity = np.ascontiguousarray(disparity, dtype=np.float64)
        valid = np.ascontiguousarray(valid, dtype=bool)
        if disparity.ndim != 2 or disparity.shape != valid.shape:
            raise ValueError("disparity and validity must be equal-shaped 2-D arrays")
        disparity.setflags(write=False)
        valid.setflags(write=False)
        self.disparity = disparity
        self.valid = valid
        self.t_z = int(t_z)
        self.stats = stats if stats is not None else ProjectionStats()

    @classmethod
    def empty(cls, width: int, height: int, t_z: int = 0) -> "SparseDisparityGrid":
        return cls(np.zeros((height, width)), np.zeros((height, width), bool), t_z)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def valid_cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Valid cells in row-major order as (rows, cols, disparities)."""
        ys, xs = np.nonzero(self.valid)
        return ys, xs, self.disparity[ys, xs]


def project_to_grid(
    rig: StereoRig,
    measurements: Sequence[DepthMeasurement],
    policy: str = "keep-nearest",
) -> SparseDisparityGrid:
    """Triangulate measurements and scatter them onto the left image grid.

    Measurements whose disparity falls outside [0, d_max) are dropped. When
    several measurements hit the same left cell, the last one wins and the
    rest count as overwritten. Under ``keep-nearest`` or ``discard-occluded``,
    cells on one row that collide on the same right column x' = round(x - d)
    keep only the largest disparity; the losers count as occluded. Cells whose
    x' falls outside the grid stay valid (they are skipped later, at
    injection time). ``keep-all`` performs no collision handling.
    """
    if policy not in OCCLUSION_POLICIES:
        raise ValueError(f"unknown occlusion policy {policy!r}")
    w, h = rig.width, rig.height
    disparity = np.zeros((h, w))
    valid = np.zeros((h, w), bool)
    if not measurements:
        return SparseDisparityGrid(disparity, valid, 0, ProjectionStats())

    xs = np.array([m.x for m in measurements], dtype=np.int64)
    ys = np.array([m.y for m in measurements], dtype=np.int64)
    zs = np.array([m.z for m in measurements], dtype=np.float64)
    t_z = max(m.t_z for m in measurements)
    if ((xs < 0) | (xs >= w) | (ys < 0) | (ys >= h)).any():
        raise ValueError("measurement outside the sensor grid")

    n_total = xs.size
    d = rig.baseline_m * rig.focal_px / zs
    in_range = (d >= 0) & (d < rig.d_max)
    n_dropped = int((~in_range).sum())
    xs, ys, d = xs[in_range], ys[in_range], d[in_range]

    # Same-cell duplicates: the last measurement in input order wins.
    n_overwritten = 0
    if xs.size:
        lin = ys * w + xs
        order = np.arange(lin.size)
        perm = np.lexsort((order, lin))
        last = np.r_[lin[perm][1:] != lin[perm][:-1], True]
        n_overwritten = int(lin.size - last.sum())
        keep = np.sort(perm[last])
        xs, ys, d = xs[keep], ys[keep], d[keep]

    disparity[ys, xs] = d
    valid[ys, xs] = True

    n_occluded = 0
    if policy != "keep-all" and xs.size:
        xr = round_half_away(xs - d)
        vis = (xr >= 0) & (xr < w)
        vy, vx, vd, vxr = ys[vis], xs[vis], d[vis], xr[vis]
        key = vy * w + vxr
        # Primary: collision group. Secondary: disparity descending, then
        # column ascending so ties resolve to the first cell in row-major order.
        perm = np.lexsort((vx, -vd, key))
        k = key[perm]
        winners = np.r_[True, k[1:] != k[:-1]]
        losers = perm[~winners]
        valid[vy[losers], vx[losers]] = False
        disparity[vy[losers], vx[losers]] = 0.0
        n_occluded = losers.size

    stats = ProjectionStats(n_total, n_dropped, n_overwritten, n_occluded)
    return SparseDisparityGrid(disparity, valid, t_z, stats)


def sample_sbn(stream: EventHistory, t_d: int, n: int) -> EventHistory:
    """The last ``n`` events at or before ``t_d`` (fewer if the stream is shorter)."""
    if n < 0:
        raise ValueError(f"sample size must be non-negative, got {n}")
    hi = int(np.searchsorted(stream.t, t_d, side="right"))
    lo = max(0, hi - n)
    return stream._slice(lo, hi)


def sample_sbt(stream: EventHistory, t_d: int, delta_us: int) -> EventHistory:
    """All events with t_d - delta <= t <= t_d, order preserved."""
    if delta_us < 0:
        raise ValueError(f"window length must be non-negative, got {delta_us}")
    lo = int(np.searchsorted(stream.t, t_d - delta_us, side="left"))
    hi = int(np.searchsorted(stream.t, t_d, side="right"))
    return stream._slice(lo, hi)


def conservative_range(left: EventHistory, right: EventHistory) -> tuple[int, int]:
    """Widest interval covered by either history.

    Returns (min of first timestamps, max of last timestamps) over the
    non-empty histories; raises if both are empty.
    """
    firsts = [h.t[0] for h in (left, right) if len(h)]
    lasts = [h.t[-1] for h in (left, right) if len(h)]
    if not firsts:
        raise ValueError("both histories are empty; the conservative range is undefined")
    return int(min(firsts)), int(max(lasts))


def insert_sorted(history: EventHistory, new_events) -> EventHistory:
    """Merge new events into a history, keeping time order.

    Among equal timestamps, pre-existing events come first, so injection
    never reorders sensor data. ``new_events`` may be a sequence of Event
    tuples or another EventHistory; its own order breaks ties among the
    injected events.
    """
    if isinstance(new_events, EventHistory):
        nx, ny, npol, nt = new_events.x, new_events.y, new_events.p, new_events.t
    else:
        if not new_events:
            return history
        nx, ny, npol, nt = zip(*new_events)
        nt = np.asarray(nt, dtype=np.int64)
        order = np.argsort(nt, kind="stable")
        nx = np.asarray(nx, dtype=np.int32)[order]
        ny = np.asarray(ny, dtype=np.int32)[order]
        npol = np.asarray(npol, dtype=np.int8)[order]
        nt = nt[order]
    if len(nt) == 0:
        return history
    x = np.concatenate([history.x, np.asarray(nx, dtype=np.int32)])
    y = np.concatenate([history.y, np.asarray(ny, dtype=np.int32)])
    p = np.concatenate([history.p, np.asarray(npol, dtype=np.int8)])
    t = np.concatenate([history.t, np.asarray(nt, dtype=np.int64)])
    order = np.argsort(t, kind="stable")
    return EventHistory(x[order], y[order], p[order], t[order], history.side)
