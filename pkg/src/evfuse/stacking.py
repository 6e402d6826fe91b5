"""Dense tensor representations ("stacks") of event histories.

Every builder is a pure function of (history, rig, config, interval): equal
inputs give bit-identical float64 (H, W, C) tensors. Events outside the stack
interval are ignored, so appending events after the interval never changes a
stack. When no interval is given, the history's own covered range is used
(an empty history maps to the degenerate interval (0, 0)).

Channel layouts:

- histogram:    [count(+1), count(-1)]
- voxel:        one channel per uniform temporal bin, per-bin polarity sums;
                an event at relative time r lands in bin floor(r * B), the
                last bin closed
- mdes:         channel i covers the most recent 1/2**i of the interval, all
                sub-windows ending at the interval end; the value is the
                latest event's polarity coded {-1: 0.0, +1: 1.0}, 0.5 when
                the sub-window saw no event
- tore:         [+1 slots (most recent first), then -1 slots]; a filled slot
                holds min(max(ln(t_hi - t_k + 1), 0), ln(tau_max + 1)),
                empty slots hold 0
- timesurface:  [+1 x each tau, then -1 x each tau]; exp(-(t_hi - t_last)/tau),
                0 where the polarity never fired
- tencode:      [R, G, B]; R/B flag a latest event of polarity +1/-1 and
                G holds its interval-relative time, all zero with no event
- ergo:         channels assembled from the primitives per recipe
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .events import EventHistory, StereoRig

__all__ = [
    "REPRESENTATIONS",
    "Stack",
    "StackConfig",
    "ChannelSpec",
    "DEFAULT_ERGO_RECIPE",
    "StackRange",
    "stack_histogram",
    "stack_voxelgrid",
    "stack_mdes",
    "stack_tore",
    "stack_timesurface",
    "stack_tencode",
    "stack_ergo",
    "build_stack",
    "stack_range",
    "default_range_mode",
]

REPRESENTATIONS = ("histogram", "voxel", "mdes", "tore", "timesurface", "tencode", "ergo")


@dataclass(frozen=True)
class Stack:
    """Dense (H, W, C) float64 tensor covering a time interval."""

    data: np.ndarray
    kind: str
    interval: tuple[int, int]

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValueError(f"stack data must be (H, W, C), got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("stack values must be finite")
        self.data.setflags(write=False)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ChannelSpec:
    """One output channel of a composite stack, drawn from a primitive.

    ``source`` selects the primitive; ``channel`` the channel within it.
    ``bins`` feeds voxel bins, mdes levels, or tore queue length where
    relevant; ``tau_us`` feeds the time-surface decay. The special source
    "timesurface-any" collapses polarities into one decay channel.
    """

    source: str
    channel: int = 0
    bins: int = 0
    tau_us: int = 0


DEFAULT_ERGO_RECIPE: tuple[ChannelSpec, ...] = (
    ChannelSpec("histogram", channel=0),
    ChannelSpec("histogram", channel=1),
    ChannelSpec("voxel", bins=4, channel=0),
    ChannelSpec("voxel", bins=4, channel=1),
    ChannelSpec("voxel", bins=4, channel=2),
    ChannelSpec("voxel", bins=4, channel=3),
    ChannelSpec("timesurface-any", tau_us=10_000),
    ChannelSpec("timesurface-any", tau_us=100_000),
    ChannelSpec("mdes", bins=3, channel=0),
    ChannelSpec("mdes", bins=3, channel=1),
    ChannelSpec("mdes", bins=3, channel=2),
    ChannelSpec("tencode", channel=1),
)


@dataclass(frozen=True)
class StackConfig:
    """Shared knobs for the stack builders."""

    voxel_bins: int = 4
    mdes_levels: int = 4
    tore_queue: int = 2
    tore_tau_max_us: int = 1_000_000
    ts_taus_us: tuple[int, ...] = (10_000, 100_000)
    ergo_recipe: tuple[ChannelSpec, ...] = field(default=DEFAULT_ERGO_RECIPE)

    def __post_init__(self) -> None:
        if self.voxel_bins < 1:
            raise ValueError(f"voxel bins must be >= 1, got {self.voxel_bins}")
        if self.mdes_levels < 1:
            raise ValueError(f"mdes levels must be >= 1, got {self.mdes_levels}")
        if self.tore_queue < 1:
            raise ValueError(f"tore queue must be >= 1, got {self.tore_queue}")
        if self.tore_tau_max_us < 1:
            raise ValueError(f"tore tau_max must be >= 1 us, got {self.tore_tau_max_us}")
        if not self.ts_taus_us or any(tau < 1 for tau in self.ts_taus_us):
            raise ValueError(f"time-surface taus must be positive, got {self.ts_taus_us}")


class StackRange(NamedTuple):
    """Value range used to draw injection patterns."""

    lo: float
    hi: float
    widened: bool


def _resolve_interval(history: EventHistory, interval) -> tuple[int, int]:
    if interval is None:
        return history.range if len(history) else (0, 0)
    lo, hi = int(interval[0]), int(interval[1])
    if hi < lo:
        raise ValueError(f"interval end precedes start: ({lo}, {hi})")
    return lo, hi


def _events_in(history: EventHistory, rig: StereoRig, lo: int, hi: int):
    """Arrays of the events inside [lo, hi], bounds-checked against the grid."""
    if len(history):
        x, y = history.x, history.y
        if x.min() < 0 or int(x.max()) >= rig.width or y.min() < 0 or int(y.max()) >= rig.height:
            raise ValueError("event outside the sensor grid")
    a = int(np.searchsorted(history.t, lo, side="left"))
    b = int(np.searchsorted(history.t, hi, side="right"))
    sl = slice(a, b)
    return history.x[sl], history.y[sl], history.p[sl], history.t[sl]


def _latest_per_pixel(x, y, p, t, width: int):
    """Latest event per pixel; among equal timestamps the earliest entry wins.

    Events merged into a stream sort behind simultaneous originals, so the
    first-entry rule keeps them from displacing what the pixel already saw.
    Returns (lin, p_last, t_last) for pixels that saw at least one event.
    """
    lin = y.astype(np.int64) * width + x
    perm = np.lexsort((-np.arange(lin.size), t, lin))
    k = lin[perm]
    last = np.r_[k[1:] != k[:-1], True] if k.size else np.zeros(0, bool)
    sel = perm[last]
    return lin[sel], p[sel], t[sel]


def stack_histogram(history: EventHistory, rig: StereoRig, interval=None) -> Stack:
    """Per-pixel event counts, one channel per polarity."""
    lo, hi = _resolve_interval(history, interval)
    x, y, p, _ = _events_in(history, rig, lo, hi)
    h, w = rig.height, rig.width
    data = np.zeros((h, w, 2))
    for ci, pol in enumerate((1, -1)):
        m = p == pol
        counts = np.bincount(y[m].astype(np.int64) * w + x[m], minlength=h * w)
        data[:, :, ci] = counts.reshape(h, w)
    return Stack(data, "histogram", (lo, hi))


def stack_voxelgrid(history: EventHistory, rig: StereoRig, cfg: StackConfig = StackConfig(), interval=None) -> Stack:
    """Per-bin polarity sums over uniform temporal bins (hard bin assignment)."""
    lo, hi = _resolve_interval(history, interval)
    x, y, p, t = _events_in(history, rig, lo, hi)
    h, w, nb = rig.height, rig.width, cfg.voxel_bins
    span = hi - lo
    if span <= 0:
        b = np.zeros(t.size, dtype=np.int64)
    else:
        b = np.minimum((t - lo) * nb // span, nb - 1)
    flat = b * (h * w) + y.astype(np.int64) * w + x
    # bincount returns int64 when the input is empty, regardless of weights.
    sums = np.bincount(flat, weights=p.astype(np.float64), minlength=nb * h * w).astype(np.float64)
    data = sums.reshape(nb, h, w).transpose(1, 2, 0)
    return Stack(np.ascontiguousarray(data), "voxel", (lo, hi))


def stack_mdes(history: EventHistory, rig: StereoRig, cfg: StackConfig = StackConfig(), interval=None) -> Stack:
    """Nested suffix sub-windows with the latest event's polarity coded as 0/1."""
    lo, hi = _resolve_interval(history, interval)
    x, y, p, t = _events_in(history, rig, lo, hi)
    h, w, levels = rig.height, rig.width, cfg.mdes_levels
    span = hi - lo
    data = np.full((h, w, levels), 0.5)
    for i in range(levels):
        w_lo = hi - span / (2.0**i)
        m = t >= w_lo
        lin, p_last, _ = _latest_per_pixel(x[m], y[m], p[m], t[m], w)
        ch = data[:, :, i].reshape(-1)
        ch[lin] = (p_last.astype(np.float64) + 1.0) / 2.0
        data[:, :, i] = ch.reshape(h, w)
    return Stack(data, "mdes", (lo, hi))


def stack_tore(history: EventHistory, rig: StereoRig, cfg: StackConfig = StackConfig(), interval=None) -> Stack:
    """Per-pixel, per-polarity queues of log-compressed event ages."""
    lo, hi = _resolve_interval(history, interval)
    x, y, p, t = _events_in(history, rig, lo, hi)
    h, w, q = rig.height, rig.width, cfg.tore_queue
    cap = math.log(cfg.tore_tau_max_us + 1.0)
    data = np.zeros((h, w, 2 * q))
    for ci, pol in enumerate((1, -1)):
        m = p == pol
        if not m.any():
            continue
        lin = y[m].astype(np.int64) * w + x[m]
        tm = t[m]
        perm = np.lexsort((np.arange(lin.size), lin))
        k = lin[perm]
        starts = np.r_[True, k[1:] != k[:-1]]
        run_id = np.cumsum(starts) - 1
        counts = np.bincount(run_id)
        run_start = np.cumsum(counts) - counts
        pos = np.arange(k.size) - run_start[run_id]
        from_end = counts[run_id] - 1 - pos
        sel = from_end < q
        ages = (hi - tm[perm][sel]).astype(np.float64)
        vals = np.clip(np.log(ages + 1.0), 0.0, cap)
        chan = ci * q + from_end[sel]
        data.reshape(-1, 2 * q)[k[sel], chan] = vals
    return Stack(data, "tore", (lo, hi))


def stack_timesurface(history: EventHistory, rig: StereoRig, cfg: StackConfig = StackConfig(), interval=None) -> Stack:
    """Exponentially decayed age of the latest event, per polarity and tau."""
    lo, hi = _resolve_interval(history, interval)
    x, y, p, t = _events_in(history, rig, lo, hi)
    h, w = rig.height, rig.width
    taus = cfg.ts_taus_us
    s = len(taus)
    data = np.zeros((h, w, 2 * s))
    for ci, pol in enumerate((1, -1)):
        m = p == pol
        lin, _, t_last = _latest_per_pixel(x[m], y[m], p[m], t[m], w)
        if not lin.size:
            continue
        age = (hi - t_last).astype(np.float64)
        for si, tau in enumerate(taus):
            ch = data[:, :, ci * s + si].reshape(-1)
            ch[lin] = np.exp(-age / float(tau))
            data[:, :, ci * s + si] = ch.reshape(h, w)
    return Stack(data, "timesurface", (lo, hi))


def _timesurface_any(history: EventHistory, rig: StereoRig, tau_us: int, interval=None) -> np.ndarray:
    """Single polarity-collapsed decay channel (used by composite recipes)."""
    lo, hi = _resolve_interval(history, interval)
    x, y, p, t = _events_in(history, rig, lo, hi)
    h, w = rig.height, rig.width
    out = np.zeros(h * w)
    lin, _, t_last = _latest_per_pixel(x, y, p, t, w)
    if lin.size:
        out[lin] = np.exp(-(hi - t_last).astype(np.float64) / float(tau_us))
    return out.reshape(h, w)


def stack_tencode(history: EventHistory, rig: StereoRig, interval=None) -> Stack:
    """Three channels: latest polarity flags (R, B) and its relative time (G)."""
    lo, hi = _resolve_interval(history, interval)
    x, y, p, t = _events_in(history, rig, lo, hi)
    h, w = rig.height, rig.width
    span = hi - lo
    data = np.zeros((h, w, 3))
    lin, p_last, t_last = _latest_per_pixel(x, y, p, t, w)
    if lin.size:
        flat = data.reshape(-1, 3)
        flat[lin[p_last == 1], 0] = 1.0
        flat[lin[p_last == -1], 2] = 1.0
        if span > 0:
            g = (t_last - lo).astype(np.float64) / float(span)
        else:
            g = np.ones(lin.size)
        flat[lin, 1] = g
        data = flat.reshape(h, w, 3)
    return Stack(data, "tencode", (lo, hi))


def stack_ergo(history: EventHistory, rig: StereoRig, cfg: StackConfig = StackConfig(), interval=None) -> Stack:
    """Twelve channels assembled from the primitive representations.

    The recipe is configuration (see ``StackConfig.ergo_recipe``); each entry
    must reproduce the corresponding primitive channel exactly.
    """
    recipe = cfg.ergo_recipe
    if len(recipe) != 12:
        raise ValueError(f"composite recipe must list exactly 12 channels, got {len(recipe)}")
    lo, hi = _resolve_interval(history, interval)
    h, w = rig.height, rig.width
    data = np.zeros((h, w, 12))
    cache: dict[tuple, np.ndarray] = {}

    def primitive(spec: ChannelSpec) -> np.ndarray:
        key = (spec.source, spec.bins, spec.tau_us)
        if key not in cache:
            if spec.source == "histogram":
                s = stack_histogram(history, rig, (lo, hi)).data
            elif spec.source == "voxel":
                s = stack_voxelgrid(history, rig, StackConfig(voxel_bins=spec.bins), (lo, hi)).data
            elif spec.source == "mdes":
                s = stack_mdes(history, rig, StackConfig(mdes_levels=spec.bins), (lo, hi)).data
            elif spec.source == "tore":
                s = stack_tore(history, rig, StackConfig(tore_queue=spec.bins, tore_tau_max_us=cfg.tore_tau_max_us), (lo, hi)).data
            elif spec.source == "timesurface":
                s = stack_timesurface(history, rig, StackConfig(ts_taus_us=(spec.tau_us,)), (lo, hi)).data
            elif spec.source == "timesurface-any":
                s = _timesurface_any(history, rig, spec.tau_us, (lo, hi))[:, :, None]
            elif spec.source == "tencode":
                s = stack_tencode(history, rig, (lo, hi)).data
            else:
                raise ValueError(f"unknown channel source {spec.source!r}")
            cache[key] = s
        return cache[key]

    for i, spec in enumerate(recipe):
        src = primitive(spec)
        if not (0 <= spec.channel < src.shape[2]):
            raise ValueError(f"channel {spec.channel} out of range for source {spec.source!r}")
        data[:, :, i] = src[:, :, spec.channel]
    return Stack(data, "ergo", (lo, hi))


_BUILDERS: dict[str, Callable] = {
    "histogram": lambda h, r, c, iv: stack_histogram(h, r, iv),
    "voxel": lambda h, r, c, iv: stack_voxelgrid(h, r, c, iv),
    "mdes": lambda h, r, c, iv: stack_mdes(h, r, c, iv),
    "tore": lambda h, r, c, iv: stack_tore(h, r, c, iv),
    "timesurface": lambda h, r, c, iv: stack_timesurface(h, r, c, iv),
    "tencode": lambda h, r, c, iv: stack_tencode(h, r, iv),
    "ergo": lambda h, r, c, iv: stack_ergo(h, r, c, iv),
}


def build_stack(
    name: str,
    history: EventHistory,
    rig: StereoRig,
    cfg: StackConfig = StackConfig(),
    interval=None,
) -> Stack:
    """Build the named representation (see ``REPRESENTATIONS``)."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown representation {name!r}") from None
    return builder(history, rig, cfg, interval)


def default_range_mode(kind: str) -> str:
    """Shipped pattern-range policy: percentile bounds for voxel grids, min/max otherwise."""
    return "percentile" if kind == "voxel" else "minmax"


def _nearest_rank(values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile: the value at sorted index floor(p * n / 100)."""
    n = values.size
    idx = min(int(math.floor(pct * n / 100.0)), n - 1)
    return float(np.partition(values, idx)[idx])


def stack_range(
    s_l: Stack,
    s_r: Stack,
    mode: str = "minmax",
    percentiles: tuple[float, float] = (5.0, 95.0),
) -> StackRange:
    """Value range over both stacks for pattern draws.

    ``minmax`` takes the global extremes; ``percentile`` the nearest-rank
    percentiles of the pooled values. A degenerate range (constant stacks)
    widens to (lo, lo + 1) and sets the ``widened`` flag.
    """
    if mode not in ("minmax", "percentile"):
        raise ValueError(f"unknown range mode {mode!r}")
    if s_l.data.shape != s_r.data.shape:
        raise ValueError("stacks must have equal shape")
    if mode == "minmax":
        lo = float(min(s_l.data.min(), s_r.data.min()))
        hi = float(max(s_l.data.max(), s_r.data.max()))
    else:
        p_lo, p_hi = percentiles
        if not (0.0 <= p_lo <= p_hi <= 100.0):
            raise ValueError(f"percentiles must satisfy 0 <= lo <= hi <= 100, got {percentiles}")
        pooled = np.concatenate([s_l.data.reshape(-1), s_r.data.reshape(-1)])
        lo = _nearest_rank(pooled, p_lo)
        hi = _nearest_rank(pooled, p_hi)
    if lo == hi:
        return StackRange(lo, lo + 1.0, True)
    return StackRange(lo, hi, False)
