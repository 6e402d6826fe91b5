"""Stream-level hallucination: insert fictitious event pairs into raw histories.

Each hinted left pixel (x, y, d) yields pairs of identical events at
(x + dx, y + dy) in the left stream and (round(x - d) + dx, y + dy) in the
right stream, sharing polarity and timestamp, so any downstream stack built
from the two streams shows matchable structure at the hinted disparity.
Timestamps either sit at a single instant or spread over fixed sub-interval
endpoints of the conservative time range (repeated mode), each hint feeding
exactly one of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .events import (
    DepthMeasurement,
    EventHistory,
    SparseDisparityGrid,
    StereoRig,
    conservative_range,
    insert_sorted,
    project_to_grid,
    round_half_away,
)

__all__ = ["BthConfig", "bin_timestamp", "bth_single", "bth_repeated", "bth_with_offset"]


@dataclass(frozen=True)
class BthConfig:
    """Knobs for stream-level event injection.

    Polarity draw granularity: one draw per hinted cell when
    ``uniform_polarity`` is on; otherwise one per insertion round when
    ``uniform_patch`` is on (the whole patch stamps the same polarity);
    otherwise one per event. ``bins`` only matters in repeated mode;
    ``uniform_slots`` switches the slot draw to an exactly uniform integer
    in place of the rounded affine draw, whose endpoint slots are half as
    likely.
    """

    k: int = 2
    patch: int = 3
    uniform_patch: bool = True
    uniform_polarity: bool = True
    mode: str = "repeated"
    bins: int = 12
    uniform_slots: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"events per hint must be >= 1, got {self.k}")
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError(f"patch must be odd and >= 1, got {self.patch}")
        if self.mode not in ("single", "repeated"):
            raise ValueError(f"mode must be 'single' or 'repeated', got {self.mode!r}")
        if self.bins < 1:
            raise ValueError(f"bins must be >= 1, got {self.bins}")


def bin_timestamp(b: int, t_lo: int, t_hi: int) -> int:
    """Timestamp of insertion bin ``b``: t_lo + ((2**b - 1) / 2**b) * (t_hi - t_lo).

    Bin 1 is the interval midpoint and successive bins halve the remaining
    gap toward t_hi. The result rounds to integer microseconds (halves away
    from zero) and is non-decreasing in ``b``.
    """
    if b < 1:
        raise ValueError(f"bin index must be >= 1, got {b}")
    t_lo, t_hi = int(t_lo), int(t_hi)
    if t_hi < t_lo:
        raise ValueError(f"interval end precedes start: ({t_lo}, {t_hi})")
    frac = 1.0 - 0.5**b
    return t_lo + round_half_away(frac * (t_hi - t_lo))


def _inject(
    left: EventHistory,
    right: EventHistory,
    shape: tuple[int, int],
    ys: np.ndarray,
    xs: np.ndarray,
    ds: np.ndarray,
    t_hats: np.ndarray,
    cfg: BthConfig,
    rng: np.random.Generator,
) -> tuple[EventHistory, EventHistory]:
    """Insert k event pairs per hinted cell and patch offset.

    Offsets whose left or right column leaves the grid are skipped on both
    sides, keeping the injections perfectly mirrored. Generation order is
    row-major cells, then patch offsets, then the k rounds; a stable merge
    keeps pre-existing events ahead of injected ones at equal timestamps.
    """
    h, w = shape
    n, k = ys.size, cfg.k
    r = cfg.patch // 2
    dys, dxs = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    dys, dxs = dys.reshape(-1), dxs.reshape(-1)
    n_off = dys.size

    if cfg.uniform_polarity:
        pol = rng.integers(0, 2, (n, 1, 1)) * 2 - 1
    elif cfg.uniform_patch:
        pol = rng.integers(0, 2, (n, 1, k)) * 2 - 1
    else:
        pol = rng.integers(0, 2, (n, n_off, k)) * 2 - 1
    pol = np.broadcast_to(pol, (n, n_off, k))

    xr = round_half_away(xs - ds)
    ly = ys[:, None] + dys[None, :]
    lx = xs[:, None] + dxs[None, :]
    rx = xr[:, None] + dxs[None, :]
    ok = (ly >= 0) & (ly < h) & (lx >= 0) & (lx < w) & (rx >= 0) & (rx < w)
    m = np.broadcast_to(ok[:, :, None], (n, n_off, k))

    ev_y = np.broadcast_to(ly[:, :, None], (n, n_off, k))[m]
    ev_lx = np.broadcast_to(lx[:, :, None], (n, n_off, k))[m]
    ev_rx = np.broadcast_to(rx[:, :, None], (n, n_off, k))[m]
    ev_p = pol[m]
    ev_t = np.broadcast_to(t_hats[:, None, None], (n, n_off, k))[m]

    new_left = insert_sorted(left, EventHistory.from_unsorted(ev_lx, ev_y, ev_p, ev_t, left.side))
    new_right = insert_sorted(right, EventHistory.from_unsorted(ev_rx, ev_y, ev_p, ev_t, right.side))
    return new_left, new_right


def bth_single(
    left: EventHistory,
    right: EventHistory,
    grid: SparseDisparityGrid,
    t_hat: int,
    cfg: BthConfig = BthConfig(),
) -> tuple[EventHistory, EventHistory]:
    """Insert all fictitious pairs at one timestamp.

    ``t_hat`` must lie inside the conservative range of the two histories so
    the insertion lands inside the sampled window. An empty grid returns the
    inputs unchanged.
    """
    if grid.n_valid == 0:
        return left, right
    lo, hi = conservative_range(left, right)
    if not (lo <= t_hat <= hi):
        raise ValueError(f"t_hat {t_hat} outside the conservative range [{lo}, {hi}]")
    ys, xs, ds = grid.valid_cells()
    t_hats = np.full(ys.size, int(t_hat), dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    return _inject(left, right, grid.shape, ys, xs, ds, t_hats, cfg, rng)


def bth_repeated(
    left: EventHistory,
    right: EventHistory,
    grid: SparseDisparityGrid,
    cfg: BthConfig = BthConfig(),
) -> tuple[EventHistory, EventHistory]:
    """Spread insertions over the fixed bin timestamps of the conservative range.

    Every hinted cell draws one slot D and injects its k events per patch
    offset at bin_timestamp(D) only, so each depth measurement is used
    exactly once. Slot draws happen first (row-major cell order), then
    polarity draws, from the same seeded generator. With one bin this
    coincides with single-timestamp insertion at the interval midpoint.
    """
    if grid.n_valid == 0:
        return left, right
    lo, hi = conservative_range(left, right)
    ys, xs, ds = grid.valid_cells()
    rng = np.random.default_rng(cfg.seed)
    if cfg.bins == 1:
        # One bin forces slot 1; skipping the draw keeps the generator
        # aligned with the single-timestamp path for bit-equal outputs.
        slots = np.ones(ys.size, dtype=np.int64)
    elif cfg.uniform_slots:
        slots = rng.integers(1, cfg.bins + 1, ys.size)
    else:
        u = rng.uniform(0.0, 1.0, ys.size)
        slots = round_half_away(u * (cfg.bins - 1) + 1)
    table = np.array([bin_timestamp(b, lo, hi) for b in range(1, cfg.bins + 1)], dtype=np.int64)
    t_hats = table[np.asarray(slots, dtype=np.int64) - 1]
    return _inject(left, right, grid.shape, ys, xs, ds, t_hats, cfg, rng)


def bth_with_offset(
    left: EventHistory,
    right: EventHistory,
    measurements: Sequence[DepthMeasurement],
    t_d: int,
    rig: StereoRig,
    cfg: BthConfig = BthConfig(),
) -> tuple[EventHistory, EventHistory]:
    """Inject a depth scan acquired at t_z <= t_d, as-is (no motion compensation).

    Measurements project onto the hint grid with occluded points discarded.
    Single mode inserts at the scan time clamped into the conservative range;
    repeated mode spreads over the bin timestamps as usual.
    """
    if not measurements:
        return left, right
    t_z = max(m.t_z for m in measurements)
    if t_z > t_d:
        raise ValueError(f"depth scan at {t_z} is newer than the query timestamp {t_d}")
    grid = project_to_grid(rig, measurements, policy="discard-occluded")
    if cfg.mode == "single":
        lo, hi = conservative_range(left, right)
        t_hat = min(max(t_z, lo), hi)
        return bth_single(left, right, grid, t_hat, cfg)
    return bth_repeated(left, right, grid, cfg)
