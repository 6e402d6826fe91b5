"""Stack-level hallucination: paint one shared random pattern into both views.

For every hinted left pixel (x, y) with disparity d, the same randomly drawn
patch is alpha-blended into the left stack around (x, y) and into the right
stack around (round(x - d), y), making the two views trivially matchable at
the hinted disparity regardless of scene texture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import SparseDisparityGrid, round_half_away
from .stacking import Stack, default_range_mode, stack_range

__all__ = ["VshConfig", "vsh_inject"]


@dataclass(frozen=True)
class VshConfig:
    """Knobs for stack-level pattern injection.

    ``uniform_patch`` draws one value per (cell, channel) shared across the
    whole patch; otherwise each patch offset draws its own value.
    ``per_channel`` draws independently per channel; switching it off shares
    one draw across all channels. ``range_mode`` "auto" resolves per
    representation (percentile bounds for voxel grids, min/max otherwise).
    """

    patch: int = 3
    uniform_patch: bool = True
    alpha: float = 0.5
    range_mode: str = "auto"
    percentiles: tuple[float, float] = (5.0, 95.0)
    per_channel: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError(f"patch must be odd and >= 1, got {self.patch}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.range_mode not in ("auto", "minmax", "percentile"):
            raise ValueError(f"unknown range mode {self.range_mode!r}")


def _resolve_writes(pix: np.ndarray, order_key: np.ndarray) -> np.ndarray:
    """Indices of the surviving write per pixel (largest order key wins)."""
    perm = np.lexsort((order_key, pix))
    k = pix[perm]
    last = np.r_[k[1:] != k[:-1], True]
    return perm[last]


def vsh_inject(
    s_l: Stack,
    s_r: Stack,
    grid: SparseDisparityGrid,
    cfg: VshConfig = VshConfig(),
) -> tuple[Stack, Stack]:
    """Blend shared random patches into both stacks at the hinted geometry.

    Cells whose right target column round(x - d) leaves the grid are skipped
    entirely. A patch offset is written only where both its left and right
    columns stay inside the grid, keeping the two injections mirrored; rows
    clip symmetrically by construction. Overlapping patches resolve
    last-writer-wins in row-major grid-cell order, and the blend
    alpha * A + (1 - alpha) * S always reads the input stacks.

    Pattern values come from ``numpy.random.default_rng(cfg.seed)``: one
    uniform block per surviving cell, drawn in row-major cell order, with
    shape (cells, channels) under ``uniform_patch`` and
    (cells, patch_offsets, channels) otherwise (trailing channel axis of
    size 1 when ``per_channel`` is off). Draws for border-clipped offsets are
    discarded, so locations never depend on the seed.
    """
    if s_l.data.shape != s_r.data.shape:
        raise ValueError("stacks must have equal shape")
    if s_l.kind != s_r.kind:
        raise ValueError(f"stacks must share a representation, got {s_l.kind!r} and {s_r.kind!r}")
    h, w, c = s_l.data.shape
    if grid.shape != (h, w):
        raise ValueError(f"hint grid shape {grid.shape} does not match stacks {(h, w)}")

    if cfg.alpha == 0.0:
        return s_l, s_r

    mode = cfg.range_mode if cfg.range_mode != "auto" else default_range_mode(s_l.kind)
    lo, hi, _ = stack_range(s_l, s_r, mode, cfg.percentiles)

    ys, xs, ds = grid.valid_cells()
    xr = round_half_away(xs - ds)
    keep = (xr >= 0) & (xr < w)
    ys, xs, xr = ys[keep], xs[keep], xr[keep]
    n = ys.size

    out_l = np.array(s_l.data)
    out_r = np.array(s_r.data)
    if n:
        r = cfg.patch // 2
        offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
        n_off = len(offsets)
        cdim = c if cfg.per_channel else 1
        rng = np.random.default_rng(cfg.seed)
        if cfg.uniform_patch:
            draws = rng.uniform(lo, hi, (n, 1, cdim))
        else:
            draws = rng.uniform(lo, hi, (n, n_off, cdim))
        pattern = np.broadcast_to(draws, (n, n_off, cdim))

        l_pix, r_pix, cell_idx, off_idx = [], [], [], []
        for j, (dy, dx) in enumerate(offsets):
            ly = ys + dy
            lx = xs + dx
            rx = xr + dx
            m = (ly >= 0) & (ly < h) & (lx >= 0) & (lx < w) & (rx >= 0) & (rx < w)
            cells = np.nonzero(m)[0]
            l_pix.append(ly[m] * w + lx[m])
            r_pix.append(ly[m] * w + rx[m])
            cell_idx.append(cells)
            off_idx.append(np.full(cells.size, j, dtype=np.int64))
        l_pix = np.concatenate(l_pix)
        r_pix = np.concatenate(r_pix)
        cell_idx = np.concatenate(cell_idx)
        off_idx = np.concatenate(off_idx)
        order_key = cell_idx * n_off + off_idx

        a = cfg.alpha
        for out, base, pix in ((out_l, s_l.data, l_pix), (out_r, s_r.data, r_pix)):
            win = _resolve_writes(pix, order_key)
            rows, cols = pix[win] // w, pix[win] % w
            vals = pattern[cell_idx[win], off_idx[win], :]
            out[rows, cols, :] = a * vals + (1.0 - a) * base[rows, cols, :]

    return (
        Stack(out_l, s_l.kind, s_l.interval),
        Stack(out_r, s_r.kind, s_r.interval),
    )
