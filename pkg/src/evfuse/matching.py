"""Classical block matching on stacks, hint-guided modulation, and metrics.

The cost volume is mean absolute difference over a square window and all
channels; winner-take-all picks the per-pixel argmin. This is deliberately
simple machinery: it exists to measure how much matchable structure the
hallucination stages add, not to compete with learned stereo.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .events import SparseDisparityGrid
from .stacking import Stack

__all__ = [
    "CostVolume",
    "DisparityMap",
    "MetricsReport",
    "build_cost_volume",
    "guided_modulate",
    "wta",
    "evaluate",
]


@dataclass(frozen=True)
class CostVolume:
    """Per-pixel matching cost for each disparity hypothesis; lower is better."""

    data: np.ndarray  # (H, W, D) float64

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValueError(f"cost volume must be (H, W, D), got shape {self.data.shape}")
        if not np.isfinite(self.data).all() or self.data.min() < 0:
            raise ValueError("costs must be finite and non-negative")
        self.data.setflags(write=False)

    @property
    def d_max(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class DisparityMap:
    """Dense disparity estimate (or ground truth) with a validity mask."""

    data: np.ndarray  # (H, W) float64
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape != self.valid.shape:
            raise ValueError("disparity and validity must be equal-shaped 2-D arrays")
        self.data.setflags(write=False)
        self.valid.setflags(write=False)


@dataclass(frozen=True)
class MetricsReport:
    """Disparity error summary over one pixel mask (error rates in percent)."""

    one_pe: float
    two_pe: float
    mae: float
    n_pixels: int
    mask_label: str = "all"

    def __post_init__(self) -> None:
        if not (0.0 <= self.two_pe <= self.one_pe <= 100.0):
            raise ValueError(f"error rates out of order: 1PE={self.one_pe}, 2PE={self.two_pe}")


def build_cost_volume(s_l: Stack, s_r: Stack, d_max: int, window: int = 5) -> CostVolume:
    """Mean absolute difference between left windows and disparity-shifted right windows.

    cost(x, y, d) averages |S_L(x+wx, y+wy, c) - S_R(x+wx-d, y+wy, c)| over
    the window and all channels; out-of-bounds coordinates clamp to the
    border. Ties under the later argmin resolve toward smaller d.
    """
    if s_l.data.shape != s_r.data.shape:
        raise ValueError("stacks must have equal shape")
    if s_l.kind != s_r.kind:
        raise ValueError(f"stacks must share a representation, got {s_l.kind!r} and {s_r.kind!r}")
    if d_max < 1:
        raise ValueError(f"d_max must be >= 1, got {d_max}")
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    lhs, rhs = s_l.data, s_r.data
    h, w, _ = lhs.shape
    cols = np.arange(w)
    out = np.empty((h, w, d_max))
    for d in range(d_max):
        src = np.clip(cols - d, 0, w - 1)
        per_pixel = np.mean(np.abs(lhs - rhs[:, src, :]), axis=2)
        if window == 1:
            out[:, :, d] = per_pixel
        else:
            # The running-sum filter cancels to ~-1e-17 on constant regions.
            out[:, :, d] = np.maximum(uniform_filter(per_pixel, size=window, mode="nearest"), 0.0)
    return CostVolume(out)


def guided_modulate(vol: CostVolume, grid: SparseDisparityGrid, gain: float, width: float) -> CostVolume:
    """Attenuate costs near the hinted disparity at hinted pixels only.

    cost(x, y, d) *= 1 - gain * exp(-(d - d_hint)^2 / (2 * width^2)). With
    gain in [0, 1) costs stay positive, and gain 0 is the identity.
    """
    if not (0.0 <= gain < 1.0):
        raise ValueError(f"gain must lie in [0, 1), got {gain}")
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    h, w, d_max = vol.data.shape
    if grid.shape != (h, w):
        raise ValueError(f"hint grid shape {grid.shape} does not match volume {(h, w)}")
    out = np.array(vol.data)
    ys, xs, ds = grid.valid_cells()
    if ys.size:
        hyp = np.arange(d_max, dtype=np.float64)
        factors = 1.0 - gain * np.exp(-((hyp[None, :] - ds[:, None]) ** 2) / (2.0 * width**2))
        out[ys, xs, :] *= factors
    return CostVolume(out)


def wta(vol: CostVolume) -> DisparityMap:
    """Winner-take-all: per-pixel argmin over d, ties toward the smaller d."""
    idx = np.argmin(vol.data, axis=2)
    return DisparityMap(idx.astype(np.float64), np.ones(idx.shape, bool))


def evaluate(pred: DisparityMap, gt: DisparityMap, mask: np.ndarray | None = None, label: str = "all") -> MetricsReport:
    """Error rates of a prediction against ground truth over a pixel mask.

    The mask defaults to the ground-truth validity and must be a subset of
    it; an empty mask is an error rather than a silent zero.
    """
    if pred.data.shape != gt.data.shape:
        raise ValueError("prediction and ground truth must have equal shape")
    if mask is None:
        mask = gt.valid
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != gt.data.shape:
        raise ValueError("mask shape does not match the maps")
    if (mask & ~gt.valid).any():
        raise ValueError("mask includes pixels without valid ground truth")
    n = int(mask.sum())
    if n == 0:
        raise ValueError("empty evaluation mask")
    err = np.abs(pred.data[mask] - gt.data[mask])
    return MetricsReport(
        one_pe=float(100.0 * np.mean(err > 1.0)),
        two_pe=float(100.0 * np.mean(err > 2.0)),
        mae=float(np.mean(err)),
        n_pixels=n,
        mask_label=label,
    )
