"""Seeded synthetic scenes: moving dot planes, event emission, simulated depth scans.

A scene is a stack of fronto-parallel planes at integer disparities: one
full-frame background plus smaller rectangles, all textured with random dots
and all translating horizontally at a common velocity. Each surface carries a
contiguous textureless strip that produces no events yet has valid ground
truth, which is exactly where plain matching starves. Both camera views
render the same surfaces shifted by their disparity, and a pixel emits an
event whenever its accumulated log-intensity change crosses the contrast
threshold. Everything derives deterministically from ``SceneSpec.seed``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import DepthMeasurement, EventHistory, StereoRig
from .matching import DisparityMap

__all__ = [
    "SceneSpec",
    "SceneModel",
    "SyntheticScene",
    "synth_scene",
    "lidar_sample",
    "LIDAR_LINE_PRESETS",
]

US_PER_S = 1_000_000

# Line counts mirroring common spinning-scanner configurations.
LIDAR_LINE_PRESETS = {"16-line": 16, "64-line": 64}


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic scene; the first plane is the background."""

    width: int = 96
    height: int = 96
    plane_disparities: tuple[int, ...] = (4, 16)
    textureless_fraction: float = 0.4
    dot_density: float = 0.12
    velocity_px_s: float = 97.0
    duration_us: int = 200_000
    contrast: float = 0.6
    seed: int = 7

    def __post_init__(self) -> None:
        if self.width < 8 or self.height < 8:
            raise ValueError(f"scene must be at least 8x8, got {self.width}x{self.height}")
        if not self.plane_disparities:
            raise ValueError("at least one plane (the background) is required")
        if any(d < 0 or d != int(d) for d in self.plane_disparities):
            raise ValueError(f"plane disparities must be non-negative integers, got {self.plane_disparities}")
        if not (0.0 <= self.textureless_fraction <= 1.0):
            raise ValueError(f"textureless fraction must lie in [0, 1], got {self.textureless_fraction}")
        if not (0.0 < self.dot_density <= 1.0):
            raise ValueError(f"dot density must lie in (0, 1], got {self.dot_density}")
        if self.velocity_px_s < 0:
            raise ValueError(f"velocity must be non-negative, got {self.velocity_px_s}")
        if self.duration_us < 0:
            raise ValueError(f"duration must be non-negative, got {self.duration_us}")
        if self.contrast <= 0:
            raise ValueError(f"contrast threshold must be positive, got {self.contrast}")


@dataclass(frozen=True)
class _Surface:
    d: int
    x0: int
    y0: int
    texture: np.ndarray  # (h, w) float64 log-intensity
    textureless: np.ndarray  # (h, w) bool


class SceneModel:
    """Scene state queryable at any timestamp; motion is rewindable."""

    def __init__(self, spec: SceneSpec, surfaces: list[_Surface]) -> None:
        self.spec = spec
        # Painted in ascending disparity so the nearest surface lands on top.
        self._surfaces = sorted(surfaces, key=lambda s: s.d)

    def shift_at(self, t_us: int) -> int:
        """Horizontal translation in whole pixels accumulated by time t."""
        return int(np.floor(self.spec.velocity_px_s * t_us / US_PER_S))

    def _footprints(self, t_us: int, view: str):
        if view not in ("left", "right"):
            raise ValueError(f"view must be 'left' or 'right', got {view!r}")
        w, h = self.spec.width, self.spec.height
        shift = self.shift_at(t_us)
        for s in self._surfaces:
            x0v = s.x0 + shift - (s.d if view == "right" else 0)
            c0, c1 = max(0, x0v), min(w, x0v + s.texture.shape[1])
            r0, r1 = max(0, s.y0), min(h, s.y0 + s.texture.shape[0])
            if c1 <= c0 or r1 <= r0:
                continue
            yield s, (r0, r1, c0, c1), (r0 - s.y0, r1 - s.y0, c0 - x0v, c1 - x0v)

    def render(self, t_us: int, view: str = "left") -> np.ndarray:
        """Log-intensity image of one view at time t."""
        img = np.zeros((self.spec.height, self.spec.width))
        for s, (r0, r1, c0, c1), (tr0, tr1, tc0, tc1) in self._footprints(t_us, view):
            img[r0:r1, c0:c1] = s.texture[tr0:tr1, tc0:tc1]
        return img

    def disparity_at(self, t_us: int) -> np.ndarray:
        """Ground-truth disparity of the left view at time t."""
        out = np.zeros((self.spec.height, self.spec.width))
        for s, (r0, r1, c0, c1), _ in self._footprints(t_us, "left"):
            out[r0:r1, c0:c1] = float(s.d)
        return out

    def textureless_at(self, t_us: int) -> np.ndarray:
        """Mask of left-view pixels showing a textureless surface strip at time t."""
        out = np.zeros((self.spec.height, self.spec.width), bool)
        for s, (r0, r1, c0, c1), (tr0, tr1, tc0, tc1) in self._footprints(t_us, "left"):
            out[r0:r1, c0:c1] = s.textureless[tr0:tr1, tc0:tc1]
        return out

    def depth_at(self, t_us: int, rig: StereoRig) -> np.ndarray:
        """Metric depth of the left view at time t (infinite at zero disparity)."""
        d = self.disparity_at(t_us)
        with np.errstate(divide="ignore"):
            return np.where(d > 0, rig.baseline_m * rig.focal_px / np.maximum(d, 1e-12), np.inf)


@dataclass(frozen=True)
class SyntheticScene:
    """Rendered event streams plus the queryable scene they came from."""

    left: EventHistory
    right: EventHistory
    gt: DisparityMap
    model: SceneModel
    textureless: np.ndarray

    @property
    def t_d(self) -> int:
        return self.model.spec.duration_us


def _dot_texture(rng: np.random.Generator, h: int, w: int, density: float, strip: slice) -> tuple[np.ndarray, np.ndarray]:
    tex = (rng.random((h, w)) < density).astype(np.float64)
    mask = np.zeros((h, w), bool)
    tex[:, strip] = 0.0
    mask[:, strip] = True
    return tex, mask


def _build_surfaces(spec: SceneSpec, rng: np.random.Generator) -> list[_Surface]:
    w, h = spec.width, spec.height
    total_shift = int(np.floor(spec.velocity_px_s * spec.duration_us / US_PER_S))
    d_bg, rects = spec.plane_disparities[0], spec.plane_disparities[1:]
    margin = total_shift + max(spec.plane_disparities) + 2

    surfaces = []
    # Background: wide enough to cover both views at every shift.
    bg_w = w + 2 * margin
    if spec.textureless_fraction >= 1.0:
        strip = slice(0, bg_w)
    else:
        # Center the strip in the window that stays visible at every shift,
        # so the rendered textureless share tracks the requested fraction.
        ws = int(round(spec.textureless_fraction * w))
        stable_w = max(1, w - total_shift)
        strip_start = margin + max(0, (stable_w - ws) // 2)
        strip = slice(strip_start, strip_start + ws)
    tex, mask = _dot_texture(rng, h, bg_w, spec.dot_density, strip)
    surfaces.append(_Surface(d_bg, -margin, 0, tex, mask))

    rw, rh = max(4, w // 3), max(4, h // 3)
    for d in rects:
        x_lo, x_hi = d, w - rw - total_shift
        if x_hi < x_lo:
            raise ValueError(
                f"scene too small for a plane at disparity {d} moving {total_shift} px; "
                f"grow the grid or slow the motion"
            )
        x0 = int(rng.integers(x_lo, x_hi + 1))
        y0 = int(rng.integers(0, h - rh + 1))
        ws_r = int(round(spec.textureless_fraction * rw))
        tex, mask = _dot_texture(rng, rh, rw, spec.dot_density, slice(0, ws_r))
        surfaces.append(_Surface(d, x0, y0, tex, mask))
    return surfaces


def _emit_events(model: SceneModel, view: str, side: str) -> EventHistory:
    """Integrate log-intensity changes frame by frame and threshold them.

    Frames land exactly where the whole-pixel shift increments; each crossing
    of the contrast threshold emits one event and leaves the residual in the
    accumulator.
    """
    spec = model.spec
    total_shift = model.shift_at(spec.duration_us)
    if total_shift == 0:
        return EventHistory.empty(side)
    xs_all, ys_all, ps_all, ts_all = [], [], [], []
    acc = np.zeros((spec.height, spec.width))
    prev = model.render(0, view)
    for k in range(1, total_shift + 1):
        t_k = int(np.ceil(k * US_PER_S / spec.velocity_px_s))
        cur = model.render(t_k, view)
        acc += cur - prev
        prev = cur
        n_ev = np.floor(np.abs(acc) / spec.contrast).astype(np.int64)
        fired = n_ev > 0
        if not fired.any():
            continue
        ys, xs = np.nonzero(fired)
        counts = n_ev[ys, xs]
        sign = np.sign(acc[ys, xs])
        acc[ys, xs] -= counts * spec.contrast * sign
        xs_all.append(np.repeat(xs, counts))
        ys_all.append(np.repeat(ys, counts))
        ps_all.append(np.repeat(sign.astype(np.int8), counts))
        ts_all.append(np.full(int(counts.sum()), t_k, dtype=np.int64))
    if not xs_all:
        return EventHistory.empty(side)
    return EventHistory(
        np.concatenate(xs_all),
        np.concatenate(ys_all),
        np.concatenate(ps_all),
        np.concatenate(ts_all),
        side,
    )


def synth_scene(spec: SceneSpec = SceneSpec()) -> SyntheticScene:
    """Generate a seeded scene: event streams, ground truth, and the model."""
    rng = np.random.default_rng(spec.seed)
    model = SceneModel(spec, _build_surfaces(spec, rng))
    left = _emit_events(model, "left", "left")
    right = _emit_events(model, "right", "right")
    gt = DisparityMap(model.disparity_at(spec.duration_us), np.ones((spec.height, spec.width), bool))
    return SyntheticScene(left, right, gt, model, model.textureless_at(spec.duration_us))


def lidar_sample(
    model: SceneModel,
    rig: StereoRig,
    lines: int,
    density: float,
    t_z: int,
) -> list[DepthMeasurement]:
    """Depth scan of the scene as it stood at t_z: strided rows and columns.

    ``lines`` equally spaced rows are read, and within each row every
    round(1/density)-th column, so equal densities keep measurement counts
    proportional to the line count. Sampling is deterministic. Cells at zero
    disparity (beyond sensor range) yield no measurement.
    """
    h, w = model.spec.height, model.spec.width
    if not (1 <= lines <= h):
        raise ValueError(f"lines must lie in [1, {h}], got {lines}")
    if not (0.0 < density <= 1.0):
        raise ValueError(f"density must lie in (0, 1], got {density}")
    if t_z < 0:
        raise ValueError(f"scan time must be non-negative, got {t_z}")
    rows = (np.arange(lines) * h) // lines
    step = max(1, int(round(1.0 / density)))
    cols = np.arange(0, w, step)
    disp = model.disparity_at(t_z)
    bf = rig.baseline_m * rig.focal_px
    out = []
    for r in rows:
        for c in cols:
            d = disp[r, c]
            if d > 0:
                out.append(DepthMeasurement(int(c), int(r), float(bf / d), int(t_z)))
    return out
