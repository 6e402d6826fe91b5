"""Benchmark harness: sweep fusion modes over representations and scan ages.

One suite run crosses every stack representation with every fusion mode at
each requested scan-to-disparity offset, always on the same seeded scene.
Results come back as flat cells ready for CSV export, an aligned text
table, or trend figures.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .bth import BthConfig, bth_with_offset
from .events import StereoRig, project_to_grid
from .matching import MetricsReport, build_cost_volume, evaluate, guided_modulate, wta
from .stacking import REPRESENTATIONS, StackConfig, build_stack
from .synthetic import SceneSpec, lidar_sample, synth_scene
from .vsh import VshConfig, vsh_inject

__all__ = [
    "MODES",
    "OFFSET_SWEEP_MS",
    "BenchSuite",
    "CellResult",
    "run_suite",
    "write_results_csv",
    "format_table",
    "render_figures",
]

MODES = ("baseline", "guided", "vsh", "bth-single", "bth-repeated")
OFFSET_SWEEP_MS = (0, 3, 13, 32, 61, 100)
MASKS = ("all", "hinted", "textureless")


@dataclass(frozen=True)
class BenchSuite:
    """Everything one benchmark run depends on, seeds included."""

    scene: SceneSpec = SceneSpec()
    rig: StereoRig = StereoRig(0.5, 600.0, 96, 96, 32)
    representations: tuple[str, ...] = REPRESENTATIONS
    modes: tuple[str, ...] = MODES
    offsets_ms: tuple[int, ...] = (0,)
    lidar_lines: int = 32
    lidar_density: float = 0.15
    occlusion: str = "keep-nearest"
    stack_cfg: StackConfig = StackConfig()
    vsh_cfg: VshConfig = VshConfig()
    bth_cfg: BthConfig = BthConfig()
    guided_gain: float = 0.8
    guided_width: float = 1.0
    window: int = 5

    def __post_init__(self) -> None:
        if (self.rig.width, self.rig.height) != (self.scene.width, self.scene.height):
            raise ValueError("rig grid and scene grid disagree")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise ValueError(f"unknown modes: {sorted(unknown)}")
        unknown = set(self.representations) - set(REPRESENTATIONS)
        if unknown:
            raise ValueError(f"unknown representations: {sorted(unknown)}")


@dataclass(frozen=True)
class CellResult:
    """Metrics of one (representation, mode, offset) cell, keyed by mask."""

    representation: str
    mode: str
    offset_ms: int
    reports: dict[str, MetricsReport] = field(default_factory=dict)


def run_suite(suite: BenchSuite = BenchSuite(), log=None) -> list[CellResult]:
    """Run the full cross product and return one cell per combination.

    The scene, its baseline stacks, and the per-offset scans and fused
    histories are each computed once and shared across cells.
    """
    say = log if log is not None else (lambda msg: None)
    scene = synth_scene(suite.scene)
    rig = suite.rig
    t_d = scene.t_d
    # Observation window ends at the query time, matching the time-window
    # sampling path in the CLI; injected events clamped to the last real
    # timestamp then carry a positive age in age-coded representations.
    interval = (0, t_d)
    say(f"scene: {len(scene.left)} left / {len(scene.right)} right events, t_d={t_d} us")

    # Per-offset inputs are representation-independent.
    scans = {}
    for off in suite.offsets_ms:
        t_z = max(t_d - off * 1000, 0)
        meas = lidar_sample(scene.model, rig, suite.lidar_lines, suite.lidar_density, t_z)
        grid = project_to_grid(rig, meas, suite.occlusion)
        hinted = project_to_grid(rig, meas, "keep-all").valid
        fused = {}
        for mode in ("bth-single", "bth-repeated"):
            if mode in suite.modes:
                cfg = replace(suite.bth_cfg, mode=mode.removeprefix("bth-"))
                fused[mode] = bth_with_offset(scene.left, scene.right, meas, t_d, rig, cfg)
        scans[off] = (meas, grid, hinted, fused)
        say(f"offset {off} ms: {len(meas)} measurements, {grid.n_valid} hint cells")

    masks_base = {
        "all": scene.gt.valid,
        "textureless": scene.gt.valid & scene.textureless,
    }

    results = []
    for rep in suite.representations:
        s_l = build_stack(rep, scene.left, rig, suite.stack_cfg, interval)
        s_r = build_stack(rep, scene.right, rig, suite.stack_cfg, interval)
        vol_base = build_cost_volume(s_l, s_r, rig.d_max, suite.window)
        pred_base = wta(vol_base)

        for off in suite.offsets_ms:
            meas, grid, hinted, fused = scans[off]
            masks = dict(masks_base, hinted=scene.gt.valid & hinted)
            preds = {}
            for mode in suite.modes:
                if mode == "baseline":
                    preds[mode] = pred_base
                elif mode == "guided":
                    vol = guided_modulate(vol_base, grid, suite.guided_gain, suite.guided_width)
                    preds[mode] = wta(vol)
                elif mode == "vsh":
                    h_l, h_r = vsh_inject(s_l, s_r, grid, suite.vsh_cfg)
                    preds[mode] = wta(build_cost_volume(h_l, h_r, rig.d_max, suite.window))
                else:
                    f_l, f_r = fused[mode]
                    b_l = build_stack(rep, f_l, rig, suite.stack_cfg, interval)
                    b_r = build_stack(rep, f_r, rig, suite.stack_cfg, interval)
                    preds[mode] = wta(build_cost_volume(b_l, b_r, rig.d_max, suite.window))

            cells = []
            for mode, pred in preds.items():
                reports = {
                    label: evaluate(pred, scene.gt, mask, label)
                    for label, mask in masks.items()
                    if mask.any()
                }
                cells.append(CellResult(rep, mode, off, reports))
            results.extend(cells)
            say(f"{rep} @ {off} ms: " + ", ".join(
                f"{c.mode}={c.reports['all'].one_pe:.1f}%" for c in cells
            ))
    return results


def write_results_csv(results: list[CellResult], path) -> None:
    """Flat delimited export: one row per (cell, mask)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["representation", "mode", "offset_ms", "mask", "one_pe", "two_pe", "mae", "n_pixels"])
        for cell in results:
            for label in MASKS:
                rep = cell.reports.get(label)
                if rep is None:
                    continue
                writer.writerow([
                    cell.representation,
                    cell.mode,
                    cell.offset_ms,
                    label,
                    f"{rep.one_pe:.6f}",
                    f"{rep.two_pe:.6f}",
                    f"{rep.mae:.6f}",
                    rep.n_pixels,
                ])


def format_table(results: list[CellResult], mask: str = "all") -> str:
    """Aligned text table of one mask's metrics across all cells."""
    rows = [["representation", "mode", "offset_ms", "1PE %", "2PE %", "MAE px"]]
    for cell in results:
        rep = cell.reports.get(mask)
        if rep is None:
            continue
        rows.append([
            cell.representation,
            cell.mode,
            str(cell.offset_ms),
            f"{rep.one_pe:.2f}",
            f"{rep.two_pe:.2f}",
            f"{rep.mae:.3f}",
        ])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) if j == 0 or j == 1 else cell.rjust(w)
                               for j, (cell, w) in enumerate(zip(row, widths))))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _mean_by(results, mask, key):
    """Mean full-precision 1PE grouped by key(cell), in first-seen order."""
    order, groups = [], {}
    for cell in results:
        rep = cell.reports.get(mask)
        if rep is None:
            continue
        k = key(cell)
        if k not in groups:
            order.append(k)
            groups[k] = []
        groups[k].append(rep.one_pe)
    return order, {k: float(np.mean(v)) for k, v in groups.items()}


def render_figures(results: list[CellResult], outdir, mask: str = "all") -> list[str]:
    """Render trend figures next to the delimited output; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []

    modes = list(dict.fromkeys(c.mode for c in results))
    offsets = sorted({c.offset_ms for c in results})

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for mode in modes:
        ys = []
        for off in offsets:
            sub = [c for c in results if c.mode == mode and c.offset_ms == off]
            _, means = _mean_by(sub, mask, key=lambda c: c.mode)
            ys.append(means.get(mode, float("nan")))
        ax.plot(offsets, ys, marker="o", label=mode)
    ax.set_xlabel("scan offset (ms)")
    ax.set_ylabel(f"1PE % ({mask} mask, mean over representations)")
    ax.set_title("Accuracy vs. depth-scan age")
    ax.grid(True, alpha=0.3)
    ax.legend()
    p = outdir / "offset_sweep.png"
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(str(p))

    first_off = offsets[0]
    at_first = [c for c in results if c.offset_ms == first_off]
    reps = list(dict.fromkeys(c.representation for c in at_first))
    fig, ax = plt.subplots(figsize=(8.5, 4.5))
    width = 0.8 / max(len(modes), 1)
    xs = np.arange(len(reps))
    for mi, mode in enumerate(modes):
        vals = []
        for rep in reps:
            sub = [c for c in at_first if c.mode == mode and c.representation == rep]
            vals.append(sub[0].reports[mask].one_pe if sub and mask in sub[0].reports else float("nan"))
        ax.bar(xs + (mi - (len(modes) - 1) / 2) * width, vals, width, label=mode)
    ax.set_xticks(xs, reps, rotation=20)
    ax.set_ylabel(f"1PE % ({mask} mask)")
    ax.set_title(f"Per-representation accuracy at {first_off} ms offset")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    p = outdir / "representations.png"
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(str(p))
    return paths
