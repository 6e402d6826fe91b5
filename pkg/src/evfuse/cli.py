"""Command-line pipeline: synth -> stack -> fuse -> match -> eval, plus bench.

Exit codes: 0 on success, 1 on runtime failures, 2 on usage errors and
malformed inputs (bad flags, bad config keys, bad file contents).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from .bench import MODES, OFFSET_SWEEP_MS, BenchSuite, format_table, render_figures, run_suite, write_results_csv
from .bth import bth_with_offset
from .events import EventHistory, StereoRig, conservative_range, project_to_grid, sample_sbn, sample_sbt
from .formats import (
    FormatError,
    disparity_to_stack,
    read_depth_csv,
    read_events,
    read_tensor,
    stack_to_disparity,
    write_depth_csv,
    write_events,
    write_tensor,
)
from .matching import build_cost_volume, evaluate, guided_modulate, wta
from .runconfig import ConfigError, RunConfig
from .stacking import REPRESENTATIONS, build_stack
from .synthetic import SceneSpec, lidar_sample, synth_scene
from .vsh import vsh_inject

__all__ = ["main"]


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="run configuration file (key = value lines)")
    sub.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                     help="override one config key (repeatable)")
    sub.add_argument("--seed", type=int, help="override the config seed")


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg.apply_overrides(args.overrides)
    if args.seed is not None:
        cfg.values["seed"] = args.seed
    return cfg


def _read_pair(left_path, right_path) -> tuple[EventHistory, EventHistory, tuple[int, int]]:
    left, dims_l = read_events(left_path, "left")
    right, dims_r = read_events(right_path, "right")
    if dims_l != dims_r:
        raise FormatError(f"grid mismatch: {left_path} is {dims_l}, {right_path} is {dims_r}")
    return left, right, dims_l


def _sample(history: EventHistory, cfg: RunConfig, t_d: int) -> tuple[EventHistory, tuple[int, int] | None]:
    """Apply the configured backward sampling; returns (sample, pinned interval)."""
    if cfg["sampling.mode"] == "sbn":
        return sample_sbn(history, t_d, cfg["sampling.n"]), None
    delta = cfg["sampling.delta_us"]
    return sample_sbt(history, t_d, delta), (max(0, t_d - delta), t_d)


def _rig_for(cfg: RunConfig, dims: tuple[int, int]) -> StereoRig:
    """Config rig with the grid size taken from the data files."""
    base = cfg.rig()
    return replace(base, width=dims[0], height=dims[1])


def _cmd_stack(args: argparse.Namespace, cfg: RunConfig) -> int:
    history, dims = read_events(args.events, args.side)
    rig = _rig_for(cfg, dims)
    t_d = args.t_d if args.t_d is not None else (history.range[1] if len(history) else 0)
    sample, interval = _sample(history, cfg, t_d)
    kind = cfg["stack.representation"]
    t0 = time.perf_counter()
    stack = build_stack(kind, sample, rig, cfg.stack_config(), interval)
    dt = time.perf_counter() - t0
    rate = len(sample) / dt if dt > 0 else float("inf")
    print(f"events: {len(sample)} of {len(history)}  build: {dt * 1e3:.2f} ms  rate: {rate:,.0f} ev/s")
    if args.out:
        write_tensor(args.out, stack)
        lo, hi = stack.interval
        print(f"wrote {args.out} ({kind}, {stack.height}x{stack.width}x{stack.channels}, interval [{lo}, {hi}] us)")
    return 0


def _cmd_fuse(args: argparse.Namespace, cfg: RunConfig) -> int:
    fusion = cfg["fusion"]
    if fusion == "none":
        raise ConfigError("fusion=none selects no method; set fusion=vsh or fusion=bth-*")
    if fusion == "guided":
        raise ConfigError("fusion=guided modulates matching costs, not inputs; pass the scan to match --hints")
    emit = args.emit
    if emit == "auto":
        emit = "stacks" if fusion == "vsh" else "histories"
    if fusion == "vsh" and emit != "stacks":
        raise ConfigError("fusion=vsh emits stacks; --emit histories is not available")
    if fusion.startswith("bth-") and emit != "histories":
        raise ConfigError(f"fusion={fusion} emits histories; --emit stacks is not available")

    left, right, dims = _read_pair(args.left, args.right)
    rig = _rig_for(cfg, dims)
    measurements = read_depth_csv(args.depth)
    t_d = args.t_d
    if t_d is None:
        # Default query time: whichever is newer, the last event or the scan,
        # so freshly acquired depth is never rejected as coming from the future.
        t_d = conservative_range(left, right)[1]
        if measurements:
            t_d = max(t_d, max(m.t_z for m in measurements))
    left_s, _ = _sample(left, cfg, t_d)
    right_s, _ = _sample(right, cfg, t_d)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if fusion == "vsh":
        grid = project_to_grid(rig, measurements, cfg["occlusion"])
        interval = conservative_range(left_s, right_s)
        kind = cfg["stack.representation"]
        s_l = build_stack(kind, left_s, rig, cfg.stack_config(), interval)
        s_r = build_stack(kind, right_s, rig, cfg.stack_config(), interval)
        f_l, f_r = vsh_inject(s_l, s_r, grid, cfg.vsh_config())
        st = grid.stats
        print(f"measurements: {st.n_measurements}  used: {st.n_used}  dropped: {st.n_dropped}  "
              f"overwritten: {st.n_overwritten}  occluded: {st.n_occluded}")
        changed = int((f_l.data != s_l.data).any(axis=2).sum())
        print(f"painted cells (left): {changed}")
        write_tensor(outdir / "left.evt", f_l)
        write_tensor(outdir / "right.evt", f_r)
        print(f"wrote {outdir / 'left.evt'} and {outdir / 'right.evt'}")
    else:
        f_l, f_r = bth_with_offset(left_s, right_s, measurements, t_d, rig, cfg.bth_config())
        grid = project_to_grid(rig, measurements, "discard-occluded")
        st = grid.stats
        print(f"measurements: {st.n_measurements}  used: {st.n_used}  dropped: {st.n_dropped}  "
              f"overwritten: {st.n_overwritten}  occluded: {st.n_occluded}")
        print(f"events injected: {len(f_l) - len(left_s)} per side")
        write_events(outdir / "left.events", f_l, rig.width, rig.height)
        write_events(outdir / "right.events", f_r, rig.width, rig.height)
        print(f"wrote {outdir / 'left.events'} and {outdir / 'right.events'}")
    return 0


def _cmd_match(args: argparse.Namespace, cfg: RunConfig) -> int:
    s_l = read_tensor(args.left)
    s_r = read_tensor(args.right)
    rig = _rig_for(cfg, (s_l.width, s_l.height))
    vol = build_cost_volume(s_l, s_r, rig.d_max, cfg["match.window"])
    if args.hints:
        measurements = read_depth_csv(args.hints)
        grid = project_to_grid(rig, measurements, cfg["occlusion"])
        vol = guided_modulate(vol, grid, cfg["guided.gain"], cfg["guided.width"])
    pred = wta(vol)
    write_tensor(args.out, disparity_to_stack(pred))
    mode = "guided" if args.hints else "plain"
    print(f"matched {s_l.height}x{s_l.width} ({mode}, d_max={rig.d_max}, window={cfg['match.window']})")
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    pred = stack_to_disparity(read_tensor(args.pred))
    gt = stack_to_disparity(read_tensor(args.gt))
    label = cfg["metrics.mask"]
    if label == "hinted":
        if not args.depth:
            raise ConfigError("metrics.mask=hinted needs --depth with the scan that defines the mask")
        rig = _rig_for(cfg, (gt.data.shape[1], gt.data.shape[0]))
        grid = project_to_grid(rig, read_depth_csv(args.depth), "keep-all")
        mask = gt.valid & grid.valid
    else:
        mask = None
    report = evaluate(pred, gt, mask, label)
    print(f"mask={report.mask_label} n={report.n_pixels}")
    print(f"1PE: {report.one_pe:.2f}%")
    print(f"2PE: {report.two_pe:.2f}%")
    print(f"MAE: {report.mae:.3f} px")
    return 0


def _cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> int:
    spec = SceneSpec(
        width=args.width,
        height=args.height,
        plane_disparities=tuple(int(v) for v in args.planes.split(",")),
        textureless_fraction=args.textureless,
        dot_density=args.dot_density,
        velocity_px_s=args.velocity,
        duration_us=args.duration_ms * 1000,
        contrast=args.contrast,
        seed=SceneSpec.seed if args.scene_seed is None else args.scene_seed,
    )
    scene = synth_scene(spec)
    rig = replace(cfg.rig(), width=spec.width, height=spec.height)
    t_z = max(scene.t_d - args.offset_ms * 1000, 0)
    measurements = lidar_sample(scene.model, rig, args.lines, args.scan_density, t_z)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_events(outdir / "left.events", scene.left, spec.width, spec.height)
    write_events(outdir / "right.events", scene.right, spec.width, spec.height)
    write_tensor(outdir / "gt.evt", disparity_to_stack(scene.gt))
    write_depth_csv(outdir / "depth.csv", measurements)
    print(f"scene: {spec.width}x{spec.height}, {len(scene.left)} left / {len(scene.right)} right events, "
          f"t_d={scene.t_d} us")
    print(f"scan: {len(measurements)} measurements at t_z={t_z} us")
    print(f"wrote left.events, right.events, gt.evt, depth.csv under {outdir}")
    return 0


def _cmd_bench(args: argparse.Namespace, cfg: RunConfig) -> int:
    reps = tuple(args.reps.split(",")) if args.reps else REPRESENTATIONS
    modes = tuple(args.modes.split(",")) if args.modes else MODES
    offsets = tuple(int(v) for v in args.offsets.split(",")) if args.offsets else OFFSET_SWEEP_MS
    suite = BenchSuite(
        scene=SceneSpec(seed=SceneSpec.seed if args.scene_seed is None else args.scene_seed),
        rig=cfg.rig(),
        representations=reps,
        modes=modes,
        offsets_ms=offsets,
        lidar_lines=args.lines,
        lidar_density=args.scan_density,
        occlusion=cfg["occlusion"],
        stack_cfg=cfg.stack_config(),
        vsh_cfg=cfg.vsh_config(),
        bth_cfg=cfg.bth_config("repeated"),
        guided_gain=cfg["guided.gain"],
        guided_width=cfg["guided.width"],
        window=cfg["match.window"],
    )
    results = run_suite(suite, log=print if args.verbose else None)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_results_csv(results, outdir / "results.csv")
    table = format_table(results)
    (outdir / "results.txt").write_text(table)
    print(table, end="")
    if args.no_figures:
        print(f"wrote {outdir / 'results.csv'} and {outdir / 'results.txt'}")
    else:
        figures = render_figures(results, outdir)
        print(f"wrote {outdir / 'results.csv'}, {outdir / 'results.txt'}, " + ", ".join(figures))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evfuse", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("stack", help="build a stack tensor from an event file")
    p.add_argument("events", help="binary event stream")
    p.add_argument("--side", choices=("left", "right"), default="left")
    p.add_argument("--t-d", type=int, default=None, help="sampling time (default: last event)")
    p.add_argument("--out", metavar="PATH", help="write the tensor here")
    _add_common(p)
    p.set_defaults(func=_cmd_stack)

    p = subs.add_parser("fuse", help="inject depth hints into stacks or event streams")
    p.add_argument("--left", required=True, help="left binary event stream")
    p.add_argument("--right", required=True, help="right binary event stream")
    p.add_argument("--depth", required=True, help="depth scan CSV (x,y,z_m,t_us)")
    p.add_argument("--emit", choices=("auto", "stacks", "histories"), default="auto",
                   help="output form; must agree with the fusion method")
    p.add_argument("--t-d", type=int, default=None, help="disparity time (default: latest event or scan)")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_common(p)
    p.set_defaults(func=_cmd_fuse)

    p = subs.add_parser("match", help="stereo-match two stack tensors")
    p.add_argument("--left", required=True, help="left stack tensor")
    p.add_argument("--right", required=True, help="right stack tensor")
    p.add_argument("--hints", metavar="CSV", help="depth scan for guided cost modulation")
    p.add_argument("--out", required=True, metavar="PATH", help="disparity tensor output")
    _add_common(p)
    p.set_defaults(func=_cmd_match)

    p = subs.add_parser("eval", help="score a disparity tensor against ground truth")
    p.add_argument("--pred", required=True, help="predicted disparity tensor")
    p.add_argument("--gt", required=True, help="ground-truth disparity tensor")
    p.add_argument("--depth", metavar="CSV", help="scan defining the hinted mask")
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = subs.add_parser("synth", help="generate a synthetic scene with ground truth and a depth scan")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--planes", default="4,16", help="comma-separated plane disparities")
    p.add_argument("--textureless", type=float, default=0.4, help="textureless fraction per surface")
    p.add_argument("--dot-density", type=float, default=0.12)
    p.add_argument("--velocity", type=float, default=97.0, help="scene velocity in px/s")
    p.add_argument("--duration-ms", type=int, default=200)
    p.add_argument("--contrast", type=float, default=0.6)
    p.add_argument("--scene-seed", type=int, default=None, help="scene seed (default: built-in scene default)")
    p.add_argument("--lines", type=int, default=32, help="scan lines")
    p.add_argument("--scan-density", type=float, default=0.15, help="within-line sampling density")
    p.add_argument("--offset-ms", type=int, default=0, help="scan age relative to t_d")
    _add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = subs.add_parser("bench", help="sweep fusion modes over representations and scan ages")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--reps", help="comma-separated representations (default: all)")
    p.add_argument("--modes", help="comma-separated modes (default: all)")
    p.add_argument("--offsets", help="comma-separated scan ages in ms (default: standard sweep)")
    p.add_argument("--lines", type=int, default=32)
    p.add_argument("--scan-density", type=float, default=0.15)
    p.add_argument("--scene-seed", type=int, default=None)
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.add_argument("--verbose", action="store_true", help="print progress while running")
    _add_common(p)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load_config(args)
        return args.func(args, cfg)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
