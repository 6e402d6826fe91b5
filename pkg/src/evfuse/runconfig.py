"""Line-oriented run configuration shared by the CLI and the benchmark.

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment. Keys are dotted and validated against a fixed schema, so typos
fail loudly instead of silently running with defaults. Command lines can
override single keys with ``--set key=value``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .bth import BthConfig
from .events import OCCLUSION_POLICIES, StereoRig
from .stacking import REPRESENTATIONS, StackConfig
from .vsh import VshConfig

__all__ = ["ConfigError", "RunConfig", "FUSION_MODES", "SAMPLING_MODES", "MASK_LABELS"]

FUSION_MODES = ("none", "guided", "vsh", "bth-single", "bth-repeated")
SAMPLING_MODES = ("sbn", "sbt")
MASK_LABELS = ("all", "hinted")


class ConfigError(ValueError):
    """Unknown key, unparsable value, or value outside its allowed set."""


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# key -> (parser, default, allowed values or None)
_SCHEMA: dict[str, tuple] = {
    "seed": (int, 0, None),
    "rig.baseline_m": (float, 0.5, None),
    "rig.focal_px": (float, 600.0, None),
    "rig.width": (int, 96, None),
    "rig.height": (int, 96, None),
    "rig.d_max": (int, 32, None),
    "stack.representation": (str, "histogram", REPRESENTATIONS),
    "stack.voxel_bins": (int, 4, None),
    "stack.mdes_levels": (int, 4, None),
    "stack.tore_queue": (int, 2, None),
    "sampling.mode": (str, "sbt", SAMPLING_MODES),
    "sampling.n": (int, 50_000, None),
    "sampling.delta_us": (int, 200_000, None),
    "fusion": (str, "vsh", FUSION_MODES),
    "vsh.alpha": (float, 0.5, None),
    "vsh.patch": (int, 3, None),
    "vsh.uniform_patch": (_parse_bool, True, None),
    "vsh.per_channel": (_parse_bool, True, None),
    "vsh.range_mode": (str, "auto", ("auto", "minmax", "percentile")),
    "vsh.percentile_lo": (float, 5.0, None),
    "vsh.percentile_hi": (float, 95.0, None),
    "bth.k": (int, 2, None),
    "bth.patch": (int, 3, None),
    "bth.uniform_patch": (_parse_bool, True, None),
    "bth.uniform_polarity": (_parse_bool, True, None),
    "bth.bins": (int, 12, None),
    "bth.uniform_slots": (_parse_bool, False, None),
    "guided.gain": (float, 0.8, None),
    "guided.width": (float, 1.0, None),
    "occlusion": (str, "keep-nearest", OCCLUSION_POLICIES),
    "match.window": (int, 5, None),
    "metrics.mask": (str, "all", MASK_LABELS),
}


def _parse_pair(key: str, raw: str, where: str):
    if key not in _SCHEMA:
        raise ConfigError(f"{where}: unknown key {key!r}")
    parser, _, allowed = _SCHEMA[key]
    try:
        value = parser(raw)
    except ValueError:
        raise ConfigError(f"{where}: bad value {raw!r} for {key}") from None
    if allowed is not None and value not in allowed:
        raise ConfigError(f"{where}: {key} must be one of {', '.join(allowed)}, got {raw!r}")
    return value


@dataclass
class RunConfig:
    """Validated settings bag with typed accessors for the library configs."""

    values: dict = field(default_factory=lambda: {k: d for k, (_, d, _) in _SCHEMA.items()})

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{source}:{lineno}: expected key = value, got {line.strip()!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            cfg.values[key] = _parse_pair(key, raw, f"{source}:{lineno}")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text(), source=str(path))

    def apply_overrides(self, pairs) -> "RunConfig":
        """Apply ``key=value`` strings from the command line, last wins."""
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"--set {pair!r}: expected key=value")
            key, raw = (part.strip() for part in pair.split("=", 1))
            self.values[key] = _parse_pair(key, raw, f"--set {pair!r}")
        return self

    def __getitem__(self, key: str):
        return self.values[key]

    def rig(self) -> StereoRig:
        v = self.values
        return StereoRig(v["rig.baseline_m"], v["rig.focal_px"], v["rig.width"], v["rig.height"], v["rig.d_max"])

    def stack_config(self) -> StackConfig:
        v = self.values
        return StackConfig(
            voxel_bins=v["stack.voxel_bins"],
            mdes_levels=v["stack.mdes_levels"],
            tore_queue=v["stack.tore_queue"],
        )

    def vsh_config(self) -> VshConfig:
        v = self.values
        return VshConfig(
            patch=v["vsh.patch"],
            uniform_patch=v["vsh.uniform_patch"],
            alpha=v["vsh.alpha"],
            range_mode=v["vsh.range_mode"],
            percentiles=(v["vsh.percentile_lo"], v["vsh.percentile_hi"]),
            per_channel=v["vsh.per_channel"],
            seed=v["seed"],
        )

    def bth_config(self, mode: str | None = None) -> BthConfig:
        v = self.values
        if mode is None:
            fusion = v["fusion"]
            if not fusion.startswith("bth-"):
                raise ConfigError(f"fusion={fusion!r} does not select a timestamped-pair mode")
            mode = fusion.removeprefix("bth-")
        return BthConfig(
            k=v["bth.k"],
            patch=v["bth.patch"],
            uniform_patch=v["bth.uniform_patch"],
            uniform_polarity=v["bth.uniform_polarity"],
            mode=mode,
            bins=v["bth.bins"],
            uniform_slots=v["bth.uniform_slots"],
            seed=v["seed"],
        )
