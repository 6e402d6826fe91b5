"""Event-stream stereo with sparse depth hints injected as hallucinated patterns.

The package covers the full pipeline: event histories and stereo geometry
(:mod:`evfuse.events`), dense stack representations (:mod:`evfuse.stacking`),
hint injection into stacks (:mod:`evfuse.vsh`) or into the raw streams
(:mod:`evfuse.bth`), block matching and metrics (:mod:`evfuse.matching`),
synthetic scenes with ground truth (:mod:`evfuse.synthetic`), file formats
(:mod:`evfuse.formats`), and a benchmark harness (:mod:`evfuse.bench`).
"""

from .bth import BthConfig, bin_timestamp, bth_repeated, bth_single, bth_with_offset
from .events import (
    OCCLUSION_POLICIES,
    DepthMeasurement,
    Event,
    EventHistory,
    ProjectionStats,
    SparseDisparityGrid,
    StereoRig,
    conservative_range,
    insert_sorted,
    project_to_grid,
    round_half_away,
    sample_sbn,
    sample_sbt,
    triangulate,
)
from .matching import (
    CostVolume,
    DisparityMap,
    MetricsReport,
    build_cost_volume,
    evaluate,
    guided_modulate,
    wta,
)
from .stacking import (
    DEFAULT_ERGO_RECIPE,
    REPRESENTATIONS,
    ChannelSpec,
    Stack,
    StackConfig,
    StackRange,
    build_stack,
    default_range_mode,
    stack_ergo,
    stack_histogram,
    stack_mdes,
    stack_range,
    stack_tencode,
    stack_timesurface,
    stack_tore,
    stack_voxelgrid,
)
from .synthetic import (
    LIDAR_LINE_PRESETS,
    SceneSpec,
    SyntheticScene,
    lidar_sample,
    synth_scene,
)
from .vsh import VshConfig, vsh_inject

__version__ = "0.1.0"

__all__ = [
    "__version__",
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
    "REPRESENTATIONS",
    "Stack",
    "StackConfig",
    "StackRange",
    "ChannelSpec",
    "build_stack",
    "stack_histogram",
    "stack_voxelgrid",
    "stack_mdes",
    "stack_tore",
    "stack_timesurface",
    "stack_tencode",
    "stack_ergo",
    "DEFAULT_ERGO_RECIPE",
    "stack_range",
    "default_range_mode",
    "VshConfig",
    "vsh_inject",
    "BthConfig",
    "bin_timestamp",
    "bth_single",
    "bth_repeated",
    "bth_with_offset",
    "CostVolume",
    "DisparityMap",
    "MetricsReport",
    "build_cost_volume",
    "guided_modulate",
    "wta",
    "evaluate",
    "SceneSpec",
    "SyntheticScene",
    "synth_scene",
    "lidar_sample",
    "LIDAR_LINE_PRESETS",
]
