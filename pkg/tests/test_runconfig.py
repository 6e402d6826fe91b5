"""Run configuration: parsing, validation, overrides, typed accessors."""

import pytest

from evfuse import BthConfig, StereoRig, VshConfig
from evfuse.runconfig import FUSION_MODES, ConfigError, RunConfig


def test_defaults_cover_the_whole_pipeline():
    cfg = RunConfig()
    assert cfg["seed"] == 0
    assert cfg.rig() == StereoRig(0.5, 600.0, 96, 96, 32)
    assert cfg["stack.representation"] == "histogram"
    assert cfg["sampling.mode"] == "sbt"
    assert cfg["sampling.delta_us"] == 200_000
    assert cfg["fusion"] == "vsh"
    assert cfg["occlusion"] == "keep-nearest"
    assert cfg["match.window"] == 5
    assert cfg["guided.gain"] == 0.8
    assert cfg["guided.width"] == 1.0
    assert cfg["metrics.mask"] == "all"


def test_default_injection_configs():
    cfg = RunConfig()
    assert cfg.vsh_config() == VshConfig(
        patch=3, uniform_patch=True, alpha=0.5, range_mode="auto",
        percentiles=(5.0, 95.0), per_channel=True, seed=0,
    )
    assert cfg.bth_config("repeated") == BthConfig(
        k=2, patch=3, uniform_patch=True, uniform_polarity=True,
        mode="repeated", bins=12, uniform_slots=False, seed=0,
    )


def test_parse_accepts_comments_and_blanks():
    cfg = RunConfig.parse(
        """
        # stereo rig
        rig.d_max = 16   # hypotheses
        fusion = bth-single
        vsh.alpha = 0.25
        vsh.uniform_patch = off
        """
    )
    assert cfg["rig.d_max"] == 16
    assert cfg["fusion"] == "bth-single"
    assert cfg["vsh.alpha"] == 0.25
    assert cfg["vsh.uniform_patch"] is False


def test_parse_reports_source_and_line():
    with pytest.raises(ConfigError, match=r"run\.cfg:3: unknown key 'rig\.dmax'"):
        RunConfig.parse("\n\nrig.dmax = 4\n", source="run.cfg")
    with pytest.raises(ConfigError, match=r"<config>:1: bad value 'fast' for rig\.d_max"):
        RunConfig.parse("rig.d_max = fast")
    with pytest.raises(ConfigError, match=r"<config>:2: expected key = value"):
        RunConfig.parse("seed = 1\nnonsense line")
    with pytest.raises(ConfigError, match="must be one of"):
        RunConfig.parse("stack.representation = surface")


def test_all_fusion_modes_parse():
    for mode in FUSION_MODES:
        assert RunConfig.parse(f"fusion = {mode}")["fusion"] == mode
    assert "guided" in FUSION_MODES


def test_load_reads_files(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 42\n")
    assert RunConfig.load(p)["seed"] == 42


def test_overrides_win_last():
    cfg = RunConfig.parse("seed = 1")
    cfg.apply_overrides(["seed=2", "seed=3", "bth.k = 5"])
    assert cfg["seed"] == 3
    assert cfg["bth.k"] == 5
    with pytest.raises(ConfigError, match="expected key=value"):
        cfg.apply_overrides(["seed able"])
    with pytest.raises(ConfigError, match="unknown key"):
        cfg.apply_overrides(["bogus=1"])


def test_seed_feeds_the_injection_configs():
    cfg = RunConfig.parse("seed = 7")
    assert cfg.vsh_config().seed == 7
    assert cfg.bth_config("single").seed == 7


def test_bth_config_mode_comes_from_fusion():
    cfg = RunConfig.parse("fusion = bth-repeated")
    assert cfg.bth_config().mode == "repeated"
    cfg = RunConfig.parse("fusion = bth-single")
    assert cfg.bth_config().mode == "single"
    cfg = RunConfig.parse("fusion = vsh")
    with pytest.raises(ConfigError, match="timestamped-pair"):
        cfg.bth_config()


def test_stack_config_accessor():
    cfg = RunConfig.parse("stack.voxel_bins = 8\nstack.mdes_levels = 2\nstack.tore_queue = 3")
    sc = cfg.stack_config()
    assert (sc.voxel_bins, sc.mdes_levels, sc.tore_queue) == (8, 2, 3)
