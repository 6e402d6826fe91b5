"""Stack builders: frozen examples, invariants, and brute-force cross-checks."""

import math

import numpy as np
import pytest

from evfuse import (
    DEFAULT_ERGO_RECIPE,
    REPRESENTATIONS,
    ChannelSpec,
    EventHistory,
    Stack,
    StackConfig,
    StereoRig,
    build_stack,
    default_range_mode,
    insert_sorted,
    stack_ergo,
    stack_histogram,
    stack_mdes,
    stack_range,
    stack_tencode,
    stack_timesurface,
    stack_tore,
    stack_voxelgrid,
)
import oracles

RIG = StereoRig(0.5, 600.0, 8, 8, 4)
CFG = StackConfig()


def _history(events, side="left"):
    if not events:
        return EventHistory.empty(side)
    x, y, p, t = zip(*events)
    return EventHistory.from_unsorted(x, y, p, t, side)


def _random_history(rng, grid=8, max_events=60, t_max=1000):
    n = int(rng.integers(0, max_events + 1))
    events = sorted(
        (
            (int(rng.integers(0, grid)), int(rng.integers(0, grid)),
             int(rng.choice((-1, 1))), int(rng.integers(0, t_max + 1)))
            for _ in range(n)
        ),
        key=lambda e: e[3],
    )
    return _history(events), events


def _reference(name, events, lo, hi, cfg=CFG, rig=RIG):
    w, h = rig.width, rig.height
    if name == "histogram":
        return oracles.ref_histogram(events, w, h, lo, hi)
    if name == "voxel":
        return oracles.ref_voxel(events, w, h, lo, hi, cfg.voxel_bins)
    if name == "mdes":
        return oracles.ref_mdes(events, w, h, lo, hi, cfg.mdes_levels)
    if name == "tore":
        return oracles.ref_tore(events, w, h, lo, hi, cfg.tore_queue, cfg.tore_tau_max_us)
    if name == "timesurface":
        return oracles.ref_timesurface(events, w, h, lo, hi, cfg.ts_taus_us)
    if name == "tencode":
        return oracles.ref_tencode(events, w, h, lo, hi)
    return oracles.ref_ergo(events, w, h, lo, hi)


def test_stack_validation():
    with pytest.raises(ValueError, match="H, W, C"):
        Stack(np.zeros((4, 4)), "histogram", (0, 1))
    with pytest.raises(ValueError, match="finite"):
        Stack(np.full((2, 2, 1), np.nan), "histogram", (0, 1))
    s = Stack(np.zeros((3, 5, 2)), "histogram", (0, 1))
    assert (s.height, s.width, s.channels) == (3, 5, 2)
    assert not s.data.flags.writeable


def test_stack_config_validation():
    with pytest.raises(ValueError, match="voxel bins"):
        StackConfig(voxel_bins=0)
    with pytest.raises(ValueError, match="mdes levels"):
        StackConfig(mdes_levels=0)
    with pytest.raises(ValueError, match="tore queue"):
        StackConfig(tore_queue=0)
    with pytest.raises(ValueError, match="tau_max"):
        StackConfig(tore_tau_max_us=0)
    with pytest.raises(ValueError, match="taus"):
        StackConfig(ts_taus_us=())


def test_histogram_counts_per_polarity():
    h = _history([(1, 1, 1, 10), (1, 1, -1, 15), (1, 1, 1, 20)])
    s = stack_histogram(h, RIG)
    assert s.data[1, 1, 0] == 2.0
    assert s.data[1, 1, 1] == 1.0
    assert s.data.sum() == 3.0
    assert s.kind == "histogram"
    assert s.interval == (10, 20)


def test_histogram_interval_is_inclusive_both_ends():
    h = _history([(0, 0, 1, 9), (0, 0, 1, 10), (0, 0, 1, 20), (0, 0, 1, 21)])
    s = stack_histogram(h, RIG, (10, 20))
    assert s.data[0, 0, 0] == 2.0


def test_histogram_rejects_out_of_grid_events():
    h = _history([(20, 0, 1, 5)])
    with pytest.raises(ValueError, match="grid"):
        stack_histogram(h, RIG)


def test_interval_end_before_start_rejected():
    h = _history([(0, 0, 1, 5)])
    with pytest.raises(ValueError, match="precedes"):
        stack_histogram(h, RIG, (10, 5))


def test_voxel_bin_placement_and_closed_last_bin():
    cfg = StackConfig(voxel_bins=2)
    h = _history([(2, 3, 1, 60)])
    s = stack_voxelgrid(h, RIG, cfg, (0, 100))
    assert s.data[3, 2, 0] == 0.0
    assert s.data[3, 2, 1] == 1.0
    edge = stack_voxelgrid(_history([(2, 3, 1, 100)]), RIG, cfg, (0, 100))
    assert edge.data[3, 2, 1] == 1.0


def test_voxel_opposite_polarities_cancel():
    cfg = StackConfig(voxel_bins=2)
    h = _history([(2, 3, 1, 60), (2, 3, -1, 70)])
    s = stack_voxelgrid(h, RIG, cfg, (0, 100))
    assert np.all(s.data == 0.0)


def test_voxel_degenerate_interval_uses_bin_zero():
    s = stack_voxelgrid(_history([(1, 1, -1, 40)]), RIG, StackConfig(voxel_bins=3), (40, 40))
    assert s.data[1, 1, 0] == -1.0
    assert np.count_nonzero(s.data) == 1


def test_mdes_nested_suffix_windows():
    cfg = StackConfig(mdes_levels=3)
    s = stack_mdes(_history([(2, 2, 1, 5)]), RIG, cfg, (0, 8))
    assert tuple(s.data[2, 2]) == (1.0, 1.0, 0.5)
    empty = stack_mdes(EventHistory.empty(), RIG, cfg, (0, 8))
    assert np.all(empty.data == 0.5)


def test_mdes_negative_polarity_codes_zero():
    s = stack_mdes(_history([(2, 2, -1, 7)]), RIG, StackConfig(mdes_levels=2), (0, 8))
    assert tuple(s.data[2, 2]) == (0.0, 0.0)


def test_tore_age_of_most_recent_events():
    cfg = StackConfig(tore_queue=2, tore_tau_max_us=1_000_000)
    h = _history([(4, 4, 1, 10), (4, 4, 1, 60), (4, 4, 1, 90)])
    s = stack_tore(h, RIG, cfg, (0, 100))
    assert s.data[4, 4, 0] == pytest.approx(math.log(11.0))
    assert s.data[4, 4, 1] == pytest.approx(math.log(41.0))
    assert np.all(s.data[4, 4, 2:] == 0.0)


def test_tore_event_at_interval_end_reads_zero():
    s = stack_tore(_history([(1, 2, -1, 100)]), RIG, CFG, (0, 100))
    assert np.all(s.data == 0.0)


def test_tore_age_saturates_at_tau_max():
    cfg = StackConfig(tore_queue=1, tore_tau_max_us=50)
    s = stack_tore(_history([(0, 0, 1, 0)]), RIG, cfg, (0, 10_000))
    assert s.data[0, 0, 0] == pytest.approx(math.log(51.0))


def test_timesurface_decay_values():
    cfg = StackConfig(ts_taus_us=(100,))
    h = _history([(3, 3, 1, 500), (5, 5, -1, 400)])
    s = stack_timesurface(h, RIG, cfg, (0, 500))
    assert s.data[3, 3, 0] == pytest.approx(1.0)
    assert s.data[5, 5, 1] == pytest.approx(math.exp(-1.0))
    assert s.data[5, 5, 0] == 0.0
    assert np.all(s.data[0, 0] == 0.0)


def test_tencode_flags_and_relative_time():
    h = _history([(1, 1, 1, 100)])
    s = stack_tencode(h, RIG, (0, 100))
    assert tuple(s.data[1, 1]) == (1.0, 1.0, 0.0)
    s2 = stack_tencode(_history([(1, 1, -1, 0)]), RIG, (0, 100))
    assert tuple(s2.data[1, 1]) == (0.0, 0.0, 1.0)
    assert np.all(s2.data[0, 0] == 0.0)


def test_tencode_degenerate_interval_time_is_one():
    s = stack_tencode(_history([(1, 1, 1, 44)]), RIG, (44, 44))
    assert tuple(s.data[1, 1]) == (1.0, 1.0, 0.0)


def test_latest_tie_goes_to_earliest_stream_entry():
    # Same pixel, same timestamp, opposite polarities: stream order decides.
    plus_first = EventHistory([2, 2], [2, 2], [1, -1], [50, 50])
    minus_first = EventHistory([2, 2], [2, 2], [-1, 1], [50, 50])
    s = stack_tencode(plus_first, RIG, (0, 50))
    assert (s.data[2, 2, 0], s.data[2, 2, 2]) == (1.0, 0.0)
    s = stack_tencode(minus_first, RIG, (0, 50))
    assert (s.data[2, 2, 0], s.data[2, 2, 2]) == (0.0, 1.0)
    m = stack_mdes(plus_first, RIG, StackConfig(mdes_levels=1), (0, 50))
    assert m.data[2, 2, 0] == 1.0
    m = stack_mdes(minus_first, RIG, StackConfig(mdes_levels=1), (0, 50))
    assert m.data[2, 2, 0] == 0.0


def test_stream_order_of_distinct_pixels_does_not_matter():
    rng = np.random.default_rng(42)
    for _ in range(20):
        cells = [(x, y) for y in range(8) for x in range(8)]
        rng.shuffle(cells)
        events = [
            (x, y, int(rng.choice((-1, 1))), int(rng.integers(0, 4) * 100))
            for x, y in cells[:24]
        ]
        fwd = sorted(events, key=lambda e: (e[3], e[1], e[0]))
        rev = sorted(events, key=lambda e: (e[3], -e[1], -e[0]))
        for name in REPRESENTATIONS:
            a = build_stack(name, _history(fwd), RIG, CFG, (0, 300))
            b = build_stack(name, _history(rev), RIG, CFG, (0, 300))
            np.testing.assert_array_equal(a.data, b.data)


def test_events_after_interval_do_not_change_stacks():
    rng = np.random.default_rng(9)
    h, _ = _random_history(rng, max_events=40, t_max=500)
    later = [(int(rng.integers(0, 8)), int(rng.integers(0, 8)), 1, int(rng.integers(501, 900)))
             for _ in range(10)]
    extended = insert_sorted(h, [tuple(e) for e in later])
    for name in REPRESENTATIONS:
        a = build_stack(name, h, RIG, CFG, (0, 500))
        b = build_stack(name, extended, RIG, CFG, (0, 500))
        np.testing.assert_array_equal(a.data, b.data)


def test_builders_are_pure():
    rng = np.random.default_rng(17)
    h, _ = _random_history(rng)
    for name in REPRESENTATIONS:
        a = build_stack(name, h, RIG, CFG, (0, 1000))
        b = build_stack(name, h, RIG, CFG, (0, 1000))
        np.testing.assert_array_equal(a.data, b.data)


def test_empty_history_stacks():
    e = EventHistory.empty()
    assert np.all(stack_histogram(e, RIG).data == 0.0)
    assert np.all(stack_mdes(e, RIG, CFG).data == 0.5)
    assert np.all(stack_tore(e, RIG, CFG).data == 0.0)
    assert np.all(stack_timesurface(e, RIG, CFG).data == 0.0)
    assert np.all(stack_tencode(e, RIG).data == 0.0)
    assert stack_histogram(e, RIG).interval == (0, 0)


def test_ergo_matches_composed_primitives():
    rng = np.random.default_rng(23)
    for _ in range(10):
        h, events = _random_history(rng)
        s = stack_ergo(h, RIG, CFG, (0, 1000))
        assert s.channels == 12
        np.testing.assert_allclose(
            s.data, oracles.ref_ergo(events, RIG.width, RIG.height, 0, 1000), atol=1e-9
        )


def test_ergo_recipe_of_identical_specs_gives_identical_channels():
    recipe = (ChannelSpec("histogram", channel=0),) * 12
    h = _history([(1, 1, 1, 10), (2, 2, -1, 20)])
    s = stack_ergo(h, RIG, StackConfig(ergo_recipe=recipe))
    for c in range(1, 12):
        np.testing.assert_array_equal(s.data[:, :, c], s.data[:, :, 0])


def test_ergo_recipe_validation():
    h = _history([(0, 0, 1, 1)])
    with pytest.raises(ValueError, match="12"):
        stack_ergo(h, RIG, StackConfig(ergo_recipe=(ChannelSpec("histogram"),)))
    bad_channel = (ChannelSpec("histogram", channel=7),) + DEFAULT_ERGO_RECIPE[1:]
    with pytest.raises(ValueError, match="out of range"):
        stack_ergo(h, RIG, StackConfig(ergo_recipe=bad_channel))
    bad_source = (ChannelSpec("gradient"),) + DEFAULT_ERGO_RECIPE[1:]
    with pytest.raises(ValueError, match="unknown channel source"):
        stack_ergo(h, RIG, StackConfig(ergo_recipe=bad_source))


def test_build_stack_rejects_unknown_name():
    with pytest.raises(ValueError, match="unknown representation"):
        build_stack("surface", EventHistory.empty(), RIG)


def test_default_range_mode():
    assert default_range_mode("voxel") == "percentile"
    for name in ("histogram", "mdes", "tore", "timesurface", "tencode", "ergo"):
        assert default_range_mode(name) == "minmax"


def test_stack_range_minmax_and_percentile():
    vals = np.arange(100, dtype=np.float64).reshape(10, 10, 1)
    s = Stack(vals.copy(), "histogram", (0, 1))
    r = stack_range(s, s, "minmax")
    assert r == (0.0, 99.0, False)
    r = stack_range(s, s, "percentile", (5.0, 95.0))
    assert (r.lo, r.hi) == (5.0, 95.0)
    assert not r.widened


def test_stack_range_widens_degenerate():
    s = Stack(np.full((4, 4, 2), 3.0), "histogram", (0, 1))
    r = stack_range(s, s, "minmax")
    assert r == (3.0, 4.0, True)


def test_stack_range_validation():
    s = Stack(np.zeros((2, 2, 1)), "histogram", (0, 1))
    other = Stack(np.zeros((3, 2, 1)), "histogram", (0, 1))
    with pytest.raises(ValueError, match="unknown range mode"):
        stack_range(s, s, "auto")
    with pytest.raises(ValueError, match="equal shape"):
        stack_range(s, other)
    with pytest.raises(ValueError, match="percentiles"):
        stack_range(s, s, "percentile", (95.0, 5.0))


def test_all_representations_match_reference_on_random_histories():
    for k in range(120):
        rng = np.random.default_rng(1000 + k)
        h, events = _random_history(rng)
        if k % 3 == 0:
            interval = None
            lo, hi = (h.range if len(h) else (0, 0))
        else:
            lo = int(rng.integers(0, 500))
            hi = lo + int(rng.integers(0, 500))
            interval = (lo, hi)
        for name in REPRESENTATIONS:
            got = build_stack(name, h, RIG, CFG, interval)
            want = _reference(name, events, lo, hi)
            if name in ("histogram", "voxel"):
                np.testing.assert_array_equal(got.data, want)
            else:
                np.testing.assert_allclose(got.data, want, atol=1e-9)
