"""File formats: byte-exact round trips and malformed-input diagnostics."""

import numpy as np
import pytest

from evfuse import DepthMeasurement, DisparityMap, EventHistory, SparseDisparityGrid, Stack
from evfuse.formats import (
    FormatError,
    disparity_to_stack,
    grid_to_stack,
    read_depth_csv,
    read_events,
    read_events_csv,
    read_tensor,
    stack_to_disparity,
    stack_to_grid,
    write_depth_csv,
    write_events,
    write_tensor,
)


def _history(n=40, seed=0, grid=32):
    rng = np.random.default_rng(seed)
    return EventHistory.from_unsorted(
        rng.integers(0, grid, n),
        rng.integers(0, grid, n),
        rng.choice((-1, 1), n),
        rng.integers(0, 10_000, n),
    )


def test_event_files_round_trip_byte_identically(tmp_path):
    h = _history()
    p1, p2 = tmp_path / "a.events", tmp_path / "b.events"
    write_events(p1, h, 32, 32)
    back, dims = read_events(p1)
    assert dims == (32, 32)
    assert back == h
    write_events(p2, back, 32, 32)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_event_file_round_trips(tmp_path):
    p = tmp_path / "empty.events"
    write_events(p, EventHistory.empty(), 8, 4)
    back, dims = read_events(p)
    assert len(back) == 0 and dims == (8, 4)
    assert p.stat().st_size == 14


def test_write_events_validates_grid(tmp_path):
    h = EventHistory([9], [0], [1], [5])
    with pytest.raises(ValueError, match="exceed"):
        write_events(tmp_path / "x.events", h, 8, 8)


def test_read_events_header_diagnostics(tmp_path):
    p = tmp_path / "bad.events"
    p.write_bytes(b"EVST")
    with pytest.raises(FormatError, match="truncated header at byte 0"):
        read_events(p)
    p.write_bytes(b"NOTMAGIC" + bytes(6))
    with pytest.raises(FormatError, match="bad magic at byte 0"):
        read_events(p)
    p.write_bytes(b"EVSTREAM" + (9).to_bytes(2, "little") + bytes(4))
    with pytest.raises(FormatError, match="unsupported version 9 at byte 8"):
        read_events(p)


def test_read_events_record_diagnostics(tmp_path):
    p = tmp_path / "bad.events"
    good = tmp_path / "good.events"
    write_events(good, EventHistory([1, 2], [1, 2], [1, -1], [10, 20]), 8, 8)
    blob = bytearray(good.read_bytes())

    p.write_bytes(blob[:-5])
    with pytest.raises(FormatError, match="truncated record at byte 27"):
        read_events(p)

    bad_pol = bytearray(blob)
    bad_pol[14 + 12] = 7
    p.write_bytes(bad_pol)
    with pytest.raises(FormatError, match="invalid polarity 7 at byte 26"):
        read_events(p)

    regress = bytearray(blob)
    regress[14 + 13 : 14 + 13 + 8] = (5).to_bytes(8, "little")
    p.write_bytes(regress)
    with pytest.raises(FormatError, match="timestamps regress at byte 27"):
        read_events(p)

    off_grid = bytearray(blob)
    off_grid[14 + 13 + 8 : 14 + 13 + 10] = (200).to_bytes(2, "little")
    p.write_bytes(off_grid)
    with pytest.raises(FormatError, match="coordinates outside 8x8 grid at byte 35"):
        read_events(p)


def test_events_csv_round_trip(tmp_path):
    h = _history(seed=1)
    p = tmp_path / "events.csv"
    with open(p, "w") as f:
        f.write("t_us,x,y,p\n")
        for e in h:
            f.write(f"{e.t},{e.x},{e.y},{e.p}\n")
    assert read_events_csv(p) == h
    bad = tmp_path / "bad.csv"
    bad.write_text("time,x,y,p\n")
    with pytest.raises(FormatError, match="expected header"):
        read_events_csv(bad)


def test_depth_csv_round_trip(tmp_path):
    meas = [
        DepthMeasurement(3, 4, 12.5, 100),
        DepthMeasurement(0, 0, 0.1234567890123, 0),
    ]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_depth_csv(p1, meas)
    back = read_depth_csv(p1)
    assert back == meas
    write_depth_csv(p2, back)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().splitlines()[0] == "x,y,z_m,t_us"


def test_depth_csv_diagnostics(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y,depth,t_us\n")
    with pytest.raises(FormatError, match="expected header"):
        read_depth_csv(p)
    p.write_text("x,y,z_m,t_us\n1,2,3.0,0\n1,2,oops,0\n")
    with pytest.raises(FormatError, match="bad depth row at line 3"):
        read_depth_csv(p)


def test_tensor_round_trip_byte_identically(tmp_path):
    rng = np.random.default_rng(2)
    stack = Stack(rng.uniform(0.0, 3.0, (6, 8, 2)).astype(np.float32).astype(np.float64),
                  "voxel", (100, 900))
    p1, p2 = tmp_path / "a.evt", tmp_path / "b.evt"
    write_tensor(p1, stack)
    back = read_tensor(p1)
    assert back.kind == "voxel"
    assert back.interval == (100, 900)
    np.testing.assert_array_equal(back.data, stack.data)
    write_tensor(p2, back)
    assert p1.read_bytes() == p2.read_bytes()


def test_tensor_header_is_readable_text(tmp_path):
    p = tmp_path / "t.evt"
    write_tensor(p, Stack(np.zeros((2, 3, 1)), "histogram", (0, 5)))
    head = p.read_bytes().split(b"data\n")[0].decode("ascii")
    assert head.splitlines() == ["EVTENSOR 1", "kind histogram", "shape 2 3 1", "interval 0 5"]


def test_tensor_diagnostics(tmp_path):
    p = tmp_path / "bad.evt"
    p.write_bytes(b"NOPE")
    with pytest.raises(FormatError, match="bad magic at byte 0"):
        read_tensor(p)
    p.write_bytes(b"EVTENSOR 1\nkind histogram\n")
    with pytest.raises(FormatError, match="terminator 'data' missing"):
        read_tensor(p)
    p.write_bytes(b"EVTENSOR 2\nkind h\nshape 1 1 1\ninterval 0 1\ndata\n" + bytes(4))
    with pytest.raises(FormatError, match="unsupported version"):
        read_tensor(p)
    p.write_bytes(b"EVTENSOR 1\nkind h\nshape 1 one 1\ninterval 0 1\ndata\n" + bytes(4))
    with pytest.raises(FormatError, match="malformed header fields"):
        read_tensor(p)
    p.write_bytes(b"EVTENSOR 1\nkind h\nshape 2 2 1\ninterval 0 1\ndata\n" + bytes(4))
    with pytest.raises(FormatError, match="payload is 4 bytes"):
        read_tensor(p)


def test_disparity_map_tensor_conversion(tmp_path):
    data = np.array([[1.0, 2.0], [0.0, 3.5]])
    valid = np.array([[True, True], [False, True]])
    dm = DisparityMap(data, valid)
    stack = disparity_to_stack(dm)
    assert stack.kind == "disparity" and stack.channels == 2
    p = tmp_path / "d.evt"
    write_tensor(p, stack)
    back = stack_to_disparity(read_tensor(p))
    np.testing.assert_array_equal(back.valid, valid)
    np.testing.assert_array_equal(back.data[valid], data[valid])
    with pytest.raises(FormatError, match="not a disparity map"):
        stack_to_disparity(Stack(np.zeros((2, 2, 1)), "disparity", (0, 0)))


def test_hint_grid_tensor_conversion(tmp_path):
    disp = np.zeros((3, 4))
    valid = np.zeros((3, 4), bool)
    disp[1, 2], valid[1, 2] = 5.25, True
    grid = SparseDisparityGrid(disp, valid, t_z=777)
    stack = grid_to_stack(grid)
    assert stack.kind == "hints"
    assert stack.interval == (777, 777)
    p = tmp_path / "g.evt"
    write_tensor(p, stack)
    back = stack_to_grid(read_tensor(p))
    assert back.t_z == 777
    np.testing.assert_array_equal(back.valid, valid)
    assert back.disparity[1, 2] == 5.25
    with pytest.raises(FormatError, match="not a hint grid"):
        stack_to_grid(Stack(np.zeros((2, 2, 3)), "hints", (0, 0)))
