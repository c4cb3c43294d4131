import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from components.dvs_events import (
    EVENT_DTYPE,
    Event,
    EventOrderError,
    EventParseError,
    EventStream,
    EventValidationError,
    GeometryMismatchError,
    Label,
    Polarity,
    SensorGeometry,
    merge_streams,
    read_events,
    relabel,
    write_events,
)


def _stream(geometry, rows):
    return EventStream.from_events(geometry, [Event(*row) for row in rows])


def test_packed_layout_is_bit_exact(tmp_path):
    geometry = SensorGeometry(346, 260)
    stream = _stream(geometry, [(1, 2, 3, Polarity.POSITIVE, Label.SIGNAL), (345, 259, 2**40, 0, 0)])
    path = tmp_path / "events.evt"
    write_events(stream, path)

    data = path.read_bytes()
    assert EVENT_DTYPE.itemsize == 14
    assert len(data) == 16 + 2 * 14
    assert data[:4] == b"EVD1"
    assert struct.unpack_from("<HHQ", data, 4) == (346, 260, 2)
    assert struct.unpack_from("<HHQBB", data, 16) == (1, 2, 3, 1, 1)
    assert struct.unpack_from("<HHQBB", data, 30) == (345, 259, 2**40, 0, 0)


def test_csv_header_and_rows(tmp_path):
    geometry = SensorGeometry(4, 3)
    stream = _stream(geometry, [(0, 0, 5, 1, 1), (3, 2, 7, 0, 2)])
    path = tmp_path / "events.csv"
    write_events(stream, path)

    lines = path.read_text().splitlines()
    assert lines == ["# evdenoise-csv v1 W=4 H=3", "0,0,5,1,1", "3,2,7,0,2"]
    assert read_events(path) == stream


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(0, 9),
            st.integers(0, 7),
            st.integers(0, 2**63),
            st.integers(0, 1),
            st.integers(0, 2),
        ),
        max_size=40,
    ),
    st.sampled_from(["csv", "packed"]),
)
def test_write_then_read_preserves_stream(tmp_path_factory, rows, fmt):
    geometry = SensorGeometry(10, 8)
    rows = sorted(rows, key=lambda row: row[2])
    stream = _stream(geometry, rows)
    path = tmp_path_factory.mktemp("io") / f"events.{fmt}"
    write_events(stream, path, fmt)
    assert read_events(path, fmt) == stream


def test_csv_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# evdenoise-csv v1 W=4 H=4\n0,0,1,1,1\n1,1,x,0,0\n")
    with pytest.raises(EventParseError) as info:
        read_events(path)
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_csv_missing_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,0,1,1,1\n")
    with pytest.raises(EventParseError):
        read_events(path)


def test_csv_out_of_order(tmp_path):
    path = tmp_path / "order.csv"
    path.write_text("# evdenoise-csv v1 W=4 H=4\n0,0,10,1,1\n1,1,9,0,0\n")
    with pytest.raises(EventOrderError):
        read_events(path)


def test_csv_out_of_range_coordinate(tmp_path):
    path = tmp_path / "range.csv"
    path.write_text("# evdenoise-csv v1 W=4 H=4\n4,0,10,1,1\n")
    with pytest.raises(EventValidationError):
        read_events(path)


def test_packed_bad_magic_and_truncation(tmp_path):
    stream = _stream(SensorGeometry(4, 4), [(0, 0, 1, 1, 1)])
    path = tmp_path / "events.evt"
    write_events(stream, path)
    data = path.read_bytes()

    (tmp_path / "magic.evt").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(EventParseError):
        read_events(tmp_path / "magic.evt")

    (tmp_path / "short.evt").write_bytes(data[:-1])
    with pytest.raises(EventParseError) as info:
        read_events(tmp_path / "short.evt")
    assert info.value.offset is not None


def test_stream_rejects_bad_events():
    geometry = SensorGeometry(4, 4)
    with pytest.raises(EventValidationError):
        _stream(geometry, [(4, 0, 1, 1, 1)])
    with pytest.raises(EventOrderError):
        _stream(geometry, [(0, 0, 5, 1, 1), (0, 0, 4, 1, 1)])
    with pytest.raises(EventValidationError):
        SensorGeometry(0, 4)


def test_stream_is_read_only():
    stream = _stream(SensorGeometry(4, 4), [(0, 0, 1, 1, 1)])
    with pytest.raises(ValueError):
        stream.events["x"][0] = 3


def test_merge_is_stable_and_sorted():
    geometry = SensorGeometry(4, 4)
    a = _stream(geometry, [(0, 0, 1, 1, 1), (1, 0, 5, 1, 1)])
    b = _stream(geometry, [(2, 0, 1, 0, 0), (3, 0, 3, 0, 0)])
    merged = merge_streams(a, b)
    assert merged.t.tolist() == [1, 1, 3, 5]
    # equal timestamps keep the first stream's event first
    assert merged.x.tolist() == [0, 2, 3, 1]


def test_merge_matches_a_stable_sort(make_stream, small_geometry):
    a = make_stream(small_geometry, 300, 5_000, seed=1)
    b = make_stream(small_geometry, 200, 5_000, seed=2)
    merged = merge_streams(a, b)
    both = np.concatenate([a.events, b.events])
    expected = both[np.argsort(both["t"], kind="stable")]
    assert np.array_equal(merged.events, expected)


def test_merge_geometry_mismatch():
    a = EventStream(SensorGeometry(4, 4))
    b = EventStream(SensorGeometry(5, 4))
    with pytest.raises(GeometryMismatchError):
        merge_streams(a, b)


def test_slice_count_and_relabel(make_stream, small_geometry):
    stream = make_stream(small_geometry, 500, 10_000, seed=3)
    window = stream.slice_time(2_000, 4_000)
    assert np.all((window.t >= 2_000) & (window.t < 4_000))
    assert len(window) == int(np.sum((stream.t >= 2_000) & (stream.t < 4_000)))

    counts = stream.count_by_label()
    assert counts[Label.SIGNAL] + counts[Label.NOISE] == len(stream)
    assert counts[Label.UNLABELED] == 0

    noise = relabel(stream, Label.NOISE)
    assert noise.count_by_label()[Label.NOISE] == len(stream)
    assert np.array_equal(noise.t, stream.t)


def test_iteration_yields_events():
    stream = _stream(SensorGeometry(4, 4), [(1, 2, 3, 1, 0)])
    assert list(stream) == [Event(1, 2, 3, Polarity.POSITIVE, Label.NOISE)]
    assert stream.span_us == 0
    assert stream.is_fully_labeled()
    assert not _stream(SensorGeometry(4, 4), [(0, 0, 1, 1, 2)]).is_fully_labeled()
