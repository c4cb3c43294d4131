import numpy as np
import pytest

from components.dvs_events import Event, EventStream, Label, Polarity, SensorGeometry
from components.eval_metrics import MetricsError
from components.baseline_filters import (
    BaselineFilter,
    OnfMemory,
    Sae,
    baf_classify,
    default_tau_grid,
    filter_decisions,
    onf_classify,
    roc_by_tau,
    stcf_classify,
    support_statistics,
)

GEOMETRY = SensorGeometry(16, 12)


def _stream(rows):
    return EventStream.from_events(
        GEOMETRY, [Event(x, y, t, p, Label.SIGNAL) for x, y, t, p in rows]
    )


def _brute_force(stream, tau, k):
    """
    Support count over distinct neighbour pixels, from the full event history.

    A pixel supports event i when any earlier event of it lies in ``[t_i - tau, t_i]``,
    which is the same as its latest earlier event doing so.
    """
    x = stream.x.astype(np.int64)
    y = stream.y.astype(np.int64)
    t = stream.t.astype(np.int64)
    pixel = y * stream.geometry.width + x
    decisions = np.zeros(len(stream), dtype=bool)
    for i in range(len(stream)):
        lo = int(np.searchsorted(t, t[i] - tau, side="left"))
        near = (
            (np.abs(x[lo:i] - x[i]) <= 1)
            & (np.abs(y[lo:i] - y[i]) <= 1)
            & (pixel[lo:i] != pixel[i])
        )
        decisions[i] = len(np.unique(pixel[lo:i][near])) >= k
    return decisions


def test_first_event_is_noise():
    sae = Sae(GEOMETRY)
    assert baf_classify(sae, Event(3, 3, 0, Polarity.POSITIVE), 1e9) == Label.NOISE
    mem = OnfMemory(GEOMETRY)
    assert onf_classify(mem, Event(3, 3, 0, Polarity.POSITIVE), 1e9) == Label.NOISE


def test_window_is_closed():
    for tau, expected in ((100, Label.SIGNAL), (99.5, Label.NOISE)):
        sae = Sae(GEOMETRY)
        baf_classify(sae, Event(4, 4, 0, Polarity.POSITIVE), tau)
        assert baf_classify(sae, Event(5, 4, 100, Polarity.POSITIVE), tau) == expected


def test_own_pixel_does_not_support():
    sae = Sae(GEOMETRY)
    baf_classify(sae, Event(4, 4, 0, Polarity.POSITIVE), 1000)
    assert baf_classify(sae, Event(4, 4, 1, Polarity.POSITIVE), 1000) == Label.NOISE


def test_frame_corner_has_no_phantom_neighbours():
    sae = Sae(GEOMETRY)
    baf_classify(sae, Event(15, 11, 0, Polarity.POSITIVE), 1000)
    assert baf_classify(sae, Event(0, 0, 1, Polarity.POSITIVE), 1000) == Label.NOISE
    assert np.isinf(sae.neighbour_ages(Event(0, 0, 2, Polarity.POSITIVE))).all()


@pytest.mark.parametrize("k", [1, 2, 4])
def test_stcf_matches_brute_force(make_stream, k):
    stream = make_stream(GEOMETRY, 10_000, 1_000_000, seed=k)
    decisions = filter_decisions(BaselineFilter.STCF, stream, 5_000, k=k)
    expected = _brute_force(stream, 5_000, k)
    assert 0 < expected.sum() < len(stream)
    assert np.array_equal(decisions, expected)


def test_baf_matches_brute_force(make_stream):
    stream = make_stream(GEOMETRY, 10_000, 2_000_000, seed=11)
    assert np.array_equal(filter_decisions("baf", stream, 3_000), _brute_force(stream, 3_000, 1))


def test_stcf_with_k_one_is_baf(make_stream):
    stream = make_stream(GEOMETRY, 10_000, 1_000_000, seed=21)
    assert np.array_equal(
        filter_decisions("stcf", stream, 2_000, k=1),
        filter_decisions("baf", stream, 2_000),
    )


@pytest.mark.parametrize("neighbours, expected", [(4, Label.SIGNAL), (3, Label.NOISE)])
def test_stcf_needs_k_supporters(neighbours, expected):
    sae = Sae(GEOMETRY)
    offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)][:neighbours]
    for t, (dx, dy) in enumerate(offsets):
        stcf_classify(sae, Event(5 + dx, 5 + dy, t, Polarity.POSITIVE), 100, 4)
    assert stcf_classify(sae, Event(5, 5, 10, Polarity.POSITIVE), 100, 4) == expected


def test_polarity_split():
    rows = [(5, 5, 0, 1), (6, 5, 10, 0)]
    merged = filter_decisions("baf", _stream(rows), 100)
    split = filter_decisions("baf", _stream(rows), 100, polarity_split=True)
    assert merged.tolist() == [False, True]
    assert split.tolist() == [False, False]


@pytest.mark.parametrize(
    "second, expected",
    [((6, 5), True), ((5, 6), True), ((6, 6), False), ((7, 5), False)],
)
def test_onf_row_and_column_adjacency(second, expected):
    rows = [(5, 5, 0, 1), (*second, 10, 1)]
    assert filter_decisions("onf", _stream(rows), 100).tolist() == [False, expected]


def test_onf_evicts_the_older_entry():
    rows = [(0, 3, 0, 1), (10, 3, 1, 1), (20, 3, 2, 1), (1, 3, 3, 1)]
    # x=0 was evicted by x=20, so x=1 finds no adjacent row entry
    assert filter_decisions("onf", _stream(rows), 100).tolist() == [False, False, False, False]

    mem = OnfMemory(GEOMETRY)
    for x, y, t, p in rows[:3]:
        mem.update(Event(x, y, t, p))
    assert sorted(mem.row_x[3].tolist()) == [10, 20]


def test_onf_tie_replaces_slot_zero():
    mem = OnfMemory(GEOMETRY)
    mem.update(Event(4, 2, 7, Polarity.POSITIVE))
    assert mem.row_x[2].tolist() == [4, 0]
    assert mem.row_t[2, 0] == 7


def test_onf_age_window_is_closed():
    rows = [(5, 5, 0, 1), (6, 5, 50, 1)]
    assert filter_decisions("onf", _stream(rows), 50).tolist() == [False, True]
    assert filter_decisions("onf", _stream(rows), 49).tolist() == [False, False]


@pytest.mark.parametrize("filter", list(BaselineFilter))
def test_single_replay_matches_fresh_replays(make_stream, filter):
    stream = make_stream(GEOMETRY, 1_000, 300_000, seed=31)
    taus = default_tau_grid(100, 100_000, 7)
    by_ages = roc_by_tau(filter, stream, taus, method="ages")
    by_replay = roc_by_tau(filter, stream, taus, method="replay", max_workers=2)
    assert np.array_equal(by_ages.points, by_replay.points)


@pytest.mark.parametrize("filter", list(BaselineFilter))
def test_tau_zero_keeps_nothing(make_stream, filter):
    stream = make_stream(GEOMETRY, 500, 100_000, seed=41, distinct_times=True)
    assert not filter_decisions(filter, stream, 0).any()
    curve = roc_by_tau(filter, stream, [0.0])
    assert (0.0, 0.0) in [tuple(p) for p in curve.points.tolist()]


@pytest.mark.parametrize("filter", list(BaselineFilter))
def test_tau_zero_counts_equal_timestamps(filter):
    # age 0 lies inside the closed window, so a same-microsecond neighbour supports
    rows = [(5, 5, 7, 1), (6, 5, 7, 1), (8, 8, 9, 1)]
    assert filter_decisions(filter, _stream(rows), 0, k=1).tolist() == [False, True, False]
    ages = support_statistics(filter, _stream(rows), k=1)
    assert ages[1] == 0.0


@pytest.mark.parametrize("base", [2**63, 2**64 - 100])
@pytest.mark.parametrize("filter", list(BaselineFilter))
def test_timestamps_beyond_the_signed_range(filter, base):
    rows = [(5, 5, base + 5, 1), (6, 5, base + 15, 1), (6, 6, base + 90, 1)]
    decisions = filter_decisions(filter, _stream(rows), 100, k=1)
    assert decisions[:2].tolist() == [False, True]
    ages = support_statistics(filter, _stream(rows), k=1)
    assert ages[0] == np.inf
    assert ages[1] == 10.0


def test_sae_tracks_written_pixels():
    sae = Sae(GEOMETRY)
    assert not sae.written.any()
    sae.update(Event(3, 4, 2**63 + 1, Polarity.NEGATIVE))
    assert sae.written[4, 3]
    assert int(sae.last_t[4, 3]) == 2**63 + 1
    assert sae.written.sum() == 1


@pytest.mark.parametrize("filter", list(BaselineFilter))
def test_larger_tau_keeps_a_superset(make_stream, filter):
    stream = make_stream(GEOMETRY, 800, 200_000, seed=51)
    small = filter_decisions(filter, stream, 1_000)
    large = filter_decisions(filter, stream, 20_000)
    assert np.all(large[small])
    assert np.array_equal(filter_decisions(filter, stream, 1_000), small)


def test_support_statistics_edge_cases(make_stream):
    stream = make_stream(GEOMETRY, 200, 50_000, seed=61)
    assert np.isinf(support_statistics("stcf", stream, k=9)).all()
    with pytest.raises(ValueError):
        support_statistics("stcf", stream, k=0)
    with pytest.raises(ValueError):
        BaselineFilter("knn")


def test_default_tau_grid():
    grid = default_tau_grid()
    assert len(grid) == 31
    assert grid[0] == pytest.approx(100)
    assert grid[-1] == pytest.approx(1e6)
    ratios = grid[1:] / grid[:-1]
    assert np.allclose(ratios, ratios[0])


def test_sweep_rejects_unlabeled(make_stream):
    stream = make_stream(GEOMETRY, 50, 10_000, seed=71, labeled=False)
    with pytest.raises(MetricsError):
        roc_by_tau("baf", stream)


def test_sweep_is_sorted_and_anchored(make_stream):
    stream = make_stream(GEOMETRY, 1_000, 200_000, seed=81)
    curve = roc_by_tau("stcf", stream, k=2)
    assert len(curve.points) == 33
    assert np.all(np.diff(curve.fpr) >= 0)
    assert tuple(curve.points[0]) == (0.0, 0.0)
    assert tuple(curve.points[-1]) == (1.0, 1.0)
    assert 0.0 <= curve.auc <= 1.0
