import math

import numpy as np
import pytest
from scipy import stats

from kmplab.events import EventStream, make_event, parse_seed, substream, write_trace_csv
from kmplab.graph import path_graph


@pytest.fixture
def g4():
    return path_graph(4, 1.0, 2.0)  # four edges


def test_same_seed_same_events(g4):
    a = EventStream(g4, 123)
    b = EventStream(g4, 123)
    ea = a.take(10_000)
    eb = b.take(10_000)
    for f in ("time", "edge", "U", "B", "V", "Uprime", "aux"):
        assert np.array_equal(getattr(ea, f), getattr(eb, f))


def test_take_matches_next_event(g4):
    a = EventStream(g4, 5)
    b = EventStream(g4, 5)
    block = a.take(5000)
    for k in range(5000):
        ev = b.next_event()
        assert ev.time == block.time[k] and ev.edge == block.edge[k] and ev.U == block.U[k]


def test_different_replicas_differ(g4):
    a = EventStream(g4, 1, replica=0).take(100)
    b = EventStream(g4, 1, replica=1).take(100)
    assert not np.array_equal(a.U, b.U)


def test_inter_event_mean(g4):
    block = EventStream(g4, 7).take(100_000)
    dt = np.diff(np.concatenate([[0.0], block.time]))
    se = 0.25 / math.sqrt(len(dt))
    assert abs(dt.mean() - 0.25) < 3 * se


def test_edge_uniform(g4):
    block = EventStream(g4, 8).take(100_000)
    frac = np.mean(block.edge == 2)
    assert abs(frac - 0.25) < 3 * math.sqrt(0.25 * 0.75 / 100_000)
    counts = np.bincount(block.edge, minlength=4)
    assert stats.chisquare(counts).pvalue > 0.01


def test_marks_independent(g4):
    block = EventStream(g4, 9).take(100_000)
    r = np.corrcoef(block.U, block.V)[0, 1]
    assert abs(r) < 3 / math.sqrt(100_000)
    assert block.U.min() >= 0 and block.U.max() < 1 and block.B.min() > 0


def test_boundary_mark_only_on_boundary_edges(g4):
    s = EventStream(g4, 3)
    for _ in range(200):
        ev = s.next_event()
        assert (ev.B is not None) == bool(g4.is_boundary_edge[ev.edge])


def test_events_until(g4):
    s = EventStream(g4, 11)
    assert s.events_until(0.0) == []
    evs = s.events_until(5.0)
    times = [e.time for e in evs]
    assert times == sorted(times) and all(t <= 5.0 for t in times)
    assert s.cursor == 5.0
    nxt = s.next_event()
    assert nxt.time > 5.0
    with pytest.raises(ValueError):
        s.events_until(math.inf)
    with pytest.raises(ValueError):
        s.events_until(1.0)


def test_poisson_counts(g4):
    t = 2.5
    counts = [len(EventStream(g4, 99, replica=r).events_until(t)) for r in range(2000)]
    mean = np.mean(counts)
    assert abs(mean - 4 * t) < 3 * math.sqrt(4 * t / 2000)


def test_per_edge_chi_square_over_horizon(g4):
    evs = EventStream(g4, 12).events_until(2500.0)  # about 10^4 events
    counts = np.bincount([e.edge for e in evs], minlength=4)
    assert counts.sum() >= 9000
    assert stats.chisquare(counts).pvalue > 0.01


def test_refresh_clocks():
    g = path_graph(3, 1.0, 2.0)
    block = EventStream(g, 4, boundary_refresh=True).take(60_000)
    refresh = block.edge < 0
    # 3 edge clocks + 2 vertex clocks
    assert abs(refresh.mean() - 0.4) < 3 * math.sqrt(0.24 / 60_000)
    assert set(np.unique(block.refresh[refresh])) == {0, 3}
    assert np.all(block.refresh[~refresh] == -1)


def test_lazy_extras_do_not_shift_eager_marks(g4):
    a, b = EventStream(g4, 21), EventStream(g4, 21)
    for _ in range(50):
        ea = a.next_event()
        ea.remix_points(5)
        ea.fresh_poisson(3.0)
        eb = b.next_event()
        assert (ea.time, ea.edge, ea.U, ea.V) == (eb.time, eb.edge, eb.U, eb.V)


def test_extras_cached():
    ev = EventStream(path_graph(3, 1, 1), 2).next_event()
    assert np.array_equal(ev.remix_points(4), ev.remix_points(4))
    pts = ev.fresh_poisson(2.0)
    assert np.all((pts >= 0) & (pts < 2.0))
    with pytest.raises(RuntimeError):
        make_event(0).remix_points(2)


def test_parse_seed():
    assert parse_seed("0x10") == 16
    assert parse_seed("42") == 42
    with pytest.raises(ValueError):
        parse_seed(-1)
    with pytest.raises(ValueError):
        parse_seed(2 ** 64)


def test_substreams_independent():
    a = substream(1, 0).random(10)
    b = substream(1, 1).random(10)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, substream(1, 0).random(10))


def test_trace_csv(tmp_path, g4):
    s = EventStream(g4, 1)
    evs = [s.next_event() for _ in range(5)]
    write_trace_csv(evs, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "time,edge,U,B,V"
    assert len(lines) == 6
    assert float(lines[1].split(",")[0]) == evs[0].time
