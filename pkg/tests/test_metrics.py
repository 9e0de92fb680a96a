import random

import pytest

from consim.engine import Event, ExecutionTrace, TimingParams
from consim.errors import IncompleteTrace
from consim.messages import Message, SizeModel
from consim.metrics import (byte_complexity, message_complexity,
                            peak_bandwidth, peak_bandwidth_by_phase,
                            report_from_trace, time_complexity)
from consim.topology import make_topology


def synthetic_trace(sends, d=0.01, n=2, outputs_at=None):
    """sends: list of (t, size_bits[, mtype]); builds a minimal valid trace."""
    g = make_topology("path", n, seed=0)
    events = []
    for i, item in enumerate(sends):
        t, size, mtype = (item + ("x.msg",))[:3] if len(item) == 2 else item
        msg = Message(mtype, g.uids[0], size)
        events.append(Event("send", t, g.uids[0], msg=msg, ref=i))
    for j, uid in enumerate(g.uids):
        events.append(Event("output", (outputs_at or [0.0] * n)[j], uid, value=0))
    events.sort(key=lambda e: e.t)
    sm = SizeModel(uid_bits=7, value_bits=768)
    return ExecutionTrace(events=events, outputs={u: 0 for u in g.uids},
                          config={"d": d, "topology": "path", "seed": 0},
                          timing=TimingParams(d=d, l=d / 10),
                          size_model=sm, graph=g)


def brute_force_peak(sends, d):
    """Independent oracle: sample the rate function at every window endpoint
    nudged inward by epsilon."""
    eps = d * 1e-6
    points = []
    for t, size, *_ in sends:
        points += [t + eps, t + d - eps]
    best = 0.0
    for p in points:
        rate = sum(size / d for t, size, *_ in sends if t <= p < t + d)
        best = max(best, rate)
    return best


def test_single_message_rate():
    tr = synthetic_trace([(0.0, 775)])
    assert peak_bandwidth(tr) == pytest.approx(77_500)


def test_two_overlapping_windows():
    tr = synthetic_trace([(0.0, 775), (0.005, 775)])
    assert peak_bandwidth(tr) == pytest.approx(155_000)


def test_touching_windows_do_not_stack():
    tr = synthetic_trace([(0.0, 775), (0.01, 775)])
    assert peak_bandwidth(tr) == pytest.approx(77_500)


def test_peak_at_least_largest_single_message():
    tr = synthetic_trace([(0.0, 100), (0.05, 9000), (0.2, 50)])
    assert peak_bandwidth(tr) >= 9000 / 0.01


def test_sweep_matches_brute_force_on_random_traces():
    rng = random.Random(7)
    d = 0.01
    for _ in range(100):
        sends = [(rng.uniform(0, 0.2), rng.randrange(8, 4096))
                 for _ in range(rng.randrange(1, 60))]
        tr = synthetic_trace(sends, d=d)
        assert peak_bandwidth(tr) == pytest.approx(brute_force_peak(sends, d))


def test_peak_invariant_under_same_timestamp_reordering():
    sends = [(0.0, 100, "a.x"), (0.0, 200, "b.y"), (0.0, 300, "c.z")]
    tr1 = synthetic_trace(sends)
    tr2 = synthetic_trace(list(reversed(sends)))
    assert peak_bandwidth(tr1) == peak_bandwidth(tr2)


def test_per_phase_attribution():
    tr = synthetic_trace([(0.0, 100, "p1.a"), (0.0, 200, "p2.b"),
                          (0.02, 400, "p1.c")])
    peaks = peak_bandwidth_by_phase(tr)
    assert peaks["p1"] == pytest.approx(40_000)
    assert peaks["p2"] == pytest.approx(20_000)


def test_time_message_byte_metrics():
    tr = synthetic_trace([(0.0, 100), (0.003, 60)], outputs_at=[0.04, 0.05])
    assert time_complexity(tr) == pytest.approx(0.05)
    assert message_complexity(tr) == 2
    assert byte_complexity(tr) == 160


def test_incomplete_trace_rejected():
    tr = synthetic_trace([(0.0, 100)])
    tr.events = [e for e in tr.events if e.kind != "output"][:1]
    with pytest.raises(IncompleteTrace):
        time_complexity(tr)


def test_report_row_shape():
    tr = synthetic_trace([(0.0, 775)], outputs_at=[0.01, 0.01])
    rep = report_from_trace(tr, algo="demo")
    row = rep.csv_row()
    assert row.startswith("demo,path,2,768,")
    assert rep.bytes == pytest.approx(775 / 8)
    assert rep.peak_bps == pytest.approx(77_500)
