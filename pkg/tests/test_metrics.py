import csv
import json
from fractions import Fraction

import pytest
from hypothesis import assume, given, strategies as st

from squashsim.corelsq import BodyLoad, SpeculationEpisode
from squashsim.errors import IoError, SchemaError, UndefinedMetric
from squashsim.metrics import (
    CCReport, EventKind as K, TraceEvent, cc_report, compute_cc, export_timeline, pair_attacks, render_cc,
    timeline_rows,
)
from squashsim.metrics.attacks import TIMELINE_COLUMNS
from simhelpers import make

COND, SECRET, TIMING = 0x20_0000, 0x10_0400, 0x100_0000


# --------------------------------------------------------------------- CC

def test_cc_table_rows():
    assert compute_cc((29, 29), 29, 2) == 1
    assert compute_cc((0, 0), 104, 2) == 0
    assert compute_cc((0, 15), 32, 2) == Fraction(5, 32) == Fraction(0.15625)
    # the alternative normalisation 15/(32*2) is not what the formula gives
    assert compute_cc((0, 15), 32, 2) != Fraction(15, 64)


def test_cc_rendering():
    assert render_cc(Fraction(5, 32)) == "0.156250"
    assert render_cc(Fraction(1)) == "1.000000"
    assert render_cc(Fraction(1, 3)) == "0.333333"
    r = CCReport.build((0, 15), 32, 2)
    assert r.cc_text == "0.156250"
    assert r.to_dict() == {"K": 2, "N": [0, 15], "N_total": 32, "cc": 0.15625}


def test_cc_errors():
    with pytest.raises(UndefinedMetric):
        compute_cc((0, 0), 0, 2)
    with pytest.raises(ValueError):
        compute_cc((1,), 3, 2)
    with pytest.raises(ValueError):
        compute_cc((4, 0), 3, 2)
    assert CCReport.build((0, 0), 0, 2).cc is None
    assert CCReport.build((0, 0), 0, 2).to_dict()["cc"] is None


@given(st.integers(1, 5), st.integers(1, 200))
def test_cc_all_levels_is_one(K, total):
    assert compute_cc([total] * K, total, K) == 1


@given(st.integers(1, 5), st.integers(1, 60), st.data())
def test_cc_bounds_and_zero(K, total, data):
    N = data.draw(st.lists(st.integers(0, total), min_size=K, max_size=K))
    cc = compute_cc(N, total, K)
    assert 0 <= cc <= 1
    assert (cc == 0) == all(n == 0 for n in N)


@given(st.integers(2, 5), st.integers(2, 60), st.data())
def test_cc_monotone_and_closer_levels_weigh_more(K, total, data):
    N = data.draw(st.lists(st.integers(0, total - 1), min_size=K, max_size=K))
    i = data.draw(st.integers(0, K - 2))
    j = data.draw(st.integers(i + 1, K - 1))
    base = compute_cc(N, total, K)
    up_i = list(N)
    up_i[i] += 1
    up_j = list(N)
    up_j[j] += 1
    assert compute_cc(up_i, total, K) > base
    assert compute_cc(up_j, total, K) > base
    assert compute_cc(up_i, total, K) - base >= compute_cc(up_j, total, K) - base


# ---------------------------------------------------------------- pairing

def run_episodes(name="c1", cancel=True, cached=True, n=3):
    s = make(name, cancel)
    s.memory.write_bytes(SECRET, b"\x41")
    c = s.cores[0]
    for no in range(1, n + 1):
        s.memsys.flush_block(COND)
        s.memsys.flush_block(TIMING + 0x41 * 4096)
        if cached:
            c.timed_probe(SECRET)
        body = [BodyLoad("access", addr=SECRET), BodyLoad("transmit", address_fn=lambda b: TIMING + b * 4096)]
        c.run_episode(SpeculationEpisode(no, COND, body))
    return s


def test_pairing_cancel_off_changes_both_levels():
    s = run_episodes(cancel=False)
    recs = pair_attacks(s.trace)
    assert [r.attack_no for r in recs] == [1, 2, 3]
    assert all(r.transmit_executed and r.levels_changed == {1, 2} for r in recs)
    rep = cc_report(recs, 2)
    assert rep.N_total == 3 and rep.cc == 1  # access hit L1, so only transmits count


def test_pairing_cancel_on_c1_changes_nothing():
    recs = pair_attacks(run_episodes().trace)
    assert all(r.transmit_executed and r.levels_changed == frozenset() for r in recs)
    assert cc_report(recs, 2).cc == 0


def test_pairing_cancel_on_c2_changes_l2_only():
    recs = pair_attacks(run_episodes("c2").trace)
    assert all(r.levels_changed == {2} for r in recs)
    assert cc_report(recs, 2).cc == Fraction(1, 3)


def test_uncached_secret_counts_access_only():
    recs = pair_attacks(run_episodes(cached=False).trace)
    rep = cc_report(recs, 2)
    assert all(not r.transmit_executed for r in recs)
    assert rep.N_total == 3 and rep.cc == 0


def test_levels_changed_implies_transmit_executed():
    for s in (run_episodes(cancel=False), run_episodes(cached=False, cancel=False)):
        for r in pair_attacks(s.trace):
            assert not r.levels_changed or r.transmit_executed


def test_attribution_soundness():
    s = run_episodes(cancel=False)
    squashed = {e.request_id for e in s.trace.of_kind(K.SQUASH)}
    for r in pair_attacks(s.trace):
        for e in r.transmit.events:
            if e.kind is K.FILL:
                assert set(e.chain) & squashed


def test_unlabeled_trace_raises():
    evs = [TraceEvent(0, 0, K.ISSUE_LOAD, 0, "core0", 0, 1, 1, None, 1)]
    with pytest.raises(SchemaError):
        pair_attacks(evs)
    assert pair_attacks([]) == []


def test_ticks_non_decreasing():
    s = run_episodes(cancel=False)
    ticks = [e.tick for e in s.trace]
    assert ticks == sorted(ticks)


def test_fill_preceded_by_missalloc():
    s = run_episodes("c2")
    seen = set()
    for e in s.trace:
        if e.kind is K.MISS_ALLOC:
            seen.add((e.cache, e.block))
        if e.kind is K.FILL:
            assert (e.cache, e.block) in seen


# ----------------------------------------------------------------- export

def five_event_attack():
    mk = lambda t, seq, kind, **kw: TraceEvent(t, seq, kind, episode=1, **kw)  # noqa: E731
    return [
        mk(100, 0, K.ISSUE_LOAD, level=0, cache="core0", block=0x40, request_id=1, label="condition"),
        mk(200, 1, K.SPEC_START, level=0, cache="core0"),
        mk(200, 2, K.ISSUE_LOAD, level=0, cache="core0", block=0x80, request_id=2, label="access"),
        mk(300, 3, K.MISS_ALLOC, level=1, cache="L1D0", block=0x80, request_id=2, chain=(2,)),
        mk(400, 4, K.SQUASH, level=0, cache="core0", block=0x80, request_id=2, label="access"),
    ]


def test_empty_trace_header_only(tmp_path):
    p = export_timeline([], [], tmp_path / "t.csv")
    assert p.read_text() == ",".join(TIMELINE_COLUMNS) + "\n"
    assert export_timeline([], [], tmp_path / "t.jsonl", "jsonl").read_text() == ""


def test_five_events_five_rows_rebased(tmp_path):
    evs = five_event_attack()
    recs = pair_attacks(evs)
    p = export_timeline(evs, recs, tmp_path / "t.csv")
    rows = list(csv.DictReader(p.open()))
    assert len(rows) == 5
    assert list(rows[0]) == list(TIMELINE_COLUMNS)
    spec = next(r for r in rows if r["event_kind"] == "SpecStart")
    assert spec["relative_tick"] == "0"
    assert rows[0]["relative_tick"] == "-100"
    assert rows[3]["block"] == "0x80"
    lines = (export_timeline(evs, recs, tmp_path / "t.jsonl", "jsonl")).read_text().splitlines()
    assert [json.loads(x)["relative_tick"] for x in lines] == [-100, 0, 0, 100, 200]


def test_reexport_is_byte_identical(tmp_path):
    a = run_episodes("c2")
    b = run_episodes("c2")
    pa = export_timeline(a.trace, pair_attacks(a.trace), tmp_path / "a.csv").read_bytes()
    pb = export_timeline(b.trace, pair_attacks(b.trace), tmp_path / "b.csv").read_bytes()
    assert pa == pb and len(pa.splitlines()) > 10


def test_timeline_rows_cover_only_episodes():
    s = run_episodes()
    rows = timeline_rows(s.trace, pair_attacks(s.trace))
    assert len(rows) == sum(1 for e in s.trace if e.episode is not None)


def test_export_io_error(tmp_path):
    bad = tmp_path / "nope" / "t.csv"
    with pytest.raises(IoError) as ei:
        export_timeline([], [], bad)
    assert ei.value.path == str(bad)


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        export_timeline([], [], tmp_path / "t.xml", "xml")


@given(st.lists(st.integers(0, 10), min_size=2, max_size=2), st.integers(10, 20))
def test_report_matches_compute(N, total):
    assume(all(n <= total for n in N))
    assert CCReport.build(N, total, 2).cc == compute_cc(N, total, 2)
