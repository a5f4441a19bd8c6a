import pytest
from hypothesis import given, settings, strategies as st

from squashsim.corelsq import BodyLoad, SlotState, SpeculationEpisode
from squashsim.errors import ConfigError, SimulationError
from squashsim.memsys import ReqKind
from squashsim.metrics.trace import EventKind as K
from simhelpers import events, issue_at, make, squash_at

COND = 0x20_0000
SECRET = 0x10_0400
TIMING = 0x100_0000


def episode(no=1, **kw):
    body = [BodyLoad("access", addr=SECRET),
            BodyLoad("transmit", address_fn=lambda b: TIMING + b * 4096)]
    return SpeculationEpisode(no, COND, body, **kw)


def setup(name="c1", cancel=True, cached=False, secret=0x41):
    s = make(name, cancel)
    s.memory.write_bytes(SECRET, bytes([secret]))
    if cached:
        s.cores[0].timed_probe(SECRET)
    return s


# ---------------------------------------------------------------- episodes

def test_uncached_secret_transmit_never_executes():
    s = setup()
    out = s.cores[0].run_episode(episode())
    assert out.executed_access and not out.executed_transmit
    assert out.slots["access"].state is SlotState.SQUASHED
    assert len(out.cancellations) == 1
    assert s.memsys.quiescent()


def test_cached_secret_c1_cancellations_beat_response():
    s = setup(cached=True)
    out = s.cores[0].run_episode(episode())
    tx = out.slots["transmit"]
    assert out.slots["access"].state is SlotState.COMPLETED
    assert tx.state is SlotState.SQUASHED
    assert [c.request_id for c in out.cancellations] == [tx.request_id]
    assert s.memsys.resident_levels(TIMING + 0x41 * 4096) == set()
    recv = {e.cache for e in events(s, K.CANCEL_RECV, rid=tx.request_id)}
    assert recv == {"L1D0", "L2"}
    assert not events(s, K.FILL, rid=tx.request_id)


def test_cached_secret_c2_response_beats_cancellation_at_l2():
    s = setup("c2", cached=True)
    out = s.cores[0].run_episode(episode())
    assert out.executed_transmit
    assert s.memsys.resident_levels(TIMING + 0x41 * 4096) == {2}


def test_cancel_off_transmit_fills_both_levels():
    s = setup(cancel=False, cached=True)
    out = s.cores[0].run_episode(episode())
    assert out.executed_transmit and out.cancellations == []
    assert s.memsys.resident_levels(TIMING + 0x41 * 4096) == {1, 2}


def test_dependency_order():
    s = setup(cached=True)
    out = s.cores[0].run_episode(episode(resolve_latency_cycles=400))
    acc, tx = out.slots["access"], out.slots["transmit"]
    assert tx.issue_tick > acc.complete_tick
    assert tx.issue_tick - acc.complete_tick == s.config.clock.cycles(2)


def test_correct_prediction_never_squashes():
    s = setup(cached=True)
    out = s.cores[0].run_episode(episode(mispredicted=False))
    assert all(sl.state is SlotState.COMPLETED for sl in out.slots.values())
    assert not events(s, K.SQUASH)


def test_spec_start_after_dispatch_delay():
    s = setup()
    out = s.cores[0].run_episode(episode(dispatch_delay_cycles=7))
    assert out.spec_start_tick - out.start_tick == s.config.clock.cycles(7)


def test_squash_before_dispatch_issues_nothing():
    s = setup()
    s.cores[0].timed_probe(COND)  # condition hits: resolves at 4 + 10 cycles
    out = s.cores[0].run_episode(episode(dispatch_delay_cycles=40))
    assert out.slots == {} and out.spec_start_tick is None


@pytest.mark.parametrize("kw", [dict(compute_cycles=0), dict(resolve_latency_cycles=-1),
                                dict(dispatch_delay_cycles=-3)])
def test_episode_validation(kw):
    with pytest.raises(ConfigError):
        episode(**kw)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 300), st.integers(0, 300), st.sampled_from(["c1", "c2"]), st.booleans())
def test_window_monotonicity(r1, r2, name, cached):
    lo, hi = sorted((r1, r2))
    a = setup(name, cached=cached).cores[0].run_episode(episode(resolve_latency_cycles=lo))
    b = setup(name, cached=cached).cores[0].run_episode(episode(resolve_latency_cycles=hi))
    assert not a.executed_transmit or b.executed_transmit


# ------------------------------------------------------------------ squash

def test_one_outstanding_load_one_cancellation():
    s = make()
    h = issue_at(s, 0, COND, speculative=True)
    s.engine.schedule(s.config.clock.cycles(5), lambda _: box.extend(s.cores[0].squash([h.slot.inst_id])))
    box = []
    s.run()
    assert len(box) == 1 and box[0].request_id == h.rid
    assert h.slot.state is SlotState.SQUASHED


def test_completed_load_zero_cancellations():
    s = make()
    c = s.cores[0]
    c.timed_probe(COND)
    iid = s.new_inst_id()
    slot = c.issue(COND, inst_id=iid, speculative=True)
    s.run()
    assert slot.state is SlotState.COMPLETED
    assert c.squash([iid]) == []
    assert slot.state is SlotState.COMPLETED  # terminal


def test_mixed_slots():
    s = make()
    c = s.cores[0]
    c.timed_probe(COND)
    done = c.issue(COND, inst_id=s.new_inst_id(), speculative=True)
    s.run()
    now = s.config.clock.to_cycles(s.engine.now())
    p = issue_at(s, now, SECRET, speculative=True)
    q = issue_at(s, now, TIMING, speculative=True)
    got = []
    s.engine.schedule(s.engine.now() + s.config.clock.cycles(3),
                      lambda _: got.extend(c.squash([done.inst_id, p.slot.inst_id, q.slot.inst_id])))
    s.run()
    assert sorted(x.request_id for x in got) == sorted([p.rid, q.rid])


def test_squash_unknown_instruction():
    s = make()
    with pytest.raises(SimulationError):
        s.cores[0].squash([999])


def test_cancel_off_squash_sends_nothing():
    s = make(cancel=False)
    h = issue_at(s, 0, COND, speculative=True)
    squash_at(s, 5, h)
    s.run()
    assert h.slot.state is SlotState.SQUASHED
    assert not events(s, K.CANCEL_SENT) and s.cores[0].cancellations_sent == 0
    assert s.memsys.resident_levels(COND) == {1, 2}


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 200), st.integers(0, 400), st.integers(0, 15)), min_size=1, max_size=12))
def test_one_cancellation_rule(ops):
    s = make()
    for issue, delay, blk in ops:
        h = issue_at(s, issue, TIMING + blk * 4096, speculative=True)
        squash_at(s, issue + delay, h)
    s.run()
    c = s.cores[0]
    assert c.cancellations_sent == c.squash_transitions
    assert len(events(s, K.CANCEL_SENT, cache="core0")) == c.squash_transitions
    assert len([e for e in events(s, K.SQUASH) if e.detail == "outstanding"]) == c.squash_transitions


def test_squashed_slot_ignores_late_response():
    s = make(cancel=False)
    h = issue_at(s, 0, COND, speculative=True)
    squash_at(s, 5, h)
    s.run()
    assert h.slot.data is None and h.slot.complete_tick is None


# ------------------------------------------------------------------ probes

def test_timed_probe_latencies_c1():
    s = make()
    c = s.cores[0]
    assert c.timed_probe(COND) == 169
    assert c.timed_probe(COND) == 4
    s.memsys.evict_block_from_level(1, COND)
    assert c.timed_probe(COND) == 18
    s.memsys.flush_block(COND)
    assert c.timed_probe(COND) >= 150
    assert events(s, K.PROBE_RESULT)[0].detail == "169"


def test_store_then_load_sees_data():
    s = make()
    c = s.cores[0]
    c.store(SECRET + 1, b"\x99")
    iid = s.new_inst_id()
    slot = c.issue(SECRET + 1, inst_id=iid)
    s.run()
    assert slot.value == 0x99


def test_speculative_store_rejected():
    s = make()
    with pytest.raises(SimulationError):
        s.cores[0].issue(SECRET, inst_id=1, speculative=True, wdata=b"x")


# ------------------------------------------------------------------- fetch

def test_mispredicted_fetch_cancelled():
    s = make()
    slot = s.cores[0].fetch_with_cancel(0x5000, mispredicted=True)
    s.run()
    assert slot.state is SlotState.SQUASHED and slot.kind is ReqKind.INST_FETCH
    assert [e.cache for e in events(s, K.CANCEL_RECV)] == ["L1I0", "L2"]
    assert not s.memsys.l1i[0].has_line(0x5000)
    assert not events(s, K.FILL)


def test_correct_path_fetch_fills():
    s = make()
    slot = s.cores[0].fetch_with_cancel(0x5000, mispredicted=False)
    s.run()
    assert slot.state is SlotState.COMPLETED
    assert s.memsys.l1i[0].has_line(0x5000)


def test_completed_mispredicted_fetch_no_cancellation():
    s = make()
    s.cores[0].fetch_with_cancel(0x5000, mispredicted=False)
    s.run()
    slot = s.cores[0].fetch_with_cancel(0x5000, mispredicted=True)
    s.run()
    assert slot.state is SlotState.COMPLETED
    assert not events(s, K.CANCEL_SENT)


# --------------------------------------------------------------------- TLB

def test_walk_installs_entry_then_hits():
    s = make()
    c = s.cores[0]
    c.map_page(3, 0x77)
    slot = c.translate_with_cancel(3 * 4096 + 0x10, speculative=False)
    s.run()
    assert slot.kind is ReqKind.PAGE_TABLE_WALK and slot.state is SlotState.COMPLETED
    assert c.tlb.lookup(3) == 0x77
    assert events(s, K.TLB_FILL)
    n = len(s.trace.events)
    assert c.translate_with_cancel(3 * 4096 + 0x10, speculative=False) == 0x77 * 4096 + 0x10
    assert len(s.trace.events) == n  # no memory traffic


def test_squashed_walk_installs_nothing():
    s = make()
    c = s.cores[0]
    c.map_page(3, 0x77)
    slot = c.translate_with_cancel(3 * 4096, speculative=True, squash_after_cycles=10)
    s.run()
    assert slot.state is SlotState.SQUASHED
    assert c.tlb.lookup(3) is None
    assert events(s, K.CANCEL_SENT, rid=slot.request_id)
    assert not events(s, K.TLB_FILL)


def test_unmapped_page():
    s = make()
    with pytest.raises(ConfigError):
        s.cores[0].translate_with_cancel(0x9999_000, speculative=False)
