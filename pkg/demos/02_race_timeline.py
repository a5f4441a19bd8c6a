"""One speculative miss, squashed at three different moments.

Under C1 the L1 lookup takes 4 cycles, L2 14 more, and memory answers
50 ns (150 cycles) after the LLC sends its request. Cancellations travel
at the request latency. Depending on when the squash happens the
cancellation beats the response at both levels, only at L1, or nowhere.
"""
from squashsim.config import preset
from squashsim.metrics import EventKind as K
from squashsim.system import System

ADDR = 0x4_0000
SHOW = {K.ISSUE_LOAD, K.SQUASH, K.CANCEL_RECV, K.MSHR_FREED, K.CANCEL_DISCARDED,
        K.RESP_RECV, K.RESP_DISCARDED, K.FILL, K.MISS_ALLOC}


def race(squash_cycle):
    s = System(preset("c1"))
    core, clk = s.cores[0], s.config.clock
    iid = s.new_inst_id()
    s.engine.schedule(0, lambda _: core.issue(ADDR, inst_id=iid, speculative=True))
    s.engine.schedule(clk.cycles(squash_cycle), lambda _: core.squash([iid]))
    s.run()
    print(f"\nsquash at cycle {squash_cycle}: block now resident in levels "
          f"{sorted(s.memsys.resident_levels(ADDR)) or 'none'}")
    for e in s.trace:
        if e.kind in SHOW:
            print(f"  {clk.to_cycles(e.tick):>5} cyc  {e.cache:<6} {e.kind.value:<16} {e.detail or ''}")


for when, story in ((10, "best case: cancellation reaches the LLC first"),
                    (160, "intermediate: the response passed L2 before the cancellation got there"),
                    (168, "worst case: both levels filled, the cancellation finds nothing")):
    print(f"\n=== {story}")
    race(when)
