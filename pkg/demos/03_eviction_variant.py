"""Receiving through L1-versus-L2 timing instead of Flush+Reload.

The attacker primes the timing array into L2 and evicts it from L1 only,
then times each slot against a threshold between the L1 and L2 hit
latencies. A transmit that hits in L2 fills L1 within 18 cycles, so the
cancellation can only help when it reaches L1 first.
"""
from squashsim.attacklab import load_scenario, run_attack
from squashsim.metrics import EventKind as K

# Without a cached secret the access load is itself cancelled: nothing leaks.
plain = run_attack(load_scenario("spectre_pht_evict", secret=b"EVICT"))
print(f"secret uncached, C1 defaults:   leaked={plain.leaked.decode()!r} timed_out={plain.timed_out}")

# Secret cached, predicted path dispatched late: the transmit is still in flight at the
# squash, its cancellation is sent, but the L2 hit has already filled L1.
late = run_attack(load_scenario("spectre_pht_evict_cached", secret=b"EVICT", dispatch_delay_cycles=156),
                  record_all=True)
lost = sum(1 for e in late.system.trace.of_kind(K.CANCEL_DISCARDED) if e.cache == "L1D0")
print(f"secret cached, late dispatch:   leaked={late.leaked.decode()!r} "
      f"(cancellations arriving after the L1 fill: {lost})")
