"""Randomised race checking, and what a broken cache looks like to it.

Each case is a random machine and a random mix of loads, stores, fetches
and squashed speculative loads. The checker tracks MSHR bookkeeping at
every event and compares fills and orderings against the race rules. The
``BuggyCache`` fixture fills on every response without validating the MSHR.
"""
import tempfile

from squashsim.fuzz import BuggyCache, run_fuzz

good = run_fuzz(300, seed=1)
print(f"real cache:  {good.failures} failing cases out of 300; "
      f"n-1 situations checked {good.exercised['n_minus_1']}, "
      f"cancellation-first races {good.exercised['cancel_before_response']}")

with tempfile.TemporaryDirectory() as d:
    bad = run_fuzz(300, seed=1, cache_cls=BuggyCache, out=d)
    v = bad.violations[0]
    print(f"buggy cache: {bad.failures} failing cases; minimised from {len(bad.first_failure.ops)} "
          f"to {len(bad.minimized.ops)} ops")
    print(f"  {v.prop}: {v.message}")
