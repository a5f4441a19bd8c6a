"""Four attack experiments on the two preset machines.

1. cancellation off: the attack reads the whole secret.
2. cancellation on: the secret is never cached, so the transmit never runs.
3. cancellation on, secret pre-cached: the transmit runs but its miss is cancelled everywhere.
4. as 3 on the slow machine: memory answers the LLC before the cancellation
   arrives there, and the L2-only change is still enough to leak.
"""
from squashsim.attacklab import run_experiments

print(f"{'exp':>3}  {'leaked':<18} {'attempts':>8} {'N_1':>4} {'N_2':>4} {'N_total':>7}  cc")
for res in run_experiments():
    row, out = res.row(), res.outcome
    print(f"{row['experiment']:>3}  {out.leaked.decode():<18} {out.attacks_attempted:>8} "
          f"{row['N_1']:>4} {row['N_2']:>4} {row['N_total']:>7}  {row['cc']}")
