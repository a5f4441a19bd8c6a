"""The cache-change metric, evaluated exactly.

Each squashed access or transmit load that went past L1 counts once in
N_total. A change at level i weighs K - i + 1, and the sum is normalised
so that changing every level for every load gives 1.
"""
from fractions import Fraction

from squashsim.metrics import compute_cc, render_cc

for N, total in (((29, 29), 29), ((0, 0), 104), ((0, 15), 32), ((15, 0), 32)):
    cc = compute_cc(N, total, 2)
    print(f"N={N} N_total={total:>3}  cc={cc} = {render_cc(cc)}")

# A published table lists 0.234 for N=(0, 15), N_total=32. That equals 15/64,
# a normalisation by K rather than by 1 + 2 + ... + K.
print(f"15/64 = {render_cc(Fraction(15, 64))}, formula gives {render_cc(compute_cc((0, 15), 32, 2))}")
