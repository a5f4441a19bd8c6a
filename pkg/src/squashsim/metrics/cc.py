"""The cache-change metric.

``cc = sum_i N_i * (K - i + 1) / (N_total * sum_i i)`` over data-cache levels
i = 1..K, where N_i counts squashed access/transmit instructions that changed
level i. Evaluated with :class:`fractions.Fraction` so table values compare
exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from typing import Sequence

from ..errors import UndefinedMetric


def compute_cc(N: Sequence[int], N_total: int, K: int) -> Fraction:
    if len(N) != K:
        raise ValueError(f"N has {len(N)} entries, expected K={K}")
    if K < 1:
        raise ValueError("K must be >= 1")
    if N_total <= 0:
        raise UndefinedMetric("no squashed access/transmit instructions to normalise by")
    for n in N:
        if not 0 <= n <= N_total:
            raise ValueError(f"N_i={n} outside [0, N_total={N_total}]")
    num = sum(n * (K - i + 1) for i, n in enumerate(N, start=1))
    return Fraction(num, N_total * (K * (K + 1) // 2))


def render_cc(cc: Fraction, places: int = 6) -> str:
    d = Decimal(cc.numerator) / Decimal(cc.denominator)
    return str(d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class CCReport:
    K: int
    N: tuple
    N_total: int
    cc: Fraction | None  # None when N_total == 0

    @classmethod
    def build(cls, N: Sequence[int], N_total: int, K: int) -> "CCReport":
        try:
            cc = compute_cc(N, N_total, K)
        except UndefinedMetric:
            cc = None
        return cls(K, tuple(N), N_total, cc)

    @property
    def cc_text(self) -> str | None:
        return None if self.cc is None else render_cc(self.cc)

    def to_dict(self) -> dict:
        # cc goes out as a 6-place number so summaries stay byte-stable
        return {
            "K": self.K,
            "N": list(self.N),
            "N_total": self.N_total,
            "cc": None if self.cc is None else float(self.cc_text),
        }
