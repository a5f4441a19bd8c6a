"""Wiring of private L1s, shared levels and memory, plus maintenance operations."""
from __future__ import annotations

from ..config import SystemConfig
from ..metrics.trace import EventKind
from .bus import DirectPort, SnoopBus
from .cache import Cache
from .memory import MainMemory
from .messages import block_of


class MemorySystem:
    """``cores`` x (L1I, L1D) on a snooping bus -> L2 -> ... -> LK -> memory."""

    def __init__(self, config: SystemConfig, engine, trace, next_id, cache_cls=Cache):
        self.config = config
        self.engine = engine
        self.trace = trace
        clock = config.clock
        self.memory = MainMemory(config.memory, engine, trace)

        self.shared: list[Cache] = []
        for i, cfg in enumerate(config.shared):
            self.shared.append(cache_cls(f"L{i + 2}", cfg, i + 2, engine, clock, trace, next_id))
        for upper, lower in zip(self.shared, self.shared[1:]):
            upper.port = DirectPort(lower)
        self.llc = self.shared[-1]
        self.llc.port = self.memory
        self.llc.to_memory = True

        self.bus = SnoopBus(self.shared[0])
        self.l1i: list[Cache] = []
        self.l1d: list[Cache] = []
        for c in range(config.cores):
            ic = cache_cls(f"L1I{c}", config.l1i, 1, engine, clock, trace, next_id, core_id=c)
            dc = cache_cls(f"L1D{c}", config.l1d, 1, engine, clock, trace, next_id, core_id=c)
            self.bus.attach(ic)
            self.bus.attach(dc)
            self.l1i.append(ic)
            self.l1d.append(dc)

    @property
    def caches(self) -> list[Cache]:
        out = []
        for ic, dc in zip(self.l1i, self.l1d):
            out += [ic, dc]
        return out + self.shared

    def data_path(self, core: int = 0) -> list[Cache]:
        """Caches a data access from ``core`` can touch, level 1 first."""
        return [self.l1d[core], *self.shared]

    def cache_at(self, level: int, core: int = 0, inst: bool = False) -> Cache:
        if level == 1:
            return (self.l1i if inst else self.l1d)[core]
        return self.shared[level - 2]

    def resident_levels(self, addr: int, core: int = 0) -> set[int]:
        """Ground truth: data-cache levels that currently hold ``addr``."""
        blk = block_of(addr)
        return {c.level for c in self.data_path(core) if c.has_line(blk)}

    def flush_block(self, addr: int) -> None:
        """Invalidate the block everywhere, writing the newest dirty copy to memory."""
        blk = block_of(addr)
        newest = None
        # closest-to-core dirty copy is the newest one
        for c in self.caches:
            ln = c.invalidate(blk)
            if ln is not None and ln.dirty and (newest is None or c.level < newest[0]):
                newest = (c.level, bytes(ln.data))
        if newest is not None:
            self.memory.absorb_writeback(blk, newest[1])
        if self.trace.on:
            self.trace.emit(EventKind.FLUSH_DONE, block=blk, detail="dirty" if newest else None)

    def evict_block_from_level(self, level: int, addr: int, core: int = 0) -> bool:
        """Remove the block from one level only; dirty data goes to the next level."""
        return self.cache_at(level, core).evict(block_of(addr))

    def quiescent(self) -> bool:
        return not any(c.allocated_mshrs() or c._stalled for c in self.caches)

    def check_invariants(self) -> None:
        for c in self.caches:
            c.check_invariants()
