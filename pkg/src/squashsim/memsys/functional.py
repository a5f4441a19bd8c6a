"""Untimed reference model of the same hierarchy.

Used as the oracle for the timed model: fed one access at a time it must
report the same per-cache hit/miss sequence. It shares no code with
:mod:`squashsim.memsys.cache` on purpose. Each set is an ``OrderedDict``
of ``block -> dirty`` in LRU order.
"""
from __future__ import annotations

from collections import OrderedDict

from ..config import BLOCK_SIZE, SystemConfig


class _Level:
    def __init__(self, name, cfg, below):
        self.name = name
        self.nsets = cfg.size_bytes // (cfg.associativity * BLOCK_SIZE)
        self.ways = cfg.associativity
        self.sets = [OrderedDict() for _ in range(self.nsets)]
        self.below = below  # _Level or None (memory)

    def set_of(self, blk):
        return self.sets[(blk // BLOCK_SIZE) % self.nsets]

    def lookup(self, blk):
        s = self.set_of(blk)
        if blk in s:
            s.move_to_end(blk)
            return True
        return False

    def insert(self, blk, dirty):
        s = self.set_of(blk)
        if len(s) >= self.ways:
            victim, vdirty = s.popitem(last=False)
            if vdirty:
                self.push_down(victim)
        s[blk] = dirty

    def push_down(self, blk):
        if self.below is not None:
            self.below.accept_writeback(blk)

    def accept_writeback(self, blk):
        s = self.set_of(blk)
        if blk in s:
            s.move_to_end(blk)
            s[blk] = True
        else:
            self.insert(blk, True)

    def remove(self, blk):
        s = self.set_of(blk)
        if blk in s:
            if s.pop(blk):
                self.push_down(blk)

    def is_dirty(self, blk):
        return self.set_of(blk).get(blk, False)


class FunctionalHierarchy:
    def __init__(self, config: SystemConfig):
        below = None
        shared = []
        for i in reversed(range(len(config.shared))):
            below = _Level(f"L{i + 2}", config.shared[i], below)
            shared.append(below)
        self.shared = list(reversed(shared))
        top = self.shared[0]
        self.l1i = [_Level(f"L1I{c}", config.l1i, top) for c in range(config.cores)]
        self.l1d = [_Level(f"L1D{c}", config.l1d, top) for c in range(config.cores)]

    def _l1s(self):
        return self.l1i + self.l1d

    def access(self, addr: int, core: int = 0, write: bool = False, fetch: bool = False) -> list[tuple[str, str]]:
        """Perform one access; return ``[(cache name, 'hit'|'miss'|'probe'), ...]`` in lookup order."""
        blk = addr - addr % BLOCK_SIZE
        l1 = (self.l1i if fetch else self.l1d)[core]
        out = []
        if write:
            for other in self._l1s():
                if other is not l1:
                    other.remove(blk)
        if l1.lookup(blk):
            out.append((l1.name, "hit"))
            if write:
                l1.set_of(blk)[blk] = True
            return out
        out.append((l1.name, "miss"))

        if not write:
            for other in self._l1s():
                if other is not l1 and other.is_dirty(blk):
                    out.append((other.name, "probe"))
                    other.set_of(blk)[blk] = False
                    other.push_down(blk)
                    l1.insert(blk, False)
                    return out

        missed = []
        for lvl in self.shared:
            if lvl.lookup(blk):
                out.append((lvl.name, "hit"))
                break
            out.append((lvl.name, "miss"))
            missed.append(lvl)
        for lvl in reversed(missed):
            lvl.insert(blk, False)
        l1.insert(blk, write)
        return out

    def contents(self, name: str) -> set:
        lvl = {x.name: x for x in self.shared + self._l1s()}[name]
        return {b for s in lvl.sets for b in s}
