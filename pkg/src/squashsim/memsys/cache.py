"""Set-associative, write-back, write-allocate cache with MSHRs.

Timing model: a message sent to a cache is handled after that cache's
lookup latency (``hit_latency_cycles``). A request hit responds upstream at
that moment; a miss allocates an MSHR and sends the downstream request at
that moment. Responses travel upstream with no extra per-level latency and
are validated against the MSHR they name (CheckMSHR, zero cycles).
Cancellations use the same per-hop latency as requests; the MSHR search on
arrival (MatchMSHR) is folded into that latency.

Evictions and writebacks are functional: a victim is chosen when the fill
happens and any dirty data is written into the next level immediately.
"""
from __future__ import annotations

from enum import Enum
from typing import Optional

from ..errors import SimulationError
from ..metrics.trace import EventKind as K
from .messages import Cancellation, MemRequest, MemResponse, ReqKind


class Outcome(str, Enum):
    HIT = "Hit"
    MISS_ALLOCATED = "MissAllocated"
    COALESCED = "Coalesced"
    BLOCKED = "Blocked"


class CancelOutcome(str, Enum):
    TARGET_REMOVED = "TargetRemoved"
    FORWARDED = "MshrFreedAndForwarded"
    TERMINAL = "MshrFreedTerminal"
    NO_MATCH = "NoMatch"


class Target:
    __slots__ = ("req", "origin")

    def __init__(self, req: MemRequest, origin: str):
        self.req = req
        self.origin = origin

    def __repr__(self):
        return f"Target(req={self.req.id}, origin={self.origin})"


class Mshr:
    """One outstanding miss (or, with ``probe=True``, one coherence probe in service)."""

    __slots__ = (
        "index", "block", "targets", "allocated", "downstream_sent", "downstream_id",
        "probe", "noinstall", "last_targets", "alloc_tick",
    )

    def __init__(self, index: int, block: int, first: Target, tick: int, probe: bool = False):
        self.index = index
        self.block = block
        self.targets = [first]
        self.allocated = True
        self.downstream_sent = False
        self.downstream_id: Optional[int] = None
        self.probe = probe
        self.noinstall = False
        self.last_targets: list[Target] = []
        self.alloc_tick = tick

    def chain_ids(self) -> frozenset:
        """Core request ids this miss is being fetched for.

        Once a cancellation empties the MSHR the last removed target keeps
        the blame, so a downstream fill that still happens (because the
        cancellation lost the race further down) is attributed to it.
        """
        ts = self.targets or self.last_targets
        out = frozenset()
        for t in ts:
            out = out | t.req.chain_ids()
        return out

    def __repr__(self):
        return f"Mshr(#{self.index} block={self.block:#x} targets={self.targets} allocated={self.allocated})"


class CacheLine:
    __slots__ = ("block", "data", "dirty", "valid")

    def __init__(self, block: int, data, dirty: bool = False):
        self.block = block
        self.data = bytearray(data)
        self.dirty = dirty
        self.valid = True

    def __repr__(self):
        return f"CacheLine({self.block:#x}{' dirty' if self.dirty else ''})"


class Cache:
    def __init__(self, name: str, cfg, level: int, engine, clock, trace, next_id, *, core_id=None):
        self.name = name
        self.cfg = cfg
        self.level = level
        self.engine = engine
        self.clock = clock
        self.trace = trace
        self.core_id = core_id
        self._next_id = next_id
        self.latency = clock.cycles(cfg.hit_latency_cycles)
        self.num_sets = cfg.num_sets
        self.assoc = cfg.associativity
        # per set: block -> CacheLine, insertion order is LRU order (first = LRU)
        self._sets: list[dict[int, CacheLine]] = [{} for _ in range(self.num_sets)]
        self.mshrs: list[Optional[Mshr]] = [None] * cfg.mshr_count
        self._stalled: list[MemRequest] = []
        self.port = None  # downstream port: SnoopBus, DirectPort or MainMemory
        self.to_memory = False
        self.stats = {k: 0 for k in ("hits", "misses", "coalesced", "blocked", "fills", "discarded",
                                     "cancels_matched", "cancels_discarded", "evictions", "writebacks")}

    def __repr__(self):
        return f"Cache({self.name})"

    # ------------------------------------------------------------------ ports

    def receive_request(self, req: MemRequest) -> None:
        self.engine.schedule_in(self.latency, self.handle_request, req)

    def receive_cancellation(self, cxl: Cancellation, snooped: bool = False) -> None:
        self.engine.schedule_in(self.latency, self._deliver_cancellation, (cxl, snooped))

    def _deliver_cancellation(self, payload):
        self.handle_cancellation(*payload)

    # --------------------------------------------------------------- helpers

    def _set(self, block: int) -> dict:
        return self._sets[(block >> 6) % self.num_sets]

    def line(self, block: int) -> Optional[CacheLine]:
        return self._set(block).get(block)

    def has_line(self, block: int) -> bool:
        return block in self._set(block)

    def holds_dirty(self, block: int) -> bool:
        ln = self._set(block).get(block)
        return ln is not None and ln.dirty

    def lru_rank(self, block: int) -> Optional[int]:
        """0 for the most recently used line of its set, None if absent."""
        s = self._set(block)
        if block not in s:
            return None
        return len(s) - 1 - list(s).index(block)

    def resident_blocks(self) -> set:
        return {b for s in self._sets for b in s}

    def find_mshr(self, block: int) -> Optional[Mshr]:
        for m in self.mshrs:
            if m is not None and m.block == block and not m.probe:
                return m
        return None

    def allocated_mshrs(self) -> list[Mshr]:
        return [m for m in self.mshrs if m is not None]

    def _free_slot(self) -> Optional[int]:
        for i, m in enumerate(self.mshrs):
            if m is None:
                return i
        return None

    def _emit(self, kind, **kw):
        self.trace.emit(kind, level=self.level, cache=self.name, **kw)

    def _respond(self, req: MemRequest, data: bytes) -> None:
        resp = MemResponse(req.id, req.block, data, req.mshr_index, req)
        self.engine.schedule(self.engine.now(), req.src.handle_response, resp)

    def _install(self, block: int, data, dirty: bool) -> CacheLine:
        s = self._set(block)
        if len(s) >= self.assoc:
            victim_block = next(iter(s))
            victim = s.pop(victim_block)
            self.stats["evictions"] += 1
            if self.trace.on:
                self._emit(K.EVICT, block=victim_block, detail="dirty" if victim.dirty else "clean")
            if victim.dirty:
                self._writeback(victim_block, bytes(victim.data))
        ln = CacheLine(block, data, dirty)
        s[block] = ln
        return ln

    def _touch(self, block: int) -> CacheLine:
        s = self._set(block)
        ln = s.pop(block)
        s[block] = ln
        return ln

    def _writeback(self, block: int, data: bytes) -> None:
        self.stats["writebacks"] += 1
        if self.trace.on:
            self._emit(K.WRITEBACK, block=block)
        self.port.absorb_writeback(block, data, self)

    @staticmethod
    def _apply_write(line: CacheLine, req: MemRequest) -> None:
        off = req.addr - line.block
        line.data[off:off + len(req.wdata)] = req.wdata
        line.dirty = True

    # ------------------------------------------------------------ request path

    def handle_request(self, req: MemRequest) -> Outcome:
        """Tag lookup for ``req`` (runs once the lookup latency has elapsed)."""
        block = req.block
        tr = self.trace.on
        if req.wdata is not None and hasattr(self.port, "invalidate_peers"):
            self.port.invalidate_peers(block, self)
        s = self._set(block)
        ln = s.get(block)
        if ln is not None:
            del s[block]
            s[block] = ln
            self.stats["hits"] += 1
            if req.wdata is not None:
                self._apply_write(ln, req)
            if tr:
                self._emit(K.HIT, block=block, request_id=req.id, inst_id=req.inst_id,
                           label=req.label, chain=tuple(sorted(req.chain_ids())))
            self._respond(req, bytes(ln.data))
            return Outcome.HIT

        origin = "core" if req.origin is None else req.origin_name
        m = self.find_mshr(block)
        if m is not None:
            if len(m.targets) >= self.cfg.max_targets:
                return self._block(req, "targets")
            m.targets.append(Target(req, origin))
            self.stats["coalesced"] += 1
            if tr:
                self._emit(K.COALESCE, block=block, request_id=req.id, inst_id=req.inst_id,
                           label=req.label, chain=tuple(sorted(req.chain_ids())), detail=f"mshr{m.index}")
            return Outcome.COALESCED

        idx = self._free_slot()
        if idx is None:
            return self._block(req, "mshrs")
        m = Mshr(idx, block, Target(req, origin), self.engine.now())
        self.mshrs[idx] = m
        self.stats["misses"] += 1
        down = MemRequest(
            id=self._next_id(), addr=block, kind=req.kind, speculative=req.speculative,
            inst_id=req.inst_id, issue_tick=self.engine.now(), src=self, mshr_index=idx,
            origin=m, origin_name=self.name, label=req.label,
        )
        m.downstream_id = down.id
        if tr:
            self._emit(K.MISS_ALLOC, block=block, request_id=req.id, inst_id=req.inst_id, label=req.label,
                       chain=tuple(sorted(req.chain_ids())), detail=f"mshr{idx} down={down.id}")
        self.port.send_request(down, self)
        m.downstream_sent = True
        return Outcome.MISS_ALLOCATED

    def _block(self, req: MemRequest, why: str) -> Outcome:
        # structural stall: hold the request and retry the lookup next cycle
        self.stats["blocked"] += 1
        if req not in self._stalled:
            self._stalled.append(req)
            if self.trace.on:  # once per stall, not once per retry
                self._emit(K.BLOCKED, block=req.block, request_id=req.id, inst_id=req.inst_id, detail=why)
        self.engine.schedule_in(self.clock.period_ticks, self._retry, req)
        return Outcome.BLOCKED

    def _still_blocked(self, block: int) -> bool:
        if block in self._set(block):
            return False
        m = self.find_mshr(block)
        if m is not None:
            return len(m.targets) >= self.cfg.max_targets
        return self._free_slot() is None

    def _retry(self, req: MemRequest) -> None:
        if req not in self._stalled:
            return  # cancelled while stalled
        if self._still_blocked(req.block):
            self.stats["blocked"] += 1
            self.engine.schedule_in(self.clock.period_ticks, self._retry, req)
            return
        self._stalled.remove(req)
        self.handle_request(req)

    # ----------------------------------------------------------- response path

    def handle_response(self, resp: MemResponse) -> bool:
        """CheckMSHR, then fill and service every target. Returns False if discarded."""
        tr = self.trace.on
        idx = resp.mshr_index
        m = self.mshrs[idx] if idx is not None and 0 <= idx < len(self.mshrs) else None
        ok = self.check_mshr(m, resp)
        if tr:
            # a response may be accepted by an MSHR re-allocated to the same block; it then serves that chain
            src = m if ok else resp.request
            self._emit(K.RESP_RECV, block=resp.block, request_id=resp.request_id,
                       chain=tuple(sorted(src.chain_ids())) if src is not None else (),
                       detail=f"mshr{idx}")
        if not ok:
            self.stats["discarded"] += 1
            if tr:
                self._emit(K.RESP_DISCARDED, block=resp.block, request_id=resp.request_id,
                           chain=tuple(sorted(resp.request.chain_ids())) if resp.request is not None else ())
            return False
        block = m.block
        chain = tuple(sorted(m.chain_ids())) if tr else ()
        existing = self.line(block)
        if m.noinstall:
            ln = CacheLine(block, existing.data if existing is not None else resp.data)
            detail = f"mshr{idx} noinstall"
        elif existing is not None:
            # a writeback re-installed the block while the miss was in flight; keep the newer data
            ln = self._touch(block)
            detail = f"mshr{idx} present"
        else:
            ln = self._install(block, resp.data, False)
            detail = f"mshr{idx}"
        self.mshrs[idx] = None
        m.allocated = False
        self.stats["fills"] += 1
        if tr:
            self._emit(K.FILL, block=block, request_id=resp.request_id, chain=chain,
                       detail=detail, inst_id=m.targets[0].req.inst_id, label=m.targets[0].req.label)
        for t in m.targets:
            if t.req.wdata is not None:
                self._apply_write(ln, t.req)
            self._respond(t.req, bytes(ln.data))
        return True

    @staticmethod
    def check_mshr(m: Optional[Mshr], resp: MemResponse) -> bool:
        return m is not None and m.allocated and not m.probe and m.block == resp.block

    # ------------------------------------------------------- cancellation path

    def handle_cancellation(self, cxl: Cancellation, snooped: bool = False) -> CancelOutcome:
        """MatchMSHR: drop ``cxl.request_id`` from the MSHR for ``cxl.block``."""
        tr = self.trace.on
        for req in self._stalled:
            if req.id == cxl.request_id:
                # never reached an MSHR: dropping it is the whole cancellation
                self._stalled.remove(req)
                self.stats["cancels_matched"] += 1
                if tr:
                    self._emit(K.CANCEL_RECV, block=cxl.block, request_id=cxl.request_id, chain=cxl.chain)
                    self._emit(K.TARGET_REMOVED, block=cxl.block, request_id=cxl.request_id,
                               chain=cxl.chain, detail="stalled")
                return self._snoop_note(snooped, cxl, CancelOutcome.TARGET_REMOVED)

        found = None
        for m in self.mshrs:
            if m is not None and m.block == cxl.block:
                for t in m.targets:
                    if t.req.id == cxl.request_id:
                        found = (m, t)
                        break
                if found:
                    break
        if found is None:
            self.stats["cancels_discarded"] += 1
            if tr and not snooped:
                self._emit(K.CANCEL_RECV, block=cxl.block, request_id=cxl.request_id, chain=cxl.chain)
                self._emit(K.CANCEL_DISCARDED, block=cxl.block, request_id=cxl.request_id, chain=cxl.chain)
            return self._snoop_note(snooped, cxl, CancelOutcome.NO_MATCH)

        m, t = found
        self.stats["cancels_matched"] += 1
        if tr:
            self._emit(K.CANCEL_RECV, block=cxl.block, request_id=cxl.request_id, chain=cxl.chain,
                       detail="snooped" if snooped else None)
        m.targets.remove(t)
        if m.targets:
            if tr:
                self._emit(K.TARGET_REMOVED, block=cxl.block, request_id=cxl.request_id, chain=cxl.chain,
                           detail=f"mshr{m.index} remaining={len(m.targets)}")
            return self._snoop_note(snooped, cxl, CancelOutcome.TARGET_REMOVED)

        m.last_targets = [t]
        m.allocated = False
        self.mshrs[m.index] = None
        if m.probe or self.to_memory:
            # probes have nothing downstream; the LLC never forwards to memory
            if tr:
                self._emit(K.MSHR_FREED, block=cxl.block, request_id=cxl.request_id, chain=cxl.chain,
                           detail=f"mshr{m.index} terminal")
            return self._snoop_note(snooped, cxl, CancelOutcome.TERMINAL)
        fwd = Cancellation(m.downstream_id, m.block, cxl.chain)
        if tr:
            self._emit(K.MSHR_FREED, block=cxl.block, request_id=cxl.request_id, chain=cxl.chain,
                       detail=f"mshr{m.index} forward={m.downstream_id}")
            self._emit(K.CANCEL_SENT, block=cxl.block, request_id=m.downstream_id, chain=cxl.chain)
        self.port.send_cancellation(fwd, self)
        return self._snoop_note(snooped, cxl, CancelOutcome.FORWARDED)

    def _snoop_note(self, snooped, cxl, outcome):
        if snooped and hasattr(self.port, "snoop_log"):
            self.port.snoop_log.append((self.name, cxl.request_id, outcome))
        return outcome

    # --------------------------------------------------------- coherence hooks

    def start_probe(self, req: MemRequest, service_ticks: int) -> bool:
        """Serve a peer's read of a block held dirty here (cache-to-cache transfer).

        Allocates an MSHR for the duration of the probe so that a cancellation
        snooped off the bus can free it. Returns False if no MSHR is free.
        """
        idx = self._free_slot()
        if idx is None:
            return False
        m = Mshr(idx, req.block, Target(req, "snoop"), self.engine.now(), probe=True)
        self.mshrs[idx] = m
        if self.trace.on:
            self._emit(K.MISS_ALLOC, block=req.block, request_id=req.id, inst_id=req.inst_id,
                       chain=tuple(sorted(req.chain_ids())), detail=f"mshr{idx} probe")
            self._emit(K.SNOOP_PROBE, block=req.block, request_id=req.id, detail=f"mshr{idx}")
        self.engine.schedule_in(self.latency + service_ticks, self._finish_probe, m)
        return True

    def _finish_probe(self, m: Mshr) -> None:
        if not m.allocated:
            return
        self.mshrs[m.index] = None
        m.allocated = False
        ln = self.line(m.block)
        if ln is not None:
            data = bytes(ln.data)
            if ln.dirty:
                ln.dirty = False
                self._writeback(m.block, data)
        else:
            data = self.port.peek(m.block)
        if self.trace.on:
            self._emit(K.SNOOP_DONE, block=m.block, request_id=m.targets[0].req.id, detail=f"mshr{m.index}")
        for t in m.targets:
            self._respond(t.req, data)

    def snoop_invalidate(self, block: int) -> None:
        s = self._set(block)
        ln = s.pop(block, None)
        if ln is not None and ln.dirty:
            self._writeback(block, bytes(ln.data))
        m = self.find_mshr(block)
        if m is not None:
            m.noinstall = True

    def downgrade(self, block: int) -> None:
        """Write a dirty line back and keep it clean (M -> S)."""
        ln = self._set(block).get(block)
        if ln is not None and ln.dirty:
            ln.dirty = False
            self._writeback(block, bytes(ln.data))

    # ------------------------------------------------------ functional access

    def absorb_writeback(self, block: int, data: bytes, sender=None) -> None:
        ln = self._set(block).get(block)
        if ln is not None:
            ln = self._touch(block)
            ln.data[:] = data
            ln.dirty = True
        else:
            self._install(block, data, True)

    def peek(self, block: int) -> bytes:
        ln = self._set(block).get(block)
        if ln is not None:
            return bytes(ln.data)
        return self.port.peek(block)

    def invalidate(self, block: int) -> Optional[CacheLine]:
        """Drop the line without writing it back; returns it so the caller can."""
        return self._set(block).pop(block, None)

    def evict(self, block: int) -> bool:
        """Remove ``block`` from this cache only, writing dirty data downstream."""
        ln = self._set(block).pop(block, None)
        if ln is None:
            return False
        if self.trace.on:
            self._emit(K.EVICT, block=block, detail="explicit")
        if ln.dirty:
            self._writeback(block, bytes(ln.data))
        return True

    def check_invariants(self) -> None:
        seen = set()
        for i, m in enumerate(self.mshrs):
            if m is None:
                continue
            if m.index != i or not m.allocated:
                raise SimulationError(f"{self.name}: MSHR slot {i} inconsistent: {m}")
            if not m.targets:
                raise SimulationError(f"{self.name}: allocated MSHR {i} has no targets")
            if len(m.targets) > self.cfg.max_targets:
                raise SimulationError(f"{self.name}: MSHR {i} exceeds max targets")
            if not m.probe:
                if m.block in seen:
                    raise SimulationError(f"{self.name}: two MSHRs for block {m.block:#x}")
                seen.add(m.block)
        for s in self._sets:
            if len(s) > self.assoc:
                raise SimulationError(f"{self.name}: set over-full")
