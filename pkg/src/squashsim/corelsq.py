"""Scenario-driven speculative core.

There is no out-of-order pipeline. A speculation episode is a mispredicted
branch guarding a short chain of dependent loads:

* the condition operand is loaded non-speculatively;
* ``dispatch_delay_cycles`` after that, the predicted path starts and its
  loads issue speculatively, each one ``compute_cycles`` after the value it
  depends on arrives;
* ``resolve_latency_cycles`` after the condition operand arrives the branch
  resolves; on a misprediction every body instruction is squashed and each
  load still outstanding gets a cancellation sent to its L1.

Responses reach the core on the next core clock edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .errors import ConfigError, SimulationError
from .memsys.messages import Cancellation, MemRequest, ReqKind
from .metrics.trace import EventKind as K

PAGE_SIZE = 4096
PTE_SIZE = 8


class SlotState(str, Enum):
    ISSUED = "Issued"
    COMPLETED = "Completed"
    SQUASHED = "Squashed"


@dataclass(eq=False)
class LoadSlot:
    inst_id: int
    request_id: int
    addr: int
    kind: ReqKind
    speculative: bool
    issue_tick: int
    label: Optional[str] = None
    state: SlotState = SlotState.ISSUED
    complete_tick: Optional[int] = None
    data: Optional[bytes] = None
    on_complete: Optional[Callable] = field(default=None, repr=False)

    @property
    def value(self) -> Optional[int]:
        """The byte at ``addr`` once the load has completed."""
        if self.data is None:
            return None
        return self.data[self.addr % len(self.data)]


@dataclass
class BodyLoad:
    """One speculative load. ``address_fn`` maps the previous load's byte to an address."""

    label: str
    addr: Optional[int] = None
    address_fn: Optional[Callable[[int], int]] = None


@dataclass
class SpeculationEpisode:
    episode_no: int
    condition_load_addr: int
    body: list[BodyLoad]
    resolve_latency_cycles: int = 10
    dispatch_delay_cycles: int = 40
    compute_cycles: int = 2
    mispredicted: bool = True
    source: str = "pht"

    def __post_init__(self):
        if self.compute_cycles < 1:
            raise ConfigError("compute_cycles must be >= 1 (a dependent load issues strictly after its operand)")
        if self.resolve_latency_cycles < 0 or self.dispatch_delay_cycles < 0:
            raise ConfigError("episode latencies must be non-negative")


@dataclass
class EpisodeOutcome:
    episode_no: int
    start_tick: int
    spec_start_tick: Optional[int]
    squash_tick: Optional[int]
    slots: dict[str, LoadSlot]
    cancellations: list[Cancellation]

    def executed(self, label: str) -> bool:
        return label in self.slots

    @property
    def executed_access(self) -> bool:
        return self.executed("access")

    @property
    def executed_transmit(self) -> bool:
        return self.executed("transmit")


class Tlb:
    def __init__(self):
        self.entries: dict[int, int] = {}

    def lookup(self, vpage: int) -> Optional[int]:
        return self.entries.get(vpage)

    def install(self, vpage: int, ppage: int) -> None:
        self.entries[vpage] = ppage


class Core:
    def __init__(self, core_id: int, system):
        self.id = core_id
        self.system = system
        self.engine = system.engine
        self.trace = system.trace
        self.clock = system.config.clock
        self.l1d = system.memsys.l1d[core_id]
        self.l1i = system.memsys.l1i[core_id]
        self.tlb = Tlb()
        self.page_table: dict[int, int] = {}
        self.page_table_base = 0
        self.slots: dict[int, list[LoadSlot]] = {}
        self._by_req: dict[int, LoadSlot] = {}
        self.cancellations_sent = 0
        self.squash_transitions = 0

    @property
    def cancel_enabled(self) -> bool:
        return self.system.cancel_enabled

    def next_edge(self) -> int:
        return self.clock.next_edge(self.engine.now())

    # ------------------------------------------------------------ load/store

    def issue(self, addr: int, *, inst_id: int, speculative: bool = False, kind: ReqKind = ReqKind.DATA_READ,
              wdata: Optional[bytes] = None, label: Optional[str] = None,
              on_complete: Optional[Callable] = None) -> LoadSlot:
        """Send one memory access to the L1 now."""
        self.system.memsys.memory.check_addr(addr)
        if speculative and wdata is not None:
            raise SimulationError("speculative stores are never issued")
        if wdata is not None:
            kind = ReqKind.DATA_WRITE
            if (addr % 64) + len(wdata) > 64:
                raise ConfigError("store crosses a block boundary")
        now = self.engine.now()
        req = MemRequest(id=self.system.next_id(), addr=addr, kind=kind, speculative=speculative,
                         inst_id=inst_id, issue_tick=now, src=self, wdata=wdata, label=label)
        slot = LoadSlot(inst_id, req.id, addr, kind, speculative, now, label=label, on_complete=on_complete)
        self.slots.setdefault(inst_id, []).append(slot)
        self._by_req[req.id] = slot
        if self.trace.on:
            self.trace.emit(K.ISSUE_LOAD, level=0, cache=f"core{self.id}", block=req.block, request_id=req.id,
                            inst_id=inst_id, label=label, detail="spec" if speculative else None)
        (self.l1i if kind is ReqKind.INST_FETCH else self.l1d).receive_request(req)
        return slot

    def handle_response(self, resp) -> None:
        t = self.next_edge()
        if t == self.engine.now():
            self._complete(resp)
        else:
            self.engine.schedule(t, self._complete, resp)

    def _complete(self, resp) -> None:
        slot = self._by_req.get(resp.request_id)
        if slot is None or slot.state is not SlotState.ISSUED:
            return  # squashed: the value is dropped
        slot.state = SlotState.COMPLETED
        slot.complete_tick = self.engine.now()
        slot.data = resp.data
        if self.trace.on:
            self.trace.emit(K.LOAD_COMPLETE, level=0, cache=f"core{self.id}", block=resp.block,
                            request_id=resp.request_id, inst_id=slot.inst_id, label=slot.label)
        if slot.on_complete is not None:
            slot.on_complete(slot)

    def squash(self, inst_ids) -> list[Cancellation]:
        """Squash instructions; every load still in flight gets a cancellation (if enabled)."""
        out = []
        for iid in inst_ids:
            if iid not in self.slots:
                raise SimulationError(f"squash of unknown instruction {iid}")
            for slot in self.slots[iid]:
                if slot.state is SlotState.ISSUED:
                    slot.state = SlotState.SQUASHED
                    self.squash_transitions += 1
                    blk = slot.addr - slot.addr % 64
                    if self.trace.on:
                        self.trace.emit(K.SQUASH, level=0, cache=f"core{self.id}", block=blk,
                                        request_id=slot.request_id, inst_id=iid, label=slot.label,
                                        detail="outstanding")
                    if self.cancel_enabled:
                        cxl = Cancellation(slot.request_id, blk, (slot.request_id,))
                        if self.trace.on:
                            self.trace.emit(K.CANCEL_SENT, level=0, cache=f"core{self.id}", block=blk,
                                            request_id=slot.request_id, inst_id=iid, label=slot.label,
                                            chain=cxl.chain)
                        l1 = self.l1i if slot.kind is ReqKind.INST_FETCH else self.l1d
                        l1.receive_cancellation(cxl)
                        self.cancellations_sent += 1
                        out.append(cxl)
                elif slot.state is SlotState.COMPLETED and self.trace.on:
                    self.trace.emit(K.SQUASH, level=0, cache=f"core{self.id}", block=slot.addr - slot.addr % 64,
                                    request_id=slot.request_id, inst_id=iid, label=slot.label,
                                    detail="completed")
        return out

    # -------------------------------------------------------------- probes

    def _at_next_edge(self, fn) -> None:
        self.engine.schedule(self.next_edge(), lambda _: fn())

    def timed_probe(self, addr: int) -> int:
        """Non-speculative load; returns its latency in core cycles. Runs the engine to idle."""
        box = []
        iid = self.system.new_inst_id()
        self._at_next_edge(lambda: box.append(self.issue(addr, inst_id=iid, label="probe")))
        self.engine.run_until_idle()
        slot = box[0]
        if slot.state is not SlotState.COMPLETED:
            raise SimulationError(f"probe of {addr:#x} did not complete")
        lat = self.clock.to_cycles(slot.complete_tick - slot.issue_tick)
        if self.trace.on:
            self.trace.emit(K.PROBE_RESULT, level=0, cache=f"core{self.id}", block=slot.addr - slot.addr % 64,
                            request_id=slot.request_id, inst_id=iid, detail=str(lat))
        return lat

    def store(self, addr: int, data: bytes) -> LoadSlot:
        """Architectural store; runs the engine to idle."""
        box = []
        iid = self.system.new_inst_id()
        self._at_next_edge(lambda: box.append(self.issue(addr, inst_id=iid, wdata=bytes(data), label="store")))
        self.engine.run_until_idle()
        return box[0]

    def fetch_with_cancel(self, pc: int, mispredicted: bool, squash_after_cycles: int = 10) -> LoadSlot:
        """Issue an instruction fetch through the L1I; a mispredicted one is squashed after the given delay.

        Non-blocking: the caller drives the engine.
        """
        iid = self.system.new_inst_id()
        slot = self.issue(pc, inst_id=iid, speculative=mispredicted, kind=ReqKind.INST_FETCH, label="fetch")
        if mispredicted:
            self.engine.schedule_in(self.clock.cycles(squash_after_cycles), lambda _: self.squash([iid]))
        return slot

    # ----------------------------------------------------------------- TLB

    def map_page(self, vpage: int, ppage: int) -> None:
        """Add a mapping to the page table and write its entry to memory."""
        self.page_table[vpage] = ppage
        pte = self.page_table_base + vpage * PTE_SIZE
        self.system.memsys.memory.write_bytes(pte, ppage.to_bytes(PTE_SIZE, "little"))

    def translate_with_cancel(self, vaddr: int, speculative: bool, squash_after_cycles: Optional[int] = None):
        """Translate ``vaddr``.

        Returns the physical address on a TLB hit. On a miss a page-table walk
        is issued through the L1D and its :class:`LoadSlot` is returned; the
        entry is installed when the walk completes unless it was squashed.
        """
        vpage, off = divmod(vaddr, PAGE_SIZE)
        if vpage not in self.page_table:
            raise ConfigError(f"virtual page {vpage:#x} is not mapped")
        ppage = self.tlb.lookup(vpage)
        if ppage is not None:
            return ppage * PAGE_SIZE + off
        iid = self.system.new_inst_id()
        pte = self.page_table_base + vpage * PTE_SIZE

        def installed(slot):
            value = int.from_bytes(slot.data[pte % 64:pte % 64 + PTE_SIZE], "little")
            self.tlb.install(vpage, value)
            if self.trace.on:
                self.trace.emit(K.TLB_FILL, level=0, cache=f"core{self.id}", block=pte - pte % 64,
                                request_id=slot.request_id, inst_id=iid, detail=f"vpage={vpage:#x}")

        slot = self.issue(pte, inst_id=iid, speculative=speculative, kind=ReqKind.PAGE_TABLE_WALK,
                          label="walk", on_complete=installed)
        if speculative and squash_after_cycles is not None:
            self.engine.schedule_in(self.clock.cycles(squash_after_cycles), lambda _: self.squash([iid]))
        return slot

    # ------------------------------------------------------------- episodes

    def run_episode(self, ep: SpeculationEpisode) -> EpisodeOutcome:
        """Run one mispredicted-branch episode to quiescence."""
        eng = self.engine
        clk = self.clock
        tr = self.trace
        new_inst = self.system.new_inst_id
        tr.episode = ep.episode_no
        t0 = self.next_edge()
        st = _EpisodeState()

        def start(_):
            self.issue(ep.condition_load_addr, inst_id=new_inst(), label="condition", on_complete=on_condition)
            eng.schedule(t0 + clk.cycles(ep.dispatch_delay_cycles), spec_start)

        def on_condition(slot):
            eng.schedule_in(clk.cycles(ep.resolve_latency_cycles), resolve)

        def spec_start(_):
            if st.squashed:
                return
            st.spec_start = eng.now()
            if tr.on:
                tr.emit(K.SPEC_START, level=0, cache=f"core{self.id}", detail=ep.source)
            issue_body(0, None)

        def issue_body(k, prev_value):
            if st.squashed or k >= len(ep.body):
                return
            bl = ep.body[k]
            addr = bl.addr if bl.address_fn is None else bl.address_fn(prev_value)
            slot = self.issue(addr, inst_id=new_inst(), speculative=ep.mispredicted, label=bl.label,
                              on_complete=lambda s, k=k: dependent_ready(k, s))
            st.slots[bl.label] = slot

        def dependent_ready(k, slot):
            if st.squashed:
                return
            eng.schedule_in(clk.cycles(ep.compute_cycles), lambda _: issue_body(k + 1, slot.value))

        def resolve(_):
            st.squash_tick = eng.now()
            if ep.mispredicted:
                st.squashed = True
                st.cancellations = self.squash([s.inst_id for s in st.slots.values()])

        eng.schedule(t0, start)
        eng.run_until_idle()
        tr.episode = None
        return EpisodeOutcome(ep.episode_no, t0, st.spec_start, st.squash_tick, dict(st.slots), st.cancellations)


class _EpisodeState:
    def __init__(self):
        self.squashed = False
        self.spec_start = None
        self.squash_tick = None
        self.slots: dict[str, LoadSlot] = {}
        self.cancellations: list[Cancellation] = []
