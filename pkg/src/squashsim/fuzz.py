"""Randomised squash scenarios checked against the race properties.

Every case is a small random machine plus a timed list of loads, stores and
fetches on up to two cores; speculative ones are squashed at a random later
cycle. Each case is checked for:

* ``cancel_before_response``: once a cancellation for a chain reaches a cache
  ahead of the response, that cache never fills for the chain;
* ``downward_closed``: the levels a squashed chain filled form a suffix,
  toward memory, of the levels where it missed (allocated or coalesced);
* ``mshr_conservation``: after every event, each cache's allocated MSHRs are
  exactly the ones a ledger built from the trace says are outstanding;
* ``n_minus_1``: when every cancellation only removed a target from an MSHR
  that still had others (and nothing stalled), all fills happen at the same
  ticks with the same content as in a run with no squash at all;
* ``oracle``: with cancellation off, the same accesses run one at a time hit
  and miss exactly like :class:`~squashsim.memsys.FunctionalHierarchy`;
* ``liveness``: the machine drains and every unsquashed load completes.

A failing case is shrunk greedily (drop one op at a time while it still
fails) and can be written out as JSON.
"""
from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .config import BLOCK_SIZE, CacheLevelConfig, MemoryConfig, SystemConfig, config_from_dict
from .corelsq import SlotState
from .errors import IoError, SquashSimError
from .memsys.cache import Cache
from .memsys.functional import FunctionalHierarchy
from .memsys.messages import ReqKind
from .metrics.trace import EventKind as K
from .system import System

log = logging.getLogger(__name__)

_MSHR = re.compile(r"mshr(\d+)")
LOAD_KINDS = ("load", "spec", "store", "fetch", "spec_fetch")


@dataclass
class FuzzOp:
    at: int  # issue cycle
    core: int
    kind: str  # one of LOAD_KINDS
    block: int  # index into FuzzCase.blocks
    offset: int = 0
    squash_at: Optional[int] = None  # absolute cycle; spec kinds only
    data: int = 0


@dataclass
class FuzzCase:
    seed: int
    config: dict
    blocks: list
    ops: list

    def system_config(self) -> SystemConfig:
        return config_from_dict(self.config)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "config": self.config, "blocks": self.blocks,
                "ops": [asdict(o) for o in self.ops]}

    @classmethod
    def from_dict(cls, d: dict) -> "FuzzCase":
        return cls(d["seed"], d["config"], list(d["blocks"]), [FuzzOp(**o) for o in d["ops"]])


@dataclass
class Violation:
    prop: str
    message: str


@dataclass
class FuzzReport:
    iterations: int
    seed: int
    failures: int = 0
    first_failure: Optional[FuzzCase] = None
    minimized: Optional[FuzzCase] = None
    violations: list = field(default_factory=list)
    repro_path: Optional[Path] = None
    # how many cases actually exercised each conditional property
    exercised: dict = field(default_factory=lambda: {"n_minus_1": 0, "cancel_before_response": 0})

    @property
    def ok(self) -> bool:
        return self.failures == 0


# ------------------------------------------------------------------ generation

def random_config(rng: random.Random) -> SystemConfig:
    def level(max_sets, max_ways, max_lat):
        sets = rng.choice([1, 2, 4, max_sets])
        ways = rng.randint(1, max_ways)
        return CacheLevelConfig(sets * ways * BLOCK_SIZE, ways, rng.randint(1, max_lat),
                                mshr_count=rng.randint(1, 4), max_targets=rng.randint(1, 4))

    shared = tuple(level(16, 4, 30) for _ in range(rng.choice([1, 1, 2])))
    return SystemConfig(
        name="fuzz",
        cores=rng.choice([1, 2]),
        core_frequency_hz=rng.choice([3_000_000_000, 1_000_000_000, 100_000_000]),
        l1i=level(4, 2, 6),
        l1d=level(4, 2, 6),
        shared=shared,
        memory=MemoryConfig(access_latency_ns=float(rng.randint(5, 80)), capacity_bytes=1 << 24),
    )


def random_case(seed: int) -> FuzzCase:
    rng = random.Random(seed)
    cfg = random_config(rng)
    blocks = sorted(rng.sample(range(64), rng.randint(2, 10)))
    lat = cfg.data_latencies()["memory"]
    span = max(8, lat)
    ops = []
    pattern = rng.random()
    if pattern < 0.3:
        cfg = replace(cfg, l1d=replace(cfg.l1d, max_targets=4, mshr_count=max(2, cfg.l1d.mshr_count)))
        # one shared miss with several squashed riders: the n-1 situation
        b = rng.randrange(len(blocks))
        t0 = rng.randint(0, 5)
        keep = rng.randint(0, 3)
        for j in range(4):
            if j == keep:
                ops.append(FuzzOp(t0 + j, 0, "load", b, rng.randrange(BLOCK_SIZE)))
            else:
                ops.append(FuzzOp(t0 + j, 0, "spec", b, rng.randrange(BLOCK_SIZE),
                                  squash_at=t0 + j + rng.randint(1, 2 * span)))
        n_extra = rng.randint(0, 6)
        extra_kinds = ("load", "store", "fetch")
    else:
        n_extra = rng.randint(1, 24)
        extra_kinds = LOAD_KINDS
    for _ in range(n_extra):
        at = rng.randint(0, 3 * span)
        kind = rng.choice(extra_kinds)
        op = FuzzOp(at, rng.randrange(cfg.cores), kind, rng.randrange(len(blocks)), rng.randrange(BLOCK_SIZE),
                    data=rng.randrange(256))
        if kind.startswith("spec"):
            op.squash_at = at + rng.randint(0, 2 * span)
        ops.append(op)
    ops.sort(key=lambda o: o.at)
    return FuzzCase(seed, _config_dict(cfg), [b * BLOCK_SIZE * 5 for b in blocks], ops)


def _config_dict(cfg: SystemConfig) -> dict:
    return cfg.to_dict()


# ------------------------------------------------------------------- execution

class _Run:
    """One timed execution of a case with per-event MSHR ledger checking."""

    def __init__(self, case: FuzzCase, *, squash: bool = True, cancel: bool = True, cache_cls=Cache):
        self.case = case
        self.sys = System(case.system_config(), cancel_enabled=cancel, cache_cls=cache_cls, max_events=2_000_000)
        self.violations: list[Violation] = []
        self.slots = []
        self._ledger: dict = {}
        self._seen = 0
        self.fill_data: dict = {}
        self._caches = {c.name: c for c in self.sys.memsys.caches}
        self.sys.engine.observers.append(self._check_mshrs)
        clk = self.sys.config.clock
        eng = self.sys.engine
        for op in case.ops:
            eng.schedule(clk.cycles(op.at), self._issue, op)
            if squash and op.squash_at is not None:
                eng.schedule(clk.cycles(op.squash_at), self._squash, op)
        self._inst = {}

    def _issue(self, op: FuzzOp) -> None:
        core = self.sys.cores[op.core]
        addr = self.case.blocks[op.block] + op.offset
        iid = self.sys.new_inst_id()
        kw = {}
        if op.kind in ("fetch", "spec_fetch"):
            kw["kind"] = ReqKind.INST_FETCH
        if op.kind == "store":
            kw["wdata"] = bytes([op.data])
        slot = core.issue(addr, inst_id=iid, speculative=op.kind.startswith("spec"), label=op.kind, **kw)
        self._inst[id(op)] = iid
        self.slots.append((op, slot))

    def _squash(self, op: FuzzOp) -> None:
        self.sys.cores[op.core].squash([self._inst[id(op)]])

    def _check_mshrs(self, _ev) -> None:
        events = self.sys.trace.events
        for e in events[self._seen:]:
            if e.cache not in self._caches:
                continue
            m = _MSHR.search(e.detail or "")
            if e.kind is K.MISS_ALLOC:
                key = (e.cache, int(m.group(1)))
                if key in self._ledger:
                    self._fail("mshr_conservation", f"{key} allocated twice")
                self._ledger[key] = e.block
            elif e.kind in (K.FILL, K.MSHR_FREED, K.SNOOP_DONE) and m:
                self._ledger.pop((e.cache, int(m.group(1))), None)
            if e.kind is K.FILL:
                ln = self._caches[e.cache].line(e.block)
                self.fill_data[e.seq] = None if ln is None else bytes(ln.data)
        self._seen = len(events)
        for name, c in self._caches.items():
            actual = {(name, mm.index): mm.block for mm in c.mshrs if mm is not None}
            expect = {k: v for k, v in self._ledger.items() if k[0] == name}
            if actual != expect:
                self._fail("mshr_conservation", f"{name} at {self.sys.engine.now()}: "
                                                f"allocated {actual} but ledger says {expect}")
                self._ledger = {k: v for k, v in self._ledger.items() if k[0] != name}
                self._ledger.update(actual)
            try:
                c.check_invariants()
            except SquashSimError as exc:
                self._fail("mshr_conservation", str(exc))

    def _fail(self, prop, msg):
        if len(self.violations) < 20:
            self.violations.append(Violation(prop, msg))

    def run(self) -> "_Run":
        self.sys.run()
        if not self.sys.memsys.quiescent():
            self._fail("liveness", "MSHRs still allocated after the run drained")
        for op, slot in self.slots:
            if slot.state is SlotState.ISSUED:
                self._fail("liveness", f"{op.kind} request {slot.request_id} never completed")
        return self

    def fills(self) -> list:
        """``(tick, cache, block, content)`` for every fill, in order."""
        return [(e.tick, e.cache, e.block, self.fill_data[e.seq]) for e in self.sys.trace.of_kind(K.FILL)]


def _chain_checks(run: _Run, report: Optional[FuzzReport]) -> list[Violation]:
    out = []
    events = run.sys.trace.events
    squashed = {e.request_id for e in events if e.kind is K.CANCEL_SENT and e.level == 0}
    first_cancel, first_resp, filled_at, fills, missed = {}, {}, set(), {}, {}
    for e in events:
        for rid in e.chain:
            if rid not in squashed:
                continue
            key = (e.cache, rid)
            if e.kind is K.CANCEL_RECV:
                first_cancel.setdefault(key, e.seq)
            elif e.kind is K.RESP_RECV:
                first_resp.setdefault(key, e.seq)
            elif e.kind is K.FILL and "noinstall" not in (e.detail or ""):
                fills.setdefault(rid, set()).add(e.level)
                filled_at.add(key)
            elif e.kind is K.COALESCE or (e.kind is K.MISS_ALLOC and "probe" not in (e.detail or "")):
                missed.setdefault(rid, set()).add(e.level)
    for key, cseq in first_cancel.items():
        rseq = first_resp.get(key)
        if rseq is None or cseq < rseq:
            if report is not None:
                report.exercised["cancel_before_response"] += 1
            if key in filled_at:
                out.append(Violation("cancel_before_response",
                                     f"{key[0]} filled for chain {key[1]} after the cancellation arrived first"))
    for rid in squashed:
        got = fills.get(rid, set())
        if not got:
            continue
        # deeper levels can be reached through an MSHR the chain coalesced into
        miss = missed.get(rid, set()) | got
        lo = min(got)
        if got != {m for m in miss if m >= lo}:
            out.append(Violation("downward_closed",
                                 f"request {rid}: filled levels {sorted(got)} missed at {sorted(miss)}"))
    return out


def _only_partial_cancels(run: _Run) -> bool:
    """True if squashes happened and every cancellation left its MSHR allocated."""
    kinds = {e.kind for e in run.sys.trace.events}
    if K.SQUASH not in kinds or K.MSHR_FREED in kinds or K.BLOCKED in kinds:
        return False
    return not any(e.kind is K.TARGET_REMOVED and e.detail == "stalled" for e in run.sys.trace.events)


def _n_minus_1(run: _Run, control: _Run) -> list[Violation]:
    if any(e.kind is K.BLOCKED for e in control.sys.trace.events):
        return []
    got, ref = run.fills(), control.fills()
    if [f[:3] for f in got] != [f[:3] for f in ref]:
        return [Violation("n_minus_1", f"fills {[f[:3] for f in got]} vs without squashes {[f[:3] for f in ref]}")]
    if got != ref:
        return [Violation("n_minus_1", "fill content differs from the run without squashes")]
    return []


def oracle_mismatches(config: SystemConfig, accesses, cancel: bool = False, limit: int = 5) -> list[str]:
    """Run ``(core, addr, kind)`` accesses one at a time; compare with the functional model.

    ``kind`` is ``"load"``, ``"store"`` or ``"fetch"``.
    """
    sysm = System(config, cancel_enabled=cancel)
    ref = FunctionalHierarchy(config)
    tr = sysm.trace
    bad = []
    for n, (core, addr, kind) in enumerate(accesses):
        tr.events.clear()
        c = sysm.cores[core]
        iid = sysm.new_inst_id()
        kw = {}
        if kind == "fetch":
            kw["kind"] = ReqKind.INST_FETCH
        elif kind == "store":
            kw["wdata"] = b"\x5a"
        slot = c.issue(addr, inst_id=iid, **kw)
        sysm.run()
        rid = slot.request_id
        got = []
        for e in tr.events:
            if rid in e.chain or e.request_id == rid:
                if e.kind is K.HIT:
                    got.append((e.cache, "hit"))
                elif e.kind is K.MISS_ALLOC:
                    got.append((e.cache, "probe" if "probe" in (e.detail or "") else "miss"))
        want = ref.access(addr, core=core, write=kind == "store", fetch=kind == "fetch")
        if got != want:
            bad.append(f"access {n} ({kind} {addr:#x} on core {core}): timed {got} vs functional {want}")
            if len(bad) >= limit:
                break
    return bad


def check_case(case: FuzzCase, cache_cls=Cache, report: Optional[FuzzReport] = None) -> list[Violation]:
    try:
        run = _Run(case, cache_cls=cache_cls).run()
    except SquashSimError as exc:
        return [Violation("crash", f"{type(exc).__name__}: {exc}")]
    out = list(run.violations) + _chain_checks(run, report)

    if _only_partial_cancels(run):
        if report is not None:
            report.exercised["n_minus_1"] += 1
        try:
            control = _Run(case, squash=False, cache_cls=cache_cls).run()
        except SquashSimError as exc:
            return out + [Violation("crash", f"control run: {exc}")]
        out += _n_minus_1(run, control)

    seq = [(op.core, case.blocks[op.block] + op.offset,
            "fetch" if "fetch" in op.kind else "store" if op.kind == "store" else "load") for op in case.ops]
    out += [Violation("oracle", m) for m in oracle_mismatches(case.system_config(), seq, cancel=False)]
    return out


def minimize(case: FuzzCase, cache_cls=Cache) -> FuzzCase:
    """Greedy one-op-at-a-time shrinking while the case still fails."""
    cur = case
    changed = True
    while changed:
        changed = False
        for i in range(len(cur.ops)):
            cand = FuzzCase(cur.seed, cur.config, cur.blocks, cur.ops[:i] + cur.ops[i + 1:])
            if check_case(cand, cache_cls):
                cur = cand
                changed = True
                break
    return cur


def run_fuzz(iters: int, seed: int = 0, *, cache_cls=Cache, out: Optional[Path] = None) -> FuzzReport:
    report = FuzzReport(iters, seed)
    for i in range(iters):
        case = random_case(seed * 1_000_003 + i)
        viol = check_case(case, cache_cls, report)
        if viol:
            report.failures += 1
            if report.first_failure is None:
                log.info("case %d failed: %s", i, viol[0].message)
                report.first_failure = case
                report.violations = viol
    if report.first_failure is not None:
        report.minimized = minimize(report.first_failure, cache_cls)
        report.violations = check_case(report.minimized, cache_cls) or report.violations
        if out is not None:
            report.repro_path = write_repro(Path(out), report)
    return report


def write_repro(out_dir: Path, report: FuzzReport) -> Path:
    path = out_dir / "fuzz_repro.json"
    body = {
        "seed": report.seed,
        "iterations": report.iterations,
        "failures": report.failures,
        "violations": [asdict(v) for v in report.violations],
        "case": report.minimized.to_dict(),
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc
    return path


class BuggyCache(Cache):
    """Test fixture: fills on every response, skipping the CheckMSHR validation."""

    def handle_response(self, resp):
        idx = resp.mshr_index
        m = self.mshrs[idx] if idx is not None and 0 <= idx < len(self.mshrs) else None
        if self.check_mshr(m, resp):
            return super().handle_response(resp)
        if self.line(resp.block) is None:
            self._install(resp.block, resp.data, False)
            if self.trace.on:
                chain = tuple(sorted(resp.request.chain_ids())) if resp.request is not None else ()
                self._emit(K.FILL, block=resp.block, request_id=resp.request_id, chain=chain, detail="unchecked")
        return True
