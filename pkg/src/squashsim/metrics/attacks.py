"""Per-attack analysis of a recorded trace, and timeline export."""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from ..errors import IoError, SchemaError
from .cc import CCReport
from .trace import EventKind, TraceEvent

BODY_LABELS = ("access", "transmit")
TIMELINE_COLUMNS = ("attack_no", "event_kind", "level", "relative_tick",
                    "tick", "cache", "block", "request_id", "inst_id", "label", "detail")


@dataclass
class InstructionRecord:
    """What one access or transmit load did during its attack."""

    label: str
    request_id: Optional[int] = None
    events: list = field(default_factory=list)
    executed: bool = False
    squashed: bool = False
    hit_l1: bool = False
    levels_changed: frozenset = frozenset()
    side_changes: frozenset = frozenset()  # I-cache / TLB, never part of CC

    @property
    def counted(self) -> bool:
        """Enters N_total: squashed and its request went past L1."""
        return self.squashed and self.executed and not self.hit_l1


@dataclass
class AttackRecord:
    attack_no: int
    access: InstructionRecord
    transmit: InstructionRecord
    spec_start_tick: Optional[int]
    first_tick: int

    @property
    def access_events(self) -> list:
        return self.access.events

    @property
    def transmit_events(self) -> list:
        return self.transmit.events

    @property
    def access_executed(self) -> bool:
        return self.access.executed

    @property
    def transmit_executed(self) -> bool:
        return self.transmit.executed

    @property
    def levels_changed(self) -> frozenset:
        # transmit-attributed, which is what the receive phase can see
        return self.transmit.levels_changed

    @property
    def base_tick(self) -> int:
        return self.first_tick if self.spec_start_tick is None else self.spec_start_tick


def _events_of(trace) -> list[TraceEvent]:
    return list(trace.events if hasattr(trace, "events") else trace)


def _by_episode(events: Iterable[TraceEvent]) -> dict[int, list[TraceEvent]]:
    out: dict[int, list[TraceEvent]] = defaultdict(list)
    for e in events:
        if e.episode is not None:
            out[e.episode].append(e)
    return dict(sorted(out.items()))


def _instruction(label: str, evs: list[TraceEvent]) -> InstructionRecord:
    rec = InstructionRecord(label)
    issue = next((e for e in evs if e.kind is EventKind.ISSUE_LOAD and e.label == label), None)
    if issue is None:
        return rec
    rid = issue.request_id
    rec.request_id = rid
    rec.executed = True
    mine = [e for e in evs if e.request_id == rid or rid in e.chain]
    rec.events = mine
    levels, side = set(), set()
    for e in mine:
        if e.kind is EventKind.SQUASH and e.request_id == rid:
            rec.squashed = True
        elif e.kind is EventKind.HIT and e.level == 1 and e.request_id == rid:
            rec.hit_l1 = True
        elif e.kind is EventKind.FILL and "noinstall" not in (e.detail or "") and rid in e.chain:
            if e.cache is not None and e.cache.startswith("L1I"):
                side.add(e.cache)
            else:
                levels.add(e.level)
        elif e.kind is EventKind.TLB_FILL:
            side.add("TLB")
    rec.levels_changed = frozenset(levels)
    rec.side_changes = frozenset(side)
    return rec


def pair_attacks(trace) -> list[AttackRecord]:
    """One :class:`AttackRecord` per recorded episode."""
    episodes = _by_episode(_events_of(trace))
    if not episodes:
        return []
    labeled = any(e.kind is EventKind.ISSUE_LOAD and e.label in BODY_LABELS
                  for evs in episodes.values() for e in evs)
    if not labeled:
        raise SchemaError("trace has episodes but no loads labeled 'access' or 'transmit'")
    out = []
    for no, evs in episodes.items():
        spec = next((e.tick for e in evs if e.kind is EventKind.SPEC_START), None)
        out.append(AttackRecord(no, _instruction("access", evs), _instruction("transmit", evs), spec, evs[0].tick))
    return out


def cc_report(records: Iterable[AttackRecord], K: int) -> CCReport:
    N = [0] * K
    total = 0
    for r in records:
        for ins in (r.access, r.transmit):
            if not ins.counted:
                continue
            total += 1
            for lvl in ins.levels_changed:
                if 1 <= lvl <= K:
                    N[lvl - 1] += 1
    return CCReport.build(N, total, K)


# ---------------------------------------------------------------- export

def timeline_rows(trace, records: Iterable[AttackRecord]) -> list[dict]:
    episodes = _by_episode(_events_of(trace))
    rows = []
    for r in records:
        base = r.base_tick
        for e in episodes.get(r.attack_no, ()):
            rows.append({
                "attack_no": r.attack_no,
                "event_kind": e.kind.value,
                "level": e.level,
                "relative_tick": e.tick - base,
                "tick": e.tick,
                "cache": e.cache,
                "block": None if e.block is None else f"{e.block:#x}",
                "request_id": e.request_id,
                "inst_id": e.inst_id,
                "label": e.label,
                "detail": e.detail,
            })
    return rows


def render_timeline(rows: list[dict], fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TIMELINE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: "" if v is None else v for k, v in row.items()})
        return buf.getvalue()
    if fmt == "jsonl":
        return "".join(json.dumps(row) + "\n" for row in rows)
    raise ValueError(f"unknown timeline format {fmt!r}")


def export_timeline(trace, records, path, format: str = "csv") -> Path:
    text = render_timeline(timeline_rows(trace, records), format)
    p = Path(path)
    try:
        p.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(p, exc.strerror or str(exc)) from exc
    return p


def write_json(path, obj) -> Path:
    p = Path(path)
    try:
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(p, exc.strerror or str(exc)) from exc
    return p
