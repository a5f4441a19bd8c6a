"""Append-only event trace shared by the core, caches and memory."""
from __future__ import annotations

import json
from enum import Enum
from typing import Iterable, NamedTuple, Optional


class EventKind(str, Enum):
    ISSUE_LOAD = "IssueLoad"
    LOAD_COMPLETE = "LoadComplete"
    SPEC_START = "SpecStart"
    SQUASH = "Squash"
    CANCEL_SENT = "CancelSent"
    CANCEL_RECV = "CancelRecv"
    CANCEL_DISCARDED = "CancelDiscarded"
    TARGET_REMOVED = "TargetRemoved"
    MSHR_FREED = "MshrFreed"
    MISS_ALLOC = "MissAlloc"
    COALESCE = "Coalesce"
    BLOCKED = "Blocked"
    HIT = "Hit"
    RESP_RECV = "RespRecv"
    RESP_DISCARDED = "RespDiscarded"
    FILL = "Fill"
    EVICT = "Evict"
    WRITEBACK = "Writeback"
    SNOOP_PROBE = "SnoopProbe"
    SNOOP_DONE = "SnoopDone"
    FLUSH_DONE = "FlushDone"
    PROBE_RESULT = "ProbeResult"
    TLB_FILL = "TlbFill"

    def __str__(self):
        return self.value


class TraceEvent(NamedTuple):
    tick: int
    seq: int
    kind: EventKind
    level: Optional[int] = None
    cache: Optional[str] = None
    block: Optional[int] = None
    request_id: Optional[int] = None
    inst_id: Optional[int] = None
    label: Optional[str] = None
    episode: Optional[int] = None
    chain: tuple = ()
    detail: Optional[str] = None

    def to_json(self) -> dict:
        d = self._asdict()
        d["kind"] = self.kind.value
        d["chain"] = list(self.chain)
        return d


class TraceRecorder:
    """Collects :class:`TraceEvent` records.

    With ``record_all=False`` only events emitted while an episode is active
    are kept; the Flush+Reload receive phase issues hundreds of probes per
    attack and nothing downstream needs them. Emitters check :attr:`on`
    before building an event.
    """

    def __init__(self, engine, record_all: bool = True):
        self._engine = engine
        self.record_all = record_all
        self.events: list[TraceEvent] = []
        self._episode: Optional[int] = None
        self.on = record_all

    @property
    def episode(self) -> Optional[int]:
        return self._episode

    @episode.setter
    def episode(self, value: Optional[int]):
        self._episode = value
        self.on = self.record_all or value is not None

    def emit(self, kind: EventKind, **fields) -> None:
        if not self.on:
            return
        self.events.append(
            TraceEvent(self._engine.now(), len(self.events), kind, episode=self._episode, **fields)
        )

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_kind(self, *kinds: EventKind) -> list[TraceEvent]:
        ks = set(kinds)
        return [e for e in self.events if e.kind in ks]

    def dumps(self) -> str:
        """Canonical JSON-lines rendering, used for byte-level determinism checks."""
        return dumps_events(self.events)


def dumps_events(events: Iterable[TraceEvent]) -> str:
    return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in events)
