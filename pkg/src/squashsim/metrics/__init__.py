from .attacks import (
    AttackRecord, InstructionRecord, cc_report, export_timeline, pair_attacks, render_timeline, timeline_rows,
    write_json,
)
from .cc import CCReport, compute_cc, render_cc
from .trace import EventKind, TraceEvent, TraceRecorder, dumps_events

__all__ = [
    "AttackRecord", "CCReport", "EventKind", "InstructionRecord", "TraceEvent", "TraceRecorder",
    "cc_report", "compute_cc", "dumps_events", "export_timeline", "pair_attacks", "render_cc",
    "render_timeline", "timeline_rows", "write_json",
]
