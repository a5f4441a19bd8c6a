from .bus import DirectPort, SnoopBus, snoop_broadcast_cancellation
from .cache import Cache, CacheLine, CancelOutcome, Mshr, Outcome, Target
from .functional import FunctionalHierarchy
from .hierarchy import MemorySystem
from .memory import MainMemory
from .messages import Cancellation, MemRequest, MemResponse, ReqKind, block_of

__all__ = [
    "Cache", "CacheLine", "CancelOutcome", "Cancellation", "DirectPort", "FunctionalHierarchy",
    "MainMemory", "MemRequest", "MemResponse", "MemorySystem", "Mshr", "Outcome", "ReqKind",
    "SnoopBus", "Target", "block_of", "snoop_broadcast_cancellation",
]
