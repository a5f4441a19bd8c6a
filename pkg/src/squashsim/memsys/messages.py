"""Messages exchanged between the core, the caches and main memory."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from ..config import BLOCK_SIZE


class ReqKind(str, Enum):
    DATA_READ = "DataRead"
    DATA_WRITE = "DataWrite"
    INST_FETCH = "InstFetch"
    PAGE_TABLE_WALK = "PageTableWalk"

    @property
    def is_write(self) -> bool:
        return self is ReqKind.DATA_WRITE


def block_of(addr: int) -> int:
    return addr - addr % BLOCK_SIZE


@dataclass(eq=False)
class MemRequest:
    """A request travelling core -> memory.

    Requests issued by the core have ``origin=None``. A request a cache sends
    downstream on a miss points ``origin`` at the MSHR that sent it and
    carries that MSHR's index, which the responder copies into the response.
    """

    id: int
    addr: int
    kind: ReqKind = ReqKind.DATA_READ
    speculative: bool = False
    inst_id: Optional[int] = None
    issue_tick: int = 0
    src: Any = None
    mshr_index: Optional[int] = None
    origin: Any = None
    origin_name: Optional[str] = None
    wdata: Optional[bytes] = None
    label: Optional[str] = None

    @property
    def block(self) -> int:
        return self.addr - self.addr % BLOCK_SIZE

    def chain_ids(self) -> frozenset:
        """Core-issued request ids this request is currently serving."""
        if self.origin is None:
            return frozenset((self.id,))
        return self.origin.chain_ids()


@dataclass(frozen=True)
class Cancellation:
    request_id: int
    block: int
    # core request ids on whose behalf the cancellation travels (tracing only)
    chain: tuple = field(default=(), compare=False)


@dataclass(frozen=True, eq=False)
class MemResponse:
    request_id: int
    block: int
    data: bytes
    mshr_index: Optional[int]
    request: MemRequest = field(repr=False, default=None)
