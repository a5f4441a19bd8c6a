"""Fixed-latency backing memory. It has no cancellation port by design."""
from __future__ import annotations

from ..config import BLOCK_SIZE, MemoryConfig
from ..errors import ConfigError
from .messages import MemRequest, MemResponse

ZERO_BLOCK = bytes(BLOCK_SIZE)


class MainMemory:
    """Sparse byte store behind a FIFO pipe of constant latency.

    Data is read when the request arrives; the response is delivered to the
    requesting cache ``latency_ticks`` later carrying the request's MSHR
    index. Because the latency is constant, responses leave in arrival order.
    """

    name = "memory"

    def __init__(self, cfg: MemoryConfig, engine, trace=None):
        self.cfg = cfg
        self.engine = engine
        self.trace = trace
        self.latency = cfg.latency_ticks
        self.capacity = cfg.capacity_bytes
        self._store: dict[int, bytes] = {}
        self.requests_served = 0

    def check_addr(self, addr: int) -> None:
        if not 0 <= addr < self.capacity:
            raise ConfigError(f"address {addr:#x} outside physical memory (capacity {self.capacity:#x})")

    def send_request(self, req: MemRequest, sender=None) -> MemResponse:
        return self.memory_access(req)

    def memory_access(self, req: MemRequest) -> MemResponse:
        self.check_addr(req.addr)
        self.requests_served += 1
        resp = MemResponse(req.id, req.block, self.read_block(req.block), req.mshr_index, req)
        self.engine.schedule_in(self.latency, req.src.handle_response, resp)
        return resp

    # functional interface

    def read_block(self, block: int) -> bytes:
        return self._store.get(block, ZERO_BLOCK)

    def peek(self, block: int) -> bytes:
        return self.read_block(block)

    def absorb_writeback(self, block: int, data: bytes, sender=None) -> None:
        self.check_addr(block)
        self._store[block] = bytes(data)

    def write_bytes(self, addr: int, data: bytes) -> None:
        """Initialise memory contents (call before the caches hold the range)."""
        self.check_addr(addr)
        self.check_addr(addr + len(data) - 1)
        for i, b in enumerate(data):
            a = addr + i
            blk = a - a % BLOCK_SIZE
            cur = bytearray(self.read_block(blk))
            cur[a - blk] = b
            self._store[blk] = bytes(cur)

    def read_bytes(self, addr: int, n: int) -> bytes:
        out = bytearray()
        for a in range(addr, addr + n):
            blk = a - a % BLOCK_SIZE
            out.append(self.read_block(blk)[a - blk])
        return bytes(out)
