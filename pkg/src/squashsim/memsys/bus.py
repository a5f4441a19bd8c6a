"""Ports between cache levels.

:class:`SnoopBus` joins the private L1s to the first shared level. Every
cache on the segment sees every request and cancellation: a read for a block
that a peer L1 holds dirty is served by that peer (which allocates an MSHR
for the probe), and cancellations are snooped by all peers as well as
delivered downstream, so probe MSHRs get cleaned up.
"""
from __future__ import annotations

from .messages import Cancellation, MemRequest


class SnoopBus:
    name = "bus"

    def __init__(self, downstream):
        self.downstream = downstream
        self.caches: list = []
        # (cache name, request id, CancelOutcome) for every snooped cancellation
        self.snoop_log: list = []

    def attach(self, cache) -> None:
        self.caches.append(cache)
        cache.port = self

    def send_request(self, req: MemRequest, sender) -> None:
        if not req.kind.is_write:
            for peer in self.caches:
                if peer is not sender and peer.holds_dirty(req.block):
                    if peer.start_probe(req, self.downstream.latency):
                        return
                    # no MSHR free for the probe: write the line back now and let the shared level answer
                    peer.downgrade(req.block)
        self.downstream.receive_request(req)

    def send_cancellation(self, cxl: Cancellation, sender=None) -> None:
        for peer in self.caches:
            if peer is not sender:
                peer.receive_cancellation(cxl, snooped=True)
        self.downstream.receive_cancellation(cxl)

    def invalidate_peers(self, block: int, sender) -> None:
        for peer in self.caches:
            if peer is not sender:
                peer.snoop_invalidate(block)

    def absorb_writeback(self, block: int, data: bytes, sender=None) -> None:
        self.downstream.absorb_writeback(block, data, sender)

    def peek(self, block: int) -> bytes:
        return self.downstream.peek(block)


def snoop_broadcast_cancellation(bus: SnoopBus, cxl: Cancellation) -> None:
    """Place ``cxl`` on ``bus`` as if from outside: every attached cache handles it."""
    bus.send_cancellation(cxl, sender=None)


class DirectPort:
    """Point-to-point link from one shared level to the next."""

    def __init__(self, downstream):
        self.downstream = downstream

    def send_request(self, req, sender) -> None:
        self.downstream.receive_request(req)

    def send_cancellation(self, cxl, sender=None) -> None:
        self.downstream.receive_cancellation(cxl)

    def absorb_writeback(self, block, data, sender=None) -> None:
        self.downstream.absorb_writeback(block, data, sender)

    def peek(self, block):
        return self.downstream.peek(block)
