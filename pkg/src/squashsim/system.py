"""One simulated machine: engine, trace, memory hierarchy and cores."""
from __future__ import annotations

import itertools

from .config import SystemConfig
from .corelsq import Core
from .memsys.cache import Cache
from .memsys.hierarchy import MemorySystem
from .metrics.trace import TraceRecorder
from .simcore import Engine


class System:
    def __init__(self, config: SystemConfig, cancel_enabled: bool = True, *, record_all: bool = True,
                 cache_cls=Cache, max_events: int = 20_000_000):
        self.config = config
        self.cancel_enabled = cancel_enabled
        self.engine = Engine(max_events=max_events)
        self.trace = TraceRecorder(self.engine, record_all=record_all)
        self._req_ids = itertools.count(1)
        self._inst_ids = itertools.count(1)
        self.memsys = MemorySystem(config, self.engine, self.trace, self.next_id, cache_cls)
        self.cores = [Core(i, self) for i in range(config.cores)]

    def next_id(self) -> int:
        return next(self._req_ids)

    def new_inst_id(self) -> int:
        return next(self._inst_ids)

    @property
    def memory(self):
        return self.memsys.memory

    def run(self) -> int:
        return self.engine.run_until_idle()
