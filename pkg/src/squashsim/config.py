"""System configurations and the built-in presets.

Presets ``c1`` and ``c2`` are the two case-study machines (C2 is C1 with a
100 MHz core and 80-cycle caches); ``perf1``/``perf4`` are the one- and
four-core machines used for performance runs. Main memory is a fixed-latency
pipe, 50 ns by default, clocked independently of the core.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .simcore import ClockDomain

SCHEMA_VERSION = 1
BLOCK_SIZE = 64

KB = 1024
MB = 1024 * KB
GB = 1024 * MB


@dataclass(frozen=True)
class CacheLevelConfig:
    size_bytes: int
    associativity: int
    hit_latency_cycles: int
    mshr_count: int = 4
    max_targets: int = 20
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        for name in ("size_bytes", "associativity", "hit_latency_cycles", "mshr_count", "max_targets"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.block_size != BLOCK_SIZE:
            raise ConfigError(f"block_size must be {BLOCK_SIZE}")
        if self.size_bytes % (self.associativity * self.block_size):
            raise ConfigError(
                f"size {self.size_bytes} not divisible by associativity x block size "
                f"({self.associativity} x {self.block_size})"
            )

    @property
    def num_sets(self) -> int:
        return self.size_bytes // (self.associativity * self.block_size)


@dataclass(frozen=True)
class MemoryConfig:
    access_latency_ns: float = 50.0
    capacity_bytes: int = 3 * GB

    def __post_init__(self):
        if self.access_latency_ns <= 0:
            raise ConfigError("memory latency must be positive")
        if self.capacity_bytes < BLOCK_SIZE or self.capacity_bytes % BLOCK_SIZE:
            raise ConfigError("memory capacity must be a positive multiple of the block size")

    @property
    def latency_ticks(self) -> int:
        return max(1, round(self.access_latency_ns * 1000))


@dataclass(frozen=True)
class SystemConfig:
    """Cores with private L1I/L1D, followed by ``shared`` levels L2..LK, then memory."""

    name: str
    cores: int
    core_frequency_hz: int
    l1i: CacheLevelConfig
    l1d: CacheLevelConfig
    shared: tuple[CacheLevelConfig, ...]
    memory: MemoryConfig = field(default_factory=MemoryConfig)

    def __post_init__(self):
        if not 1 <= self.cores <= 4:
            raise ConfigError(f"1-4 cores supported, got {self.cores}")
        if self.core_frequency_hz < 1:
            raise ConfigError("core frequency must be positive")
        if not self.shared:
            raise ConfigError("at least one shared cache level is required")

    @property
    def K(self) -> int:
        """Number of data-cache levels."""
        return 1 + len(self.shared)

    @property
    def clock(self) -> ClockDomain:
        return ClockDomain(self.core_frequency_hz)

    def level(self, i: int) -> CacheLevelConfig:
        if i == 1:
            return self.l1d
        return self.shared[i - 2]

    def data_latencies(self) -> dict[str, int]:
        """Load-to-use latency in core cycles for a hit at each level and for a full miss."""
        clk = self.clock
        out = {}
        acc = 0
        for i in range(1, self.K + 1):
            acc += self.level(i).hit_latency_cycles
            out[f"L{i}"] = acc
        out["memory"] = clk.to_cycles(clk.cycles(acc) + self.memory.latency_ticks)
        return out

    def with_overrides(self, **kw) -> "SystemConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shared"] = [asdict(c) for c in self.shared]
        return {"schema_version": SCHEMA_VERSION, **d}


def _c1() -> SystemConfig:
    return SystemConfig(
        name="c1",
        cores=2,
        core_frequency_hz=3_000_000_000,
        l1i=CacheLevelConfig(32 * KB, 8, 4),
        l1d=CacheLevelConfig(32 * KB, 8, 4),
        shared=(CacheLevelConfig(512 * KB, 16, 14, mshr_count=20, max_targets=12),),
    )


def _c2() -> SystemConfig:
    return SystemConfig(
        name="c2",
        cores=2,
        core_frequency_hz=100_000_000,
        l1i=CacheLevelConfig(32 * KB, 8, 80),
        l1d=CacheLevelConfig(32 * KB, 8, 80),
        shared=(CacheLevelConfig(512 * KB, 16, 80, mshr_count=20, max_targets=12),),
    )


def _perf(cores: int) -> SystemConfig:
    return SystemConfig(
        name=f"perf{cores}",
        cores=cores,
        core_frequency_hz=3_000_000_000,
        l1i=CacheLevelConfig(32 * KB, 2, 1),
        l1d=CacheLevelConfig(64 * KB, 2, 2),
        shared=(CacheLevelConfig(2 * MB * cores, 8, 20, mshr_count=20, max_targets=12),),
    )


PRESETS = {
    "c1": _c1,
    "c2": _c2,
    "perf1": lambda: _perf(1),
    "perf4": lambda: _perf(4),
}


def preset(name: str) -> SystemConfig:
    try:
        return PRESETS[name.lower()]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _level_from_dict(d: dict) -> CacheLevelConfig:
    try:
        return CacheLevelConfig(**d)
    except TypeError as e:
        raise ConfigError(f"bad cache level: {e}") from None


def config_from_dict(d: dict) -> SystemConfig:
    """Build a config from its JSON form.

    Either ``{"preset": "c1", ...overrides}`` or a full description with
    ``cores``, ``core_frequency_hz``, ``l1i``, ``l1d``, ``shared`` and
    ``memory``. Overrides on a preset may replace any top-level field.
    """
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r}")
    d = {k: v for k, v in d.items() if k != "schema_version"}
    base = preset(d.pop("preset")) if "preset" in d else None
    kw = {}
    for key in ("l1i", "l1d"):
        if key in d:
            kw[key] = _level_from_dict(d.pop(key))
    if "shared" in d:
        kw["shared"] = tuple(_level_from_dict(x) for x in d.pop("shared"))
    if "memory" in d:
        try:
            kw["memory"] = MemoryConfig(**d.pop("memory"))
        except TypeError as e:
            raise ConfigError(f"bad memory config: {e}") from None
    for key in ("name", "cores", "core_frequency_hz"):
        if key in d:
            kw[key] = d.pop(key)
    if d:
        raise ConfigError(f"unknown config fields: {sorted(d)}")
    if base is not None:
        return replace(base, **kw)
    missing = {"cores", "core_frequency_hz", "l1i", "l1d", "shared"} - kw.keys()
    if missing:
        raise ConfigError(f"config missing fields: {sorted(missing)}")
    kw.setdefault("name", "custom")
    return SystemConfig(**kw)


def load_config(ref: str | Path) -> SystemConfig:
    """Resolve a preset name or read a JSON config file."""
    if isinstance(ref, str) and ref.lower() in PRESETS:
        return preset(ref)
    path = Path(ref)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return config_from_dict(data)
