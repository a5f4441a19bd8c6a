"""Spectre-style attacks run end to end on the simulator.

An attack leaks a secret one byte at a time. Each attempt flushes the bounds
variable (which widens the speculation window), runs one mispredicted
episode whose body is ``access`` (read the secret byte out of bounds) then
``transmit`` (touch ``timing_base + byte * stride``), and finally times
every slot of the timing array to see which one became cheap.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from .config import BLOCK_SIZE, SCHEMA_VERSION, SystemConfig, config_from_dict, load_config, preset
from .corelsq import BodyLoad, EpisodeOutcome, SpeculationEpisode
from .errors import ConfigError
from .memsys.cache import Cache
from .metrics.attacks import AttackRecord, cc_report, pair_attacks
from .metrics.cc import CCReport
from .system import System

DEFAULT_SECRET = b"SQUASHME_16CHARS"
DEFAULT_BUDGET = 100
UNRECOVERED = ord("?")


class Variant(str, Enum):
    SPECTRE_PHT = "SpectrePHT"
    RET2SPEC = "Ret2Spec"


class ReceiveMode(str, Enum):
    FLUSH_RELOAD = "FlushReload"
    EVICT_L1_ONLY = "EvictL1Only"


# EvictL1Only keeps all 256 slots resident in L2, so they must spread over its sets
DEFAULT_STRIDE = {ReceiveMode.FLUSH_RELOAD: 4096, ReceiveMode.EVICT_L1_ONLY: 4096 + BLOCK_SIZE}


@dataclass(frozen=True)
class MemoryLayout:
    array1: int = 0x0010_0000
    array1_size: int = 16
    secret: int = 0x0010_0400
    bound: int = 0x0020_0000  # array1_size lives here; flushed every attempt
    return_slot: int = 0x0030_0000  # Ret2Spec: stack slot holding the return address
    timing_base: int = 0x0100_0000

    def condition_addr(self, variant: Variant) -> int:
        return self.return_slot if variant is Variant.RET2SPEC else self.bound


@dataclass
class AttackScenario:
    variant: Variant = Variant.SPECTRE_PHT
    secret: bytes = DEFAULT_SECRET
    secret_cached_each_iter: bool = False
    config_preset: str = "c1"
    config: Optional[SystemConfig] = None
    cancel_enabled: bool = True
    budget: int = DEFAULT_BUDGET
    receive_mode: ReceiveMode = ReceiveMode.FLUSH_RELOAD
    hit_threshold_cycles: Optional[int] = None
    stride: Optional[int] = None
    layout: MemoryLayout = field(default_factory=MemoryLayout)
    resolve_latency_cycles: int = 10
    dispatch_delay_cycles: int = 40
    compute_cycles: int = 2
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.receive_mode = ReceiveMode(self.receive_mode)
        if self.config is None:
            self.config = preset(self.config_preset)
        if self.stride is None:
            self.stride = DEFAULT_STRIDE[self.receive_mode]
        if self.hit_threshold_cycles is None:
            self.hit_threshold_cycles = default_threshold(self.config, self.receive_mode)
        self.validate()

    def validate(self) -> None:
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if not self.secret:
            raise ConfigError("secret must not be empty")
        if self.stride < BLOCK_SIZE or self.stride % BLOCK_SIZE:
            raise ConfigError("stride must be a positive multiple of the block size")
        lat = self.config.data_latencies()
        if not lat["L1"] < self.hit_threshold_cycles < lat["memory"]:
            raise ConfigError(
                f"threshold {self.hit_threshold_cycles} must lie strictly between the L1 hit "
                f"({lat['L1']}) and full miss ({lat['memory']}) latencies"
            )
        lay = self.layout
        cap = self.config.memory.capacity_bytes
        top = lay.timing_base + 255 * self.stride + BLOCK_SIZE
        if top > cap:
            raise ConfigError("timing array does not fit in physical memory")
        if lay.array1 <= lay.secret < lay.array1 + lay.array1_size:
            raise ConfigError("the secret must lie outside array1")
        if lay.timing_base <= lay.secret + len(self.secret) and lay.secret < top:
            raise ConfigError("the secret overlaps the timing array")
        for v in (self.resolve_latency_cycles, self.dispatch_delay_cycles):
            if v < 0:
                raise ConfigError("episode latencies must be non-negative")
        if self.compute_cycles < 1:
            raise ConfigError("compute_cycles must be >= 1")

    # ------------------------------------------------------------ JSON form

    def to_dict(self) -> dict:
        cfg = self.config.to_dict()
        cfg.pop("schema_version")
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "variant": self.variant.value,
            "secret": self.secret.decode("latin-1"),
            "secret_cached_each_iter": self.secret_cached_each_iter,
            "config_preset": self.config_preset,
            "config": cfg,
            "cancel_enabled": self.cancel_enabled,
            "budget": self.budget,
            "receive_mode": self.receive_mode.value,
            "hit_threshold_cycles": self.hit_threshold_cycles,
            "stride": self.stride,
            "resolve_latency_cycles": self.resolve_latency_cycles,
            "dispatch_delay_cycles": self.dispatch_delay_cycles,
            "compute_cycles": self.compute_cycles,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackScenario":
        if not isinstance(d, dict):
            raise ConfigError("scenario must be a JSON object")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported scenario schema_version {d.get('schema_version')!r}")
        d = dict(d)
        d.pop("schema_version")
        known = {f for f in cls.__dataclass_fields__} - {"layout"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown scenario fields: {sorted(extra)}")
        if "secret" in d:
            try:
                d["secret"] = d["secret"].encode("latin-1")
            except (AttributeError, UnicodeEncodeError):
                raise ConfigError("secret must be a string of 8-bit characters") from None
        if "config" in d and d["config"] is not None:
            d["config"] = config_from_dict(d["config"])
        try:
            return cls(**d)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"bad scenario: {e}") from None


def default_threshold(config: SystemConfig, mode: ReceiveMode) -> int:
    """FlushReload: midway between an LLC hit and a full miss. EvictL1Only: between L1 and L2 hits."""
    lat = config.data_latencies()
    if mode is ReceiveMode.EVICT_L1_ONLY:
        return (lat["L1"] + lat["L2"]) // 2
    return (lat[f"L{config.K}"] + lat["memory"]) // 2


def build_scenario(variant=Variant.SPECTRE_PHT, preset_ref="c1", **options) -> AttackScenario:
    """``preset_ref`` is a preset name, a JSON config path, or a :class:`SystemConfig`."""
    if isinstance(preset_ref, SystemConfig):
        cfg, name = preset_ref, "custom"
    else:
        cfg = load_config(preset_ref)
        name = preset_ref if str(preset_ref).lower() in ("c1", "c2", "perf1", "perf4") else "custom"
    return AttackScenario(variant=Variant(variant), config_preset=name, config=cfg, **options)


NAMED_SCENARIOS = {
    "spectre_pht": dict(variant=Variant.SPECTRE_PHT),
    "spectre_pht_cached": dict(variant=Variant.SPECTRE_PHT, secret_cached_each_iter=True),
    "ret2spec": dict(variant=Variant.RET2SPEC),
    "ret2spec_cached": dict(variant=Variant.RET2SPEC, secret_cached_each_iter=True),
    "spectre_pht_evict": dict(variant=Variant.SPECTRE_PHT, receive_mode=ReceiveMode.EVICT_L1_ONLY),
    "spectre_pht_evict_cached": dict(variant=Variant.SPECTRE_PHT, receive_mode=ReceiveMode.EVICT_L1_ONLY,
                                     secret_cached_each_iter=True),
}


def load_scenario(ref, config: Optional[SystemConfig] = None, **overrides) -> AttackScenario:
    """Resolve a named scenario or a JSON scenario file; ``config`` replaces its system config."""
    if isinstance(ref, str) and ref in NAMED_SCENARIOS:
        opts = {**NAMED_SCENARIOS[ref], **overrides}
        if config is not None:
            return AttackScenario(config_preset=config.name, config=config, name=ref, **opts)
        return AttackScenario(name=ref, **opts)
    path = Path(ref)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e.strerror or e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    sc = AttackScenario.from_dict(data)
    changes = dict(overrides)
    if config is not None:
        changes.update(config=config, config_preset=config.name, hit_threshold_cycles=None)
    if changes:
        sc = replace(sc, **changes)
    return sc


# ------------------------------------------------------------------- running

@dataclass
class AttackOutcome:
    scenario: AttackScenario
    leaked: bytes
    attacks_attempted: int
    records: list[AttackRecord]
    timed_out: bool
    episodes: list[EpisodeOutcome] = field(default_factory=list, repr=False)
    # per attempt: levels holding the true secret's timing slot right after the episode
    ground_truth: list[frozenset] = field(default_factory=list, repr=False)
    # per attempt: the receive phase's candidate byte (or None)
    candidates: list[Optional[int]] = field(default_factory=list, repr=False)
    system: Optional[System] = field(default=None, repr=False)

    @property
    def bytes_recovered(self) -> int:
        return sum(a == b for a, b in zip(self.leaked, self.scenario.secret))

    @property
    def full_secret(self) -> bool:
        return self.leaked == self.scenario.secret

    def cc(self) -> CCReport:
        return cc_report(self.records, self.scenario.config.K)

    def summary(self) -> dict:
        rep = self.cc()
        return {
            "scenario": self.scenario.name,
            "variant": self.scenario.variant.value,
            "config": self.scenario.config.name,
            "cancel_enabled": self.scenario.cancel_enabled,
            "cc": rep.to_dict()["cc"],
            "N": list(rep.N),
            "N_total": rep.N_total,
            "leaked": self.leaked.decode("latin-1"),
            "bytes_recovered": self.bytes_recovered,
            "attacks_attempted": self.attacks_attempted,
            "timed_out": self.timed_out,
        }


def _printable(b: Optional[int]) -> bool:
    return b is not None and 0x20 <= b < 0x7F


def probe_order(seed: int) -> list[int]:
    return random.Random(seed).sample(range(256), 256)


def receive_flush_reload(system: System, timing_base: int, stride: int, threshold: int,
                         order=None, core: int = 0) -> Optional[int]:
    """Time every slot, flushing each one after its probe. Returns the unique fast slot, if any."""
    c = system.cores[core]
    fast = []
    for i in order if order is not None else range(256):
        a = timing_base + i * stride
        if c.timed_probe(a) < threshold:
            fast.append(i)
        system.memsys.flush_block(a)
    return fast[0] if len(fast) == 1 else None


def receive_evict_variant(system: System, timing_base: int, stride: int, threshold: int,
                          order=None, core: int = 0) -> Optional[int]:
    """Like Flush+Reload, but slots live in L2 and each probe is followed by an L1-only eviction."""
    c = system.cores[core]
    fast = []
    for i in order if order is not None else range(256):
        a = timing_base + i * stride
        if c.timed_probe(a) < threshold:
            fast.append(i)
        system.memsys.evict_block_from_level(1, a, core)
    return fast[0] if len(fast) == 1 else None


def prime_evict_array(system: System, timing_base: int, stride: int, core: int = 0) -> None:
    c = system.cores[core]
    for i in range(256):
        a = timing_base + i * stride
        c.timed_probe(a)
        system.memsys.evict_block_from_level(1, a, core)


def run_attack(sc: AttackScenario, *, record_all: bool = False, cache_cls=Cache) -> AttackOutcome:
    sysm = System(sc.config, cancel_enabled=sc.cancel_enabled, record_all=record_all, cache_cls=cache_cls)
    core = sysm.cores[0]
    lay = sc.layout
    mem = sysm.memory
    mem.write_bytes(lay.array1, bytes(range(1, lay.array1_size + 1)))
    mem.write_bytes(lay.secret, sc.secret)
    mem.write_bytes(lay.bound, lay.array1_size.to_bytes(8, "little"))
    mem.write_bytes(lay.return_slot, (0x40_0000).to_bytes(8, "little"))

    base, stride, thr = lay.timing_base, sc.stride, sc.hit_threshold_cycles
    order = probe_order(sc.seed)
    if sc.receive_mode is ReceiveMode.EVICT_L1_ONLY:
        prime_evict_array(sysm, base, stride)
        receive = receive_evict_variant
    else:
        for i in range(256):
            sysm.memsys.flush_block(base + i * stride)
        receive = receive_flush_reload
    cond = lay.condition_addr(sc.variant)
    source = "rsb" if sc.variant is Variant.RET2SPEC else "pht"

    leaked = bytearray()
    attempts = 0
    timed_out = False
    episodes, truth, cands = [], [], []
    for ci, true_byte in enumerate(sc.secret):
        target = lay.secret + ci
        got = None
        for _ in range(sc.budget):
            attempts += 1
            if sc.secret_cached_each_iter:
                core.timed_probe(target)
            sysm.memsys.flush_block(cond)
            ep = SpeculationEpisode(
                episode_no=attempts,
                condition_load_addr=cond,
                body=[
                    BodyLoad("access", addr=target),
                    BodyLoad("transmit", address_fn=lambda v: base + v * stride),
                ],
                resolve_latency_cycles=sc.resolve_latency_cycles,
                dispatch_delay_cycles=sc.dispatch_delay_cycles,
                compute_cycles=sc.compute_cycles,
                source=source,
            )
            episodes.append(core.run_episode(ep))
            truth.append(frozenset(sysm.memsys.resident_levels(base + true_byte * stride)))
            cand = receive(sysm, base, stride, thr, order)
            cands.append(cand)
            if _printable(cand):
                got = cand
                break
        if got is None:
            timed_out = True
            break
        leaked.append(got)
    leaked.extend([UNRECOVERED] * (len(sc.secret) - len(leaked)))
    records = pair_attacks(sysm.trace)
    return AttackOutcome(sc, bytes(leaked), attempts, records, timed_out, episodes, truth, cands, sysm)


# --------------------------------------------------------------- experiments

EXPERIMENTS = {
    1: dict(cancel_enabled=False, secret_cached_each_iter=False, config_preset="c1"),
    2: dict(cancel_enabled=True, secret_cached_each_iter=False, config_preset="c1"),
    3: dict(cancel_enabled=True, secret_cached_each_iter=True, config_preset="c1"),
    4: dict(cancel_enabled=True, secret_cached_each_iter=True, config_preset="c2"),
}


def experiment_scenario(n: int, cancel: Optional[bool] = None, **overrides) -> AttackScenario:
    if n not in EXPERIMENTS:
        raise ConfigError(f"no experiment {n}; choose from {sorted(EXPERIMENTS)}")
    opts = {**EXPERIMENTS[n], **overrides}
    if cancel is not None:
        opts["cancel_enabled"] = cancel
    return AttackScenario(variant=Variant.SPECTRE_PHT, name=f"experiment{n}", **opts)


@dataclass
class ExperimentResult:
    number: int
    outcome: AttackOutcome

    @property
    def report(self) -> CCReport:
        return self.outcome.cc()

    def row(self) -> dict:
        rep = self.report
        return {
            "experiment": self.number,
            "leaked": self.outcome.full_secret,
            "N_1": rep.N[0],
            "N_2": rep.N[1] if rep.K > 1 else 0,
            "N_total": rep.N_total,
            "cc": rep.cc_text,
        }


def run_experiments(only=None, cancel: Optional[bool] = None) -> list[ExperimentResult]:
    nums = sorted(EXPERIMENTS) if only is None else [only] if isinstance(only, int) else list(only)
    return [ExperimentResult(n, run_attack(experiment_scenario(n, cancel))) for n in nums]
