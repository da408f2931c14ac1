"""Simulation configuration and its file loader."""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass
from pathlib import Path


class FpMechanism(enum.Enum):
    NONE = "none"
    TOKEN = "token"
    SORTED = "sorted"

    @classmethod
    def parse(cls, value: "str | FpMechanism") -> "FpMechanism":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"sortedseq": "sorted", "sorted_seq": "sorted", "sorted-seq": "sorted"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class SimConfig:
    """Machine parameters for one simulator instance.

    Defaults follow the evaluated system: 64 B lines, a 64 KB 8-way L1 with
    8 TSHRs and a 1-cycle hit, and a 12-cycle shared L2/directory. Latencies
    that the machine description leaves open (interconnect hop, forward
    progress windows) use fixed values that exceed one directory round trip.
    """

    num_cores: int = 8
    line_size: int = 64
    l1_size: int = 64 * 1024
    l1_assoc: int = 8
    num_tshrs: int = 8
    l1_hit_latency: int = 1
    l2_latency: int = 12
    hop_latency: int = 4
    fp_mechanism: FpMechanism = FpMechanism.NONE
    token_line: int = 0x7FFF_0000
    repeated_match_threshold: int = 2
    abort_streak_bits: int = 2
    token_wait_window: int = 32
    seq_stall_bound: int = 64
    commit_write_latency: int = 1
    seed: int = 0
    # test-only: request exclusivity at every transactional store
    eager_exclusivity: bool = False
    check_invariants: bool = True

    def __post_init__(self):
        object.__setattr__(self, "fp_mechanism", FpMechanism.parse(self.fp_mechanism))
        if self.line_size <= 0 or self.line_size & (self.line_size - 1):
            raise ValueError(f"line_size must be a power of two, got {self.line_size}")
        if self.line_size % 8:
            raise ValueError("line_size must hold a whole number of 8-byte words")
        if self.l1_size % self.line_size:
            raise ValueError("line_size must divide l1_size")
        if self.l1_assoc < 1:
            raise ValueError("l1_assoc must be at least 1")
        if (self.l1_size // self.line_size) % self.l1_assoc:
            raise ValueError("l1_assoc must divide the number of L1 lines")
        if not 1 <= self.num_tshrs <= self.l1_assoc:
            raise ValueError("num_tshrs must be between 1 and l1_assoc")
        if self.num_cores < 1:
            raise ValueError("num_cores must be at least 1")
        if self.token_line % self.line_size:
            raise ValueError("token_line must be line aligned")
        for name in ("l1_hit_latency", "l2_latency", "hop_latency", "commit_write_latency"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.abort_streak_bits < 1:
            raise ValueError("abort_streak_bits must be at least 1")

    @property
    def num_sets(self) -> int:
        return self.l1_size // (self.line_size * self.l1_assoc)

    @property
    def words_per_line(self) -> int:
        return self.line_size // 8

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["fp_mechanism"] = self.fp_mechanism.value
        return out


def config_from_mapping(data: dict, base: SimConfig | None = None) -> SimConfig:
    base = base or SimConfig()
    known = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return base.replace(**data)


def load_config(path: str | Path, base: SimConfig | None = None) -> SimConfig:
    """Read a JSON or TOML key/value file whose keys are SimConfig field names."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    return config_from_mapping(data, base)
