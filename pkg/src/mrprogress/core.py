"""Shared domain types: key hashing, cost models, job and cluster records."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

# Pinned personalization string for the key digest; changing it changes every trace.
_KEY_DIGEST_PERSON = b"mrprog-key-v1"

UINT64_MASK = (1 << 64) - 1

POLYNOMIAL = "polynomial"
PRODUCT = "product"
TABLE = "table"
COST_KINDS = (POLYNOMIAL, PRODUCT, TABLE)

PARTITIONERS = ("hash", "random", "unbalanced", "optimal")


class InvalidArgument(ValueError):
    """Raised when an operation receives an argument outside its contract."""


def hash_key(key_bytes: bytes) -> int:
    """Return the stable 64-bit KeyId of a serialized key."""
    if isinstance(key_bytes, str):
        key_bytes = key_bytes.encode("utf-8")
    if not key_bytes:
        raise InvalidArgument("hash_key: key bytes must be non-empty")
    digest = hashlib.blake2b(key_bytes, digest_size=8, person=_KEY_DIGEST_PERSON).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class KeyGroup:
    """An intermediate key with the byte size of its value set.

    ``factors`` carries the multiplicands of product-kind costs (e.g. the
    tuple counts n_R(k), n_S(k) of a join key); it is None for size-driven
    costs.
    """

    key: int
    size_bytes: int
    factors: Optional[tuple] = None

    def __post_init__(self):
        if self.size_bytes < 0:
            raise InvalidArgument(f"KeyGroup size must be >= 0, got {self.size_bytes}")


@dataclass(frozen=True)
class CostModel:
    kind: str = POLYNOMIAL
    coefficient: float = 1.0
    exponent: float = 1.0
    noise: float = 0.0
    # (size, ms) knots for the table kind, interpolated linearly
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise InvalidArgument(f"unknown cost kind {self.kind!r}")
        if not 0.0 <= self.noise < 1.0:
            raise InvalidArgument(f"noise must be in [0, 1), got {self.noise}")
        if self.exponent < 0:
            raise InvalidArgument(f"exponent must be >= 0, got {self.exponent}")
        if self.coefficient < 0:
            raise InvalidArgument(f"coefficient must be >= 0, got {self.coefficient}")
        if self.kind == TABLE and len(self.table) == 0:
            raise InvalidArgument("table cost model needs at least one knot")

    @classmethod
    def polynomial(cls, coefficient, exponent, noise=0.0):
        return cls(POLYNOMIAL, coefficient, exponent, noise)

    @classmethod
    def product(cls, coefficient, noise=0.0):
        return cls(PRODUCT, coefficient, 1.0, noise)

    @classmethod
    def lookup(cls, knots, noise=0.0):
        return cls(TABLE, 1.0, 1.0, noise, tuple(sorted((float(s), float(t)) for s, t in knots)))

    def to_dict(self):
        d = {"kind": self.kind, "coefficient": self.coefficient,
             "exponent": self.exponent, "noise": self.noise}
        if self.table:
            d["table"] = [list(k) for k in self.table]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", POLYNOMIAL), float(d.get("coefficient", 1.0)),
                   float(d.get("exponent", 1.0)), float(d.get("noise", 0.0)),
                   tuple(tuple(k) for k in d.get("table", ())))


def _table_lookup(knots, size):
    sizes = [k[0] for k in knots]
    if size <= sizes[0]:
        return knots[0][1]
    if size >= sizes[-1]:
        return knots[-1][1]
    for (s0, t0), (s1, t1) in zip(knots, knots[1:]):
        if s0 <= size <= s1:
            if s1 == s0:
                return t1
            return t0 + (t1 - t0) * (size - s0) / (s1 - s0)
    return knots[-1][1]


def eval_cost(model: CostModel, size_bytes, rng_seed: int = 0,
              factors: Optional[Sequence[float]] = None) -> float:
    """Running time in ms of one function invocation on ``size_bytes`` of input.

    Product models multiply ``factors`` (falling back to the size alone).
    Noise is a multiplicative ``1 + eps`` with eps uniform in [-noise, noise],
    drawn from a generator seeded with ``rng_seed``.
    """
    if size_bytes < 0:
        raise InvalidArgument(f"eval_cost: size must be >= 0, got {size_bytes}")
    if model.kind == POLYNOMIAL:
        base = model.coefficient * float(size_bytes) ** model.exponent
    elif model.kind == PRODUCT:
        base = model.coefficient * (math.prod(factors) if factors else float(size_bytes))
    else:
        base = _table_lookup(model.table, size_bytes)
    if model.noise > 0.0:
        eps = random.Random(rng_seed).uniform(-model.noise, model.noise)
        base *= 1.0 + eps
    return max(base, 0.0)


def function_seed(seed: int, key: int, salt: int = 0) -> int:
    # Combined without Python's salted hash() so seeds are stable across runs.
    return ((seed & UINT64_MASK) << 72) | ((salt & 0xFF) << 64) | (key & UINT64_MASK)


@dataclass(frozen=True)
class MapSplit:
    pairs: int
    bytes_per_pair: int

    @property
    def size_bytes(self):
        return self.pairs * self.bytes_per_pair


@dataclass(frozen=True)
class IntermediateKey:
    """A key as seen by the map side: bytes emitted for it by each map task."""

    key: int
    map_sizes: tuple
    factors: Optional[tuple] = None
    size_bytes: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "size_bytes", sum(self.map_sizes))

    def group(self) -> KeyGroup:
        return KeyGroup(self.key, self.size_bytes, self.factors)


@dataclass
class JobSpec:
    map_splits: list
    map_cost: CostModel
    reduce_cost: CostModel
    intermediate_keys: list
    reducer_count: int = 1
    partitioner: str = "hash"
    shuffle_rate: float = math.inf
    # Explicit key -> reduce task table; overrides the partitioner when set.
    assignment: Optional[dict] = None

    def __post_init__(self):
        if self.reducer_count < 1:
            raise InvalidArgument(f"reducer_count must be >= 1, got {self.reducer_count}")
        if self.partitioner not in PARTITIONERS:
            raise InvalidArgument(f"unknown partitioner {self.partitioner!r}")
        if not self.shuffle_rate > 0:
            raise InvalidArgument(f"shuffle_rate must be > 0, got {self.shuffle_rate}")
        n_maps = len(self.map_splits)
        for ik in self.intermediate_keys:
            if len(ik.map_sizes) != n_maps:
                raise InvalidArgument(
                    f"key {ik.key:#x} has {len(ik.map_sizes)} map sizes for {n_maps} map tasks")

    @property
    def map_count(self):
        return len(self.map_splits)

    @property
    def shuffle_bytes(self):
        return sum(ik.size_bytes for ik in self.intermediate_keys)


@dataclass(frozen=True)
class ClusterSpec:
    worker_count: int = 1
    slots_per_worker: int = 1

    @property
    def parallelism(self):
        return self.worker_count * self.slots_per_worker


@dataclass(frozen=True)
class DeltaPolicy:
    """Width of the nearest-neighbour window: max(floor, fraction * x)."""

    floor_bytes: float = 64.0
    fraction: float = 0.05

    def __post_init__(self):
        if self.floor_bytes < 0 or self.fraction < 0 or (self.floor_bytes == 0 and self.fraction == 0):
            raise InvalidArgument("delta policy must give a positive width")

    def delta(self, x):
        return max(self.floor_bytes, self.fraction * x)


@dataclass(frozen=True)
class NearestFitConfig:
    # None means "track every key" (the exact key-distribution profile)
    lam: Optional[int] = 2000
    master_sketch_capacity: Optional[int] = None
    delta_policy: DeltaPolicy = field(default_factory=DeltaPolicy)
    r2_threshold: float = 0.9
    smoothing_window_ms: float = 500.0
    burst_size_threshold_bytes: int = 50
    burst_skip_threshold: int = 100
    update_interval_ms: int = 60000
    ewma_alpha: float = 0.3
    match_tolerance: float = 0.05
    histogram_capacity: int = 1024

    def __post_init__(self):
        if self.lam is not None and self.lam < 1:
            raise InvalidArgument(f"lambda must be >= 1, got {self.lam}")
        if not 0.0 < self.r2_threshold <= 1.0:
            raise InvalidArgument(f"r2_threshold must be in (0, 1], got {self.r2_threshold}")
        if not 0.0 < self.ewma_alpha <= 1.0:
            raise InvalidArgument(f"ewma_alpha must be in (0, 1], got {self.ewma_alpha}")
        for name in ("smoothing_window_ms", "burst_size_threshold_bytes",
                     "burst_skip_threshold", "update_interval_ms", "histogram_capacity"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")

    @property
    def sketch_capacity(self) -> Optional[int]:
        if self.lam is None:
            return None
        if self.master_sketch_capacity is not None:
            return self.master_sketch_capacity
        return 35 * self.lam
