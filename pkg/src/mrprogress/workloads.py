"""Synthetic workloads: sigma-skewed key groups, Zipf relations and joins, blocked MatMult."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import InvalidArgument, IntermediateKey, KeyGroup, hash_key


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SkewSpec:
    sigma: float
    n_max: int
    total_budget: Optional[int] = None

    def __post_init__(self):
        if not self.sigma > 1:
            raise InvalidArgument(f"sigma must be > 1, got {self.sigma}")
        if self.n_max < 1:
            raise InvalidArgument(f"n_max must be >= 1, got {self.n_max}")
        if self.total_budget is not None and self.total_budget < 1:
            raise InvalidArgument(f"total_budget must be >= 1, got {self.total_budget}")


@dataclass(frozen=True)
class ZipfSpec:
    skew: float
    distinct_keys: int
    tuples: int

    def __post_init__(self):
        if not self.skew > 0:
            raise InvalidArgument(f"zipf skew must be > 0, got {self.skew}")
        if self.distinct_keys < 1:
            raise InvalidArgument("distinct_keys must be >= 1")
        if self.tuples < 1:
            raise InvalidArgument("tuples must be >= 1")


def _fresh_key(label, used):
    key = hash_key(label.encode())
    salt = 0
    while key in used:
        salt += 1
        key = hash_key(f"{label}#{salt}".encode())
    used.add(key)
    return key


def gen_sigma_skew(spec: SkewSpec, namespace: str = "sigma") -> list:
    """Level i holds round(sigma**i) groups of round(n_max / sigma**i) bytes.

    Levels run while n_max / sigma**i >= 1 (before rounding), and stop before
    the level that would push the total past ``total_budget``.
    """
    out = []
    used = set()
    total = 0
    for i in itertools.count():
        exact = spec.n_max / spec.sigma ** i
        if exact < 1:
            break
        size = round_half_up(exact)
        count = round_half_up(spec.sigma ** i)
        if spec.total_budget is not None and total + size * count > spec.total_budget:
            break
        for j in range(count):
            out.append(KeyGroup(_fresh_key(f"{namespace}:{i}:{j}", used), size))
        total += size * count
    return out


def gen_zipf_relation(spec: ZipfSpec, seed: int = 0, mode: str = "quota",
                      namespace: str = "zipf"):
    """(KeyId, multiplicity) pairs in rank order; zero-multiplicity keys are dropped.

    ``quota`` gives rank k the count floor(C * k**-s) with C normalising to
    ``tuples``; ``sample`` draws ``tuples`` tuples at random (seeded).
    Key identities depend on ``namespace`` only, so two relations built with
    the same namespace share their key ranking.
    """
    ranks = np.arange(1, spec.distinct_keys + 1, dtype=float)
    weights = ranks ** -spec.skew
    if mode == "quota":
        C = spec.tuples / weights.sum()
        counts = np.floor(C * weights + 1e-9).astype(np.int64)
    elif mode == "sample":
        rng = np.random.default_rng(seed)
        counts = rng.multinomial(spec.tuples, weights / weights.sum())
    else:
        raise InvalidArgument(f"unknown zipf mode {mode!r}")
    used = set()
    out = []
    for r, n in enumerate(counts.tolist(), start=1):
        key = _fresh_key(f"{namespace}:{r}", used)
        if n > 0:
            out.append((key, int(n)))
    return out


def spread_round_robin(groups, map_tasks: int, unit_bytes: int = 1):
    """Deal each group's values (``unit_bytes`` each) round-robin over map tasks.

    The dealing cursor carries over between groups so small groups do not
    all land on map task 0.
    """
    if map_tasks < 1:
        raise InvalidArgument("map_tasks must be >= 1")
    cursor = 0
    out = []
    for g in groups:
        units, rem = divmod(g.size_bytes, unit_bytes)
        per = [0] * map_tasks
        q, r = divmod(units, map_tasks)
        for j in range(map_tasks):
            per[j] = q * unit_bytes
        for off in range(r):
            per[(cursor + off) % map_tasks] += unit_bytes
        per[(cursor + r) % map_tasks] += rem
        cursor = (cursor + units) % map_tasks
        out.append(IntermediateKey(g.key, tuple(per), g.factors))
    return out


def gen_join(r_spec: ZipfSpec, s_spec: Optional[ZipfSpec] = None, *, s_const: int = 1,
             tuple_bytes: int = 16, map_tasks: int = 4, seed: int = 0, mode: str = "quota",
             namespace: str = "join"):
    """NaturalJoin key groups: size (n_R + n_S) * tuple_bytes, cost factors (n_R, n_S).

    Without ``s_spec`` every key of R has ``s_const`` partner tuples in S.
    """
    r = gen_zipf_relation(r_spec, seed, mode, namespace=namespace)
    if s_spec is None:
        s = {k: s_const for k, _ in r}
    else:
        s = dict(gen_zipf_relation(s_spec, seed + 1, mode, namespace=namespace))
    groups = []
    for key, n_r in r:
        n_s = s.get(key, 0)
        if n_s == 0:
            continue
        groups.append(KeyGroup(key, (n_r + n_s) * tuple_bytes, (n_r, n_s)))
    return spread_round_robin(groups, map_tasks, tuple_bytes)


@dataclass
class MatMultWorkload:
    keys: list  # IntermediateKey, one per block product
    assignment: list  # reduce task -> list of KeyIds
    block_side: int
    densities: dict = field(default_factory=dict)  # key -> (d, d')

    def task_of(self):
        return {k: i for i, ks in enumerate(self.assignment) for k in ks}

    def task_costs(self):
        cost = {ik.key: math.prod(ik.factors) for ik in self.keys}
        return [sum(cost[k] for k in ks) for ks in self.assignment]


def lpt_assign(costs, bins: int, ids=None):
    """Greedy longest-processing-time assignment; returns lists of ids per bin."""
    ids = list(range(len(costs))) if ids is None else list(ids)
    order = sorted(range(len(costs)), key=lambda i: (-costs[i], ids[i]))
    loads = [0.0] * bins
    out = [[] for _ in range(bins)]
    for i in order:
        b = min(range(bins), key=lambda j: (loads[j], j))
        loads[b] += costs[i]
        out[b].append(ids[i])
    return out


def gen_matmult_products(block_count: int, balance: str, seed: int = 0, *, reducers: int = 2,
                         block_side: int = 100, dataset: str = "skewed", entry_bytes: int = 12,
                         map_tasks: int = 4, namespace: str = "matmult") -> MatMultWorkload:
    """Block products of a sqrt(k) x sqrt(k) blocked A x B and their reduce assignment.

    Product (i, l, j) multiplies A(i, l) by B(l, j) at cost n^3 * d * d'.
    ``skewed`` densities grow with block position, ``uniform`` blocks have
    expected density 0.25.
    """
    side = math.isqrt(block_count)
    if block_count < 1 or side * side != block_count:
        raise InvalidArgument(f"block count must be a positive perfect square, got {block_count}")
    if balance not in ("optimal", "random", "unbalanced"):
        raise InvalidArgument(f"unknown balance {balance!r}")
    if reducers < 1:
        raise InvalidArgument("reducers must be >= 1")
    rng = np.random.default_rng(seed)
    cells = block_side * block_side

    def density_pair(i, j):
        if dataset == "skewed":
            return 1.0 / 2 ** (side - 1 - j), 1.0 / 2 ** (side - 1 - i)
        if dataset == "uniform":
            return rng.binomial(cells, 0.25) / cells, rng.binomial(cells, 0.25) / cells
        raise InvalidArgument(f"unknown matmult dataset {dataset!r}")

    dens = {(i, j): density_pair(i, j) for i in range(side) for j in range(side)}
    # A blocks then B blocks, dealt round-robin over map tasks
    a_map = {(i, j): (i * side + j) % map_tasks for i in range(side) for j in range(side)}
    b_map = {(i, j): (block_count + i * side + j) % map_tasks for i in range(side) for j in range(side)}

    used = set()
    keys, costs, ids, dd = [], [], [], {}
    for i in range(side):
        for l in range(side):
            for j in range(side):
                d_a = dens[(i, l)][0]
                d_b = dens[(l, j)][1]
                a_bytes = round_half_up(cells * d_a) * entry_bytes
                b_bytes = round_half_up(cells * d_b) * entry_bytes
                key = _fresh_key(f"{namespace}:{i}:{l}:{j}", used)
                per = [0] * map_tasks
                per[a_map[(i, l)]] += a_bytes
                per[b_map[(l, j)]] += b_bytes
                factors = (float(block_side) ** 3, d_a, d_b)
                keys.append(IntermediateKey(key, tuple(per), factors))
                costs.append(math.prod(factors))
                ids.append(key)
                dd[key] = (d_a, d_b)

    if balance == "optimal":
        assignment = lpt_assign(costs, reducers, ids)
    elif balance == "random":
        picks = rng.integers(0, reducers, size=len(ids))
        assignment = [[] for _ in range(reducers)]
        for key, p in zip(ids, picks.tolist()):
            assignment[p].append(key)
    else:
        assignment = unbalanced_assign(costs, reducers, ids, pinned=block_count)
    return MatMultWorkload(keys, assignment, block_side, dd)


def unbalanced_assign(costs, bins, ids, pinned):
    """Pin the ``pinned`` costliest ids to bin 0; deal the rest round-robin over the others."""
    order = sorted(range(len(costs)), key=lambda i: (-costs[i], ids[i]))
    out = [[] for _ in range(bins)]
    for i in order[:pinned]:
        out[0].append(ids[i])
    others = list(range(1, bins)) or [0]
    for n, i in enumerate(order[pinned:]):
        out[others[n % len(others)]].append(ids[i])
    return out


# -- workload files ----------------------------------------------------------

WORKLOAD_COLUMNS = ("key_hash", "map_sizes", "factors", "reduce_task")


def save_workload(path, keys, assignment=None):
    """Write keys as CSV: hex key hash, space-separated per-map sizes, factors, task."""
    task_of = {}
    if assignment is not None:
        task_of = {k: i for i, ks in enumerate(assignment) for k in ks}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WORKLOAD_COLUMNS)
        for ik in keys:
            w.writerow([
                f"{ik.key:016x}",
                " ".join(str(s) for s in ik.map_sizes),
                " ".join(repr(float(f)) for f in ik.factors) if ik.factors else "",
                task_of.get(ik.key, ""),
            ])


def load_workload(path):
    """Inverse of save_workload: returns (keys, assignment or None)."""
    keys = []
    tasks = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(WORKLOAD_COLUMNS[:2]) - set(reader.fieldnames or ())
        if missing:
            raise InvalidArgument(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                key = int(row["key_hash"], 16)
                sizes = tuple(int(s) for s in row["map_sizes"].split())
                fac = row.get("factors") or ""
                factors = tuple(float(f) for f in fac.split()) if fac.strip() else None
            except ValueError as exc:
                raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
            keys.append(IntermediateKey(key, sizes, factors))
            if row.get("reduce_task", "") not in ("", None):
                tasks[key] = int(row["reduce_task"])
    assignment = None
    if tasks:
        n = max(tasks.values()) + 1
        assignment = [[] for _ in range(n)]
        for ik in keys:
            assignment[tasks[ik.key]].append(ik.key)
    return keys, assignment
