"""Two-set birthday collision search between predicted and forged sources.

The search walks two deterministic indexed generators, hashing each output
and recording only (hash, side, index) in a sharded store; full preimages
are regenerated from provenance on demand. Cross-set matches are collision
candidates; same-side matches and equal-preimage matches are discarded as
unexploitable.
"""

from __future__ import annotations

import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Protocol, runtime_checkable

from .pki import HashSpec, digest

if TYPE_CHECKING:  # pragma: no cover
    from .predictor import RequestRecipe

_SHARDS = 256
_CHUNK = 2048
_SEED_SPAN = 2**30


def expected_trials(hash_bits: int) -> float:
    """Average birthday-bound trials over an image of 2**hash_bits values."""
    if hash_bits < 1:
        raise ValueError("hash width must be at least one bit")
    return 1.25 * 2 ** (hash_bits / 2)


@runtime_checkable
class IndexedSource(Protocol):
    """A deterministic index -> to-be-signed-bytes generator."""

    label: str

    def tbs_at(self, index: int) -> bytes: ...


@dataclass(frozen=True)
class SplicedTemplate:
    """Fixed bytes with one fixed-width mutable window.

    Built by encoding a structure twice with two distinct filler blocks and
    diffing; regenerating a variant is then a single byte splice instead of a
    full re-encode, which is what makes the 2^16-scale searches run in
    seconds.
    """

    template: bytes
    offset: int
    width: int

    def fill(self, block: bytes) -> bytes:
        if len(block) != self.width:
            raise ValueError(f"block must be exactly {self.width} bytes")
        return b"".join(
            (self.template[: self.offset], block, self.template[self.offset + self.width :])
        )

    @classmethod
    def from_builder(cls, build, width: int) -> "SplicedTemplate":
        """``build(block) -> bytes`` must vary only with the block content."""
        a = build(b"\x00" * width)
        b = build(b"\xff" * width)
        if len(a) != len(b):
            raise ValueError("builder output length varies with block content")
        diffs = [i for i, (x, y) in enumerate(zip(a, b)) if x != y]
        if len(diffs) != width or diffs[-1] - diffs[0] + 1 != width:
            raise ValueError("builder does not confine the block to one window")
        return cls(template=a, offset=diffs[0], width=width)


def index_block(index: int, width: int = 8) -> bytes:
    """Salt rendering: index as a big-endian block, widening past 2**64."""
    needed = max(width, (index.bit_length() + 7) // 8)
    return index.to_bytes(needed, "big")


class StoreFull(RuntimeError):
    pass


class HashStore:
    """hash -> (side, index) map, sharded by low hash byte for parallel insert.

    Keys and values are packed integers; no preimage bytes are retained.
    """

    def __init__(self, bit_width: int, capacity: int):
        self.bit_width = bit_width
        self.capacity = capacity
        self._shards: list[dict[int, int]] = [{} for _ in range(_SHARDS)]
        self._locks = [threading.Lock() for _ in range(_SHARDS)]
        self._count = 0
        self._count_lock = threading.Lock()

    def __len__(self) -> int:
        return self._count

    def insert(self, digest_bytes: bytes, side: int, index: int) -> tuple[int, int] | None:
        """Insert; returns the pre-existing (side, index) on a hash match.

        First insertion wins: a matching entry is never overwritten, so
        provenance always points at the earliest occurrence.
        """
        key = int.from_bytes(digest_bytes, "big")
        shard = key & 0xFF
        packed = (side << 60) | index
        with self._locks[shard]:
            existing = self._shards[shard].get(key)
            if existing is not None:
                return existing >> 60, existing & ((1 << 60) - 1)
            if self._count >= self.capacity:
                raise StoreFull(f"store capacity {self.capacity} exceeded")
            self._shards[shard][key] = packed
        with self._count_lock:
            self._count += 1
        return None

    def approximate_bytes(self) -> int:
        """Rough in-memory footprint: dict tables plus int objects."""
        import sys

        total = sum(sys.getsizeof(d) for d in self._shards)
        for d in self._shards:
            for key, value in d.items():
                total += sys.getsizeof(key) + sys.getsizeof(value)
        return total


@dataclass(frozen=True)
class CollisionCandidate:
    """A cross-set hash match: request recipe on one side, forgery on the other."""

    h1_source: IndexedSource
    h1_index: int
    h2_source: IndexedSource
    h2_index: int
    hash: bytes
    hash_spec: HashSpec
    recipe: "RequestRecipe | None" = None

    @property
    def generator_id(self) -> str:
        return self.h2_source.label


@dataclass
class SearchStats:
    evaluations_h1: int = 0
    evaluations_h2: int = 0
    same_side_collisions: int = 0
    equal_preimage_skips: int = 0

    @property
    def total_evaluations(self) -> int:
        return self.evaluations_h1 + self.evaluations_h2


@dataclass(frozen=True)
class SearchResult:
    candidate: CollisionCandidate
    stats: SearchStats


class BudgetExhausted(RuntimeError):
    """No cross-set collision within the evaluation budget."""

    def __init__(self, stats: SearchStats):
        super().__init__(f"no collision in {stats.total_evaluations} evaluations")
        self.stats = stats


def _make_candidate(
    gen1: IndexedSource,
    i1: int,
    gen2: IndexedSource,
    i2: int,
    h: bytes,
    spec: HashSpec,
) -> CollisionCandidate:
    recipe = None
    recipe_at = getattr(gen1, "recipe_at", None)
    if recipe_at is not None:
        recipe = recipe_at(i1)
    return CollisionCandidate(
        h1_source=gen1, h1_index=i1, h2_source=gen2, h2_index=i2,
        hash=h, hash_spec=spec, recipe=recipe,
    )


def verify_candidate(candidate: CollisionCandidate, spec: HashSpec) -> bool:
    """Regenerate both preimages and re-check the collision from scratch."""
    p1 = candidate.h1_source.tbs_at(candidate.h1_index)
    p2 = candidate.h2_source.tbs_at(candidate.h2_index)
    return (
        digest(spec, p1) == candidate.hash
        and digest(spec, p2) == candidate.hash
        and p1 != p2
    )


@dataclass
class _Partition:
    """One worker's interleaved slice of both index streams for one round."""

    side_plan: list[tuple[int, int]] = field(default_factory=list)  # (side, index)


def _plan_round(
    round_no: int, workers: int, start1: int, start2: int, ratio: tuple[int, int]
) -> list[_Partition]:
    """Deterministic chunk assignment: round-robin blocks of each side's stream."""
    r1, r2 = ratio
    plans = []
    for w in range(workers):
        block = round_no * workers + w
        plan = _Partition()
        for k in range(_CHUNK * r1):
            plan.side_plan.append((1, start1 + block * _CHUNK * r1 + k))
        for k in range(_CHUNK * r2):
            plan.side_plan.append((2, start2 + block * _CHUNK * r2 + k))
        plans.append(plan)
    return plans


def birthday_search(
    gen1: IndexedSource,
    gen2: IndexedSource,
    spec: HashSpec,
    budget: int,
    seed: int = 0,
    *,
    workers: int = 1,
    ratio: tuple[int, int] = (1, 1),
    store: HashStore | None = None,
) -> SearchResult:
    """Interleaved two-set search; returns the first cross-set collision.

    ``seed`` picks the starting index on each side, so repeated runs sample
    statistically independent regions of the generators while staying fully
    deterministic. Same-side matches are counted and skipped; so are
    cross-side matches whose preimages turn out to be byte-equal.

    Raises BudgetExhausted (carrying the evaluation counts) once ``budget``
    total evaluations found nothing.
    """
    if budget < 2:
        raise ValueError("budget must allow at least one evaluation per side")
    rng = random.Random(seed)
    start1 = rng.randrange(_SEED_SPAN)
    start2 = rng.randrange(_SEED_SPAN)
    if store is None:
        store = HashStore(bit_width=spec.bits, capacity=budget)
    stats = SearchStats()
    stats_lock = threading.Lock()

    def evaluate(side: int, index: int) -> CollisionCandidate | None:
        source = gen1 if side == 1 else gen2
        preimage = source.tbs_at(index)
        h = digest(spec, preimage)
        with stats_lock:
            if side == 1:
                stats.evaluations_h1 += 1
            else:
                stats.evaluations_h2 += 1
        prior = store.insert(h, side, index)
        if prior is None:
            return None
        prior_side, prior_index = prior
        if prior_side == side:
            with stats_lock:
                stats.same_side_collisions += 1
            return None
        other = gen1 if prior_side == 1 else gen2
        if other.tbs_at(prior_index) == preimage:
            with stats_lock:
                stats.equal_preimage_skips += 1
            return None
        if side == 1:
            return _make_candidate(gen1, index, gen2, prior_index, h, spec)
        return _make_candidate(gen1, prior_index, gen2, index, h, spec)

    def run_partition(plan: _Partition, allowance: int) -> CollisionCandidate | None:
        for side, index in plan.side_plan[:allowance]:
            candidate = evaluate(side, index)
            if candidate is not None:
                return candidate
        return None

    round_no = 0
    spent = 0
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while spent < budget:
            plans = _plan_round(round_no, workers, start1, start2, ratio)
            per_plan = len(plans[0].side_plan)
            allowances = []
            for _ in plans:
                take = min(per_plan, budget - spent)
                allowances.append(take)
                spent += take
            if executor is not None:
                found = list(executor.map(run_partition, plans, allowances))
            else:
                found = [run_partition(p, a) for p, a in zip(plans, allowances)]
            candidates = [c for c in found if c is not None]
            if candidates:
                best = min(candidates, key=lambda c: (c.h1_index, c.h2_index))
                return SearchResult(candidate=best, stats=stats)
            round_no += 1
    finally:
        if executor is not None:
            executor.shutdown(wait=False)
    raise BudgetExhausted(stats)


def first_internal_collision(spec: HashSpec, inputs: Iterable[bytes]) -> int | None:
    """Draws until two inputs share a digest; returns the number of draws.

    The single-set birthday baseline used by the statistics tests.
    """
    seen: dict[bytes, bytes] = {}
    for count, data in enumerate(inputs, start=1):
        h = digest(spec, data)
        prior = seen.get(h)
        if prior is not None and prior != data:
            return count
        seen[h] = data
    return None
