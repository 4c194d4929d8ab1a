"""Client partitioning: IID shuffle-and-chunk, and single-source sharding."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DataError
from .corpus import DatasetSource


@dataclass
class Partition:
    """One client's slice of the training set: record indices into the parent."""

    client_id: int
    indices: np.ndarray
    source: str  # dominant source tag; single-valued for source-exclusive partitions

    @property
    def n_k(self) -> int:
        return len(self.indices)


def _dominant_source(ds: DatasetSource, indices: np.ndarray) -> str:
    counts = Counter(ds.records[i].source for i in indices)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


def partition_iid(train: DatasetSource, k: int, seed: int) -> list[Partition]:
    """Shuffle globally, then hand out contiguous chunks of floor(n/k); the
    n mod k remainder goes one record each to the first clients."""
    n = len(train.records)
    if k < 1:
        raise ConfigurationError(f"need at least one client, got {k}")
    if k > n:
        raise ConfigurationError(f"cannot split {n} records across {k} clients")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    base, rem = divmod(n, k)
    parts: list[Partition] = []
    start = 0
    for c in range(k):
        size = base + (1 if c < rem else 0)
        chunk = perm[start:start + size]
        parts.append(Partition(c, np.sort(chunk), _dominant_source(train, chunk)))
        start += size
    return parts


def partition_by_source(train: DatasetSource, k: int) -> list[Partition]:
    """Source-exclusive sharding: every client sees records from one source only.

    Clients take sources round-robin, with sources ordered by descending record
    count (ties by tag name), so larger sources contribute more shards. Within
    a source, records split into near-equal contiguous shards in dataset order.
    """
    if k < 2:
        raise ConfigurationError(f"source-exclusive partitioning needs k >= 2, got {k}")
    by_source: dict[str, list[int]] = {}
    for i, rec in enumerate(train.records):
        by_source.setdefault(rec.source, []).append(i)
    tags = sorted(by_source, key=lambda t: (-len(by_source[t]), t))
    if k < len(tags):
        raise ConfigurationError(
            f"k={k} is smaller than the number of sources ({len(tags)}); every source needs a client"
        )

    shard_counts = Counter(tags[c % len(tags)] for c in range(k))
    shards: dict[str, list[np.ndarray]] = {}
    for tag in tags:
        idx = np.array(by_source[tag])
        m = shard_counts[tag]
        if len(idx) < m:
            raise DataError(f"source {tag!r} has {len(idx)} records, fewer than its {m} clients")
        base, rem = divmod(len(idx), m)
        out, start = [], 0
        for s in range(m):
            size = base + (1 if s < rem else 0)
            out.append(idx[start:start + size])
            start += size
        shards[tag] = out

    taken = {tag: 0 for tag in tags}
    parts: list[Partition] = []
    for c in range(k):
        tag = tags[c % len(tags)]
        parts.append(Partition(c, shards[tag][taken[tag]], tag))
        taken[tag] += 1
    return parts
