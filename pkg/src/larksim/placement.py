"""Key digests, partition mapping and rendezvous succession lists."""
from __future__ import annotations

import struct
from functools import lru_cache
from typing import Iterable, List, Sequence

from Crypto.Hash import RIPEMD160

from .model import Roster

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def digest(key: bytes | str) -> int:
    """RIPEMD-160 of the key, as a 160-bit big-endian integer."""
    if isinstance(key, str):
        key = key.encode()
    if not key:
        raise ValueError("empty key")
    return int.from_bytes(RIPEMD160.new(key).digest(), "big")


def partition_of(d: int, p_count: int = 4096) -> int:
    if p_count < 1:
        raise ValueError("p_count must be >= 1")
    # for p_count = 4096 this is exactly the low 12 bits
    return d % p_count


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK64
    return h


def score(partition: int, node: int) -> int:
    return fnv1a64(struct.pack("<IQ", partition, node))


@lru_cache(maxsize=65536)
def _ordered(partition: int, members: tuple) -> tuple:
    return tuple(sorted(members, key=lambda n: (-score(partition, n), n)))


def succession_list(partition: int, roster: Roster | Sequence[int]) -> List[int]:
    """All roster nodes, highest score first; ties go to the lower node id."""
    members = roster.members if isinstance(roster, Roster) else tuple(roster)
    if not members:
        raise ValueError("empty roster")
    return list(_ordered(partition, tuple(sorted(members))))


def roster_replicas(partition: int, roster: Roster) -> List[int]:
    if roster.rf > roster.size:
        raise ValueError(f"rf={roster.rf} exceeds roster size {roster.size}")
    return succession_list(partition, roster)[: roster.rf]


def cluster_replicas(members: Iterable[int], partition: int, roster: Roster,
                     order: Sequence[int] | None = None) -> List[int]:
    """First RF nodes of the succession list that are present in ``members``.

    ``order`` overrides the computed succession list (scripted scenarios pin it).
    """
    present = set(members)
    seq = order if order is not None else succession_list(partition, roster)
    return [n for n in seq if n in present][: roster.rf]


class Placement:
    """Succession lists for one roster, optionally pinned to a fixed order."""

    def __init__(self, roster: Roster, fixed_order: Sequence[int] | None = None):
        self.roster = roster
        if fixed_order is not None and sorted(fixed_order) != sorted(roster.members):
            raise ValueError("fixed succession order must permute the roster")
        self.fixed_order = list(fixed_order) if fixed_order is not None else None

    def order(self, partition: int) -> List[int]:
        if self.fixed_order is not None:
            return self.fixed_order
        return succession_list(partition, self.roster)

    def replicas(self, members: Iterable[int], partition: int) -> List[int]:
        return cluster_replicas(members, partition, self.roster, self.order(partition))

    def roster_replicas(self, partition: int) -> List[int]:
        return self.order(partition)[: self.roster.rf]

    def roster_leader(self, partition: int) -> int:
        return self.order(partition)[0]
