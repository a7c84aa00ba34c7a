"""Protocol vocabulary: clocks, record versions, rosters, views and partition state.

Node ids are plain ints; partitions are ints in ``[0, P)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import FrozenSet, Optional, Tuple

DEFAULT_PARTITIONS = 4096
VN_MAX = (1 << 64) - 1

REPLICATED = "replicated"
UNREPLICATED = "unreplicated"


@dataclass(frozen=True, order=True)
class LogicalClock:
    """Per-key clock ordered lexicographically on (rr, vn)."""

    rr: int = 0
    vn: int = 0

    def __post_init__(self):
        if self.rr < 0 or not 0 <= self.vn <= VN_MAX:
            raise ValueError(f"bad logical clock {self.rr}/{self.vn}")

    def next(self, pr: int) -> "LogicalClock":
        # vn restarts whenever the regime moves forward
        if pr > self.rr:
            return LogicalClock(pr, 0)
        return LogicalClock(self.rr, self.vn + 1)

    def as_tuple(self) -> Tuple[int, int]:
        return (self.rr, self.vn)


BOTTOM = LogicalClock(0, 0)


def lc_compare(a: LogicalClock, b: LogicalClock) -> int:
    """Return -1, 0 or 1 as ``a`` is older, equal or newer than ``b``."""
    ta, tb = a.as_tuple(), b.as_tuple()
    return (ta > tb) - (ta < tb)


@dataclass(frozen=True)
class RecordVersion:
    """One stored version of a key.

    ``uid`` and ``parent`` identify versions in the lineage audit; they are
    simulation metadata and never counted as payload bytes.
    """

    key: str
    value: Optional[str]
    lc: LogicalClock
    status: str = UNREPLICATED
    uid: int = 0
    parent: int = 0
    parent_lc: Optional[LogicalClock] = None

    def __post_init__(self):
        if self.status not in (REPLICATED, UNREPLICATED):
            raise ValueError(f"bad status {self.status!r}")
        if self.parent_lc is not None and not self.parent_lc < self.lc:
            raise ValueError("parent clock must precede the version clock")

    @property
    def replicated(self) -> bool:
        return self.status == REPLICATED

    def mark_replicated(self) -> "RecordVersion":
        return replace(self, status=REPLICATED)

    def retagged(self, lc: LogicalClock) -> "RecordVersion":
        # same logical content under a newer clock, pending replication again
        return replace(self, lc=lc, status=UNREPLICATED)


@dataclass(frozen=True)
class Roster:
    members: Tuple[int, ...]
    rf: int
    version: int = 1

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise ValueError("duplicate node id in roster")
        if self.rf < 1:
            raise ValueError("rf must be >= 1")
        if self.rf > len(self.members):
            raise ValueError(f"rf={self.rf} exceeds roster size {len(self.members)}")

    @property
    def size(self) -> int:
        return len(self.members)

    def __contains__(self, node: int) -> bool:
        return node in self.members


@dataclass(frozen=True)
class ClusterView:
    members: FrozenSet[int]
    er: int

    def __post_init__(self):
        if not self.members:
            raise ValueError("cluster view needs at least one member")
        if self.er < 0:
            raise ValueError("exchange number must be non-negative")


@dataclass
class PartitionState:
    """One node's view of one partition. Mutated only by rebalance and migration."""

    pr: int = 0
    lr: int = 0
    leader: Optional[int] = None
    full: bool = False
    duplicate: bool = False
    nodes_in_cluster: FrozenSet[int] = field(default_factory=frozenset)
    available: bool = False

    def check(self, er: int) -> None:
        if self.pr > er:
            raise AssertionError(f"PR {self.pr} ahead of ER {er}")
        if self.lr > self.pr:
            raise AssertionError(f"LR {self.lr} ahead of PR {self.pr}")
        if self.available and self.leader not in self.nodes_in_cluster:
            raise AssertionError("available partition with leader outside the cluster")
