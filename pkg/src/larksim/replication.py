"""Replica-side checks of the per-key data path: replica writes, dup-res, regime checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Collection, Iterable, Optional, Tuple

from .model import BOTTOM, LogicalClock, PartitionState, RecordVersion
from .placement import Placement

LEADER_IN_CLUSTER = "LeaderInCluster"
NODE_IN_REPLICA_SET = "NodeInReplicaSet"
LEADER_NOT_TOO_OLD = "LeaderNotTooOld"
SAME_LEADER_REGIME = "SameLeaderRegime"
LEADER_NOT_TOO_NEW = "LeaderNotTooNew"
STALE_CLOCK = "StaleClock"

# Conditions that can be switched off for negative tests. Turning off
# LeaderNotTooOld makes the (TooOld or SameRegime) disjunct always true.
DISABLEABLE = (LEADER_IN_CLUSTER, NODE_IN_REPLICA_SET, LEADER_NOT_TOO_OLD, LEADER_NOT_TOO_NEW)


@dataclass(frozen=True)
class ReplicaWriteMsg:
    key: str
    leader: int
    replica: int
    rr: int
    lc: LogicalClock
    lrm: int
    payload: RecordVersion


@dataclass(frozen=True)
class ReplicaVerdict:
    accept: bool
    reasons: Tuple[str, ...] = ()

    @property
    def reason(self) -> Optional[str]:
        return self.reasons[0] if self.reasons else None


def evaluate_replica_write(msg: ReplicaWriteMsg, state: PartitionState, er: int, node: int,
                           current_lc: LogicalClock, placement: Placement, partition: int,
                           disabled: Collection[str] = ()) -> ReplicaVerdict:
    """Evaluate the five acceptance conditions atomically.

    Failed conditions are reported in a fixed order: LeaderInCluster,
    NodeInReplicaSet, LeaderNotTooOld (the disjunct with SameLeaderRegime),
    LeaderNotTooNew, then a non-increasing clock.
    """
    failed = []
    if LEADER_IN_CLUSTER not in disabled and msg.leader not in state.nodes_in_cluster:
        failed.append(LEADER_IN_CLUSTER)
    if NODE_IN_REPLICA_SET not in disabled and \
            node not in placement.replicas(state.nodes_in_cluster, partition):
        failed.append(NODE_IN_REPLICA_SET)
    too_old_ok = msg.rr + 1 >= er
    same_regime = msg.lrm == state.lr
    if LEADER_NOT_TOO_OLD not in disabled and not (too_old_ok or same_regime):
        failed.append(LEADER_NOT_TOO_OLD)
    if LEADER_NOT_TOO_NEW not in disabled and not state.pr + 1 >= er:
        failed.append(LEADER_NOT_TOO_NEW)
    if not msg.lc > current_lc:
        failed.append(STALE_CLOCK)
    return ReplicaVerdict(not failed, tuple(failed))


def dup_res_handler(state: PartitionState, leader: int,
                    local: Optional[RecordVersion]) -> Tuple[bool, Optional[RecordVersion]]:
    """Responder side: answer only a leader this node sees in its cluster."""
    if leader not in state.nodes_in_cluster:
        return False, None
    return True, local


def version_lc(v: Optional[RecordVersion]) -> LogicalClock:
    return v.lc if v is not None else BOTTOM


def dup_res_fold(local: Optional[RecordVersion],
                 responses: Iterable[Optional[RecordVersion]]) -> Optional[RecordVersion]:
    """Keep the version with the largest clock; the local copy wins ties."""
    best = local
    for v in responses:
        if v is not None and version_lc(v) > version_lc(best):
            best = v
    return best


def check_regime(state: PartitionState, caller: int, pr: int) -> bool:
    """A replica confirms a read only if it shares the caller's PR and sees it as leader."""
    return state.available and state.pr == pr and state.leader == caller
