"""Per-partition rebalance: fullness prediction, PAC gate, leader choice, migrations."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection, FrozenSet, List, Mapping, Optional, Set, Tuple

from .model import ClusterView, PartitionState, Roster
from .pac import PacVerdict, evaluate_pac
from .placement import Placement

LEADER_IMMIGRATION = "leader-immigration"
REPLICA_EMIGRATION = "replica-emigration"


def predict_full(pr: int, full: bool, new_er: int) -> bool:
    """A node stays full only if it was full in the immediately preceding regime."""
    return full and pr == new_er - 1


@dataclass(frozen=True)
class MigrationTask:
    source: int
    destination: int
    partition: int
    kind: str
    required_pr: int

    def can_run(self, source_pr: int, dest_pr: int) -> bool:
        return source_pr == dest_pr == self.required_pr


@dataclass(frozen=True)
class PriorLeader:
    node: int
    lr: int


def choose_leader(members: Collection[int], partition: int, placement: Placement,
                  predicted_full: Collection[int], pr: int,
                  prior: Optional[PriorLeader] = None) -> Tuple[int, int, bool]:
    """Return (leader, LR, acting) for a partition that passed PAC.

    A prior leader that is still a cluster replica keeps leading with its old
    LR. Otherwise the first full member in succession order leads; if it is
    not a cluster replica it is an acting leader. With no full member the
    first member in succession order leads.
    """
    replicas = placement.replicas(members, partition)
    if prior is not None and prior.node in members and prior.node in replicas:
        return prior.node, prior.lr, False
    present = set(members)
    order = [n for n in placement.order(partition) if n in present]
    full = set(predicted_full)
    for n in order:
        if n in full:
            return n, pr, n not in replicas
    if not order:
        raise ValueError("available partition without roster members")
    return order[0], pr, False


@dataclass
class RebalancePlan:
    verdict: PacVerdict
    state: PartitionState
    cluster_replicas: List[int] = field(default_factory=list)
    immigration: List[MigrationTask] = field(default_factory=list)
    emigration: List[MigrationTask] = field(default_factory=list)
    acting: bool = False


def plan_rebalance(node: int, partition: int, view: ClusterView, roster: Roster,
                   placement: Placement, current: PartitionState,
                   predicted_full: Collection[int], prior: Optional[PriorLeader],
                   duplicates: Collection[int], *, mutations: Collection[str] = ()) -> RebalancePlan:
    """Steps 2 to 6 for one node and partition, as a pure function of the announce.

    The returned state replaces ``current`` in one atomic step. Migration
    tasks are listed only on the leader, which drives them.
    """
    members = view.members
    full_set = set(predicted_full) & members
    verdict = evaluate_pac(members, roster, partition, full_set, placement=placement,
                           mutations=mutations)
    if not verdict.available:
        state = PartitionState(pr=current.pr, lr=current.lr, leader=None, full=False,
                               duplicate=current.duplicate,
                               nodes_in_cluster=current.nodes_in_cluster, available=False)
        return RebalancePlan(verdict, state)

    pr = view.er
    replicas = placement.replicas(members, partition)
    leader, lr, acting = choose_leader(members, partition, placement, full_set, pr, prior)
    state = PartitionState(
        pr=pr,
        lr=lr,
        leader=leader,
        # a node outside the replica set misses this regime's writes
        full=node in full_set and (node in replicas or node == leader),
        duplicate=current.duplicate or node in replicas,
        nodes_in_cluster=frozenset(members),
        available=True,
    )
    plan = RebalancePlan(verdict, state, replicas, acting=acting)
    if node == leader:
        if not state.full:
            sources = (set(duplicates) & members) | set(replicas)
            sources.discard(node)
            plan.immigration = [MigrationTask(s, node, partition, LEADER_IMMIGRATION, pr)
                                for s in sorted(sources)]
        plan.emigration = [MigrationTask(node, r, partition, REPLICA_EMIGRATION, pr)
                           for r in replicas if r != node and r not in full_set]
    return plan


class DuplicateSet:
    """Nodes that may hold the latest version of some record in one partition."""

    def __init__(self, partition: int, nodes: Collection[int] = ()):
        self.partition = partition
        self.nodes: Set[int] = set(nodes)
        self.violations: List[str] = []

    def became_cluster_replica(self, node: int) -> None:
        self.nodes.add(node)

    def retire(self, node: int, *, in_available_cluster: bool, is_cluster_replica: bool,
               emigration_done: bool) -> bool:
        """Remove ``node`` if all three retirement conditions hold; record a violation otherwise."""
        if node not in self.nodes:
            return False
        if in_available_cluster and not is_cluster_replica and emigration_done:
            self.nodes.discard(node)
            return True
        self.violations.append(
            f"illegal retirement of node {node} from partition {self.partition}: "
            f"available={in_available_cluster} replica={is_cluster_replica} "
            f"emigrated={emigration_done}")
        return False

    def snapshot(self) -> FrozenSet[int]:
        return frozenset(self.nodes)


def update_duplicates(dups: DuplicateSet, event: str, node: int, **conds) -> DuplicateSet:
    if event == "became-cluster-replica":
        dups.became_cluster_replica(node)
    elif event == "emigration-complete":
        dups.retire(node, **conds)
    else:
        raise ValueError(f"unknown duplicate event {event!r}")
    return dups
