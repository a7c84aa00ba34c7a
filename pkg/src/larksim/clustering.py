"""Membership detection, exchange-number minting and versioned roster changes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional

from .model import ClusterView, Roster

STABILIZATION_TICKS = 3


@dataclass
class HeartbeatState:
    """Last tick each peer was heard from; a peer is reachable within ``threshold``."""

    threshold: int = STABILIZATION_TICKS
    last_seen: Dict[int, int] = field(default_factory=dict)

    def heard(self, peer: int, tick: int) -> None:
        self.last_seen[peer] = max(tick, self.last_seen.get(peer, tick))

    def reachable(self, peer: int, now: int) -> bool:
        seen = self.last_seen.get(peer)
        return seen is not None and now - seen <= self.threshold


def detect_components(nodes: Iterable[int], connected: Callable[[int, int], bool]) -> List[frozenset]:
    """Split live ``nodes`` into clusters of full mutual reachability.

    On a union-of-cliques relation this is exactly the set of connected
    components. Otherwise each connected component is carved greedily: the
    lowest unassigned node collects, in id order, every node adjacent to all
    nodes collected so far.
    """
    remaining = sorted(set(nodes))
    out = []
    while remaining:
        seed = remaining[0]
        clique = [seed]
        for n in remaining[1:]:
            if all(connected(n, m) for m in clique):
                clique.append(n)
        out.append(frozenset(clique))
        taken = set(clique)
        remaining = [n for n in remaining if n not in taken]
    return out


def recluster(component: Iterable[int], current_er: Mapping[int, int]) -> ClusterView:
    members = frozenset(component)
    if not members:
        raise ValueError("cannot recluster an empty component")
    return ClusterView(members, 1 + max(current_er.get(n, 0) for n in members))


def heartbeat_messages(n: int) -> int:
    """All-to-all heartbeats per period."""
    return n * (n - 1)


def per_partition_messages(p_count: int, rf: int) -> int:
    """Leader-to-follower heartbeats per period for one consensus group per partition."""
    return p_count * rf * (rf - 1)


def heartbeat_crossover(p_count: int = 4096, rf: int = 3) -> float:
    """Cluster size at which node-level heartbeats cost as much as per-partition groups."""
    target = per_partition_messages(p_count, rf)
    return (1 + math.sqrt(1 + 4 * target)) / 2


# Versioned two-phase commit for roster changes.

PREPARED = "prepared"
COMMITTED = "committed"


@dataclass
class RosterChange:
    new_roster: Roster
    phase: str
    coordinator: int


@dataclass
class RosterStore:
    """Durable roster state on one node."""

    committed: Roster
    pending: Optional[RosterChange] = None
    # decisions this node made as coordinator, kept for participants that rejoin
    decisions: Dict[int, str] = field(default_factory=dict)


def roster_change(coordinator: int, new_roster: Roster, stores: Mapping[int, RosterStore],
                  reachable: Callable[[int], bool],
                  lost_before_commit: Iterable[int] = ()) -> str:
    """Run prepare/commit from ``coordinator``; returns "commit" or "abort".

    ``reachable(n)`` answers for the prepare phase. Nodes in
    ``lost_before_commit`` acked prepare but miss the commit; they keep the
    prepared change until :func:`recover_roster` consults the coordinator.
    """
    current = stores[coordinator].committed
    if new_roster.version <= current.version:
        # lost a race: another coordinator already committed this version
        stores[coordinator].decisions.setdefault(new_roster.version, "abort")
        return "abort"
    if new_roster.version != current.version + 1:
        raise ValueError(f"roster version must be {current.version + 1}, got {new_roster.version}")
    participants = sorted(set(current.members) | set(new_roster.members))
    missing = [n for n in participants if n not in stores]
    if missing:
        raise ValueError(f"no store for nodes {missing}")

    prepared: List[int] = []
    ok = True
    for n in participants:
        st = stores[n]
        if n != coordinator and not reachable(n):
            ok = False
            break
        if st.committed.version >= new_roster.version:
            ok = False
            break
        if st.pending is not None and st.pending.coordinator != coordinator:
            # somebody else already holds this version slot
            ok = False
            break
        st.pending = RosterChange(new_roster, PREPARED, coordinator)
        prepared.append(n)

    decision = "commit" if ok else "abort"
    stores[coordinator].decisions[new_roster.version] = decision
    lost = set(lost_before_commit)
    for n in prepared:
        if n in lost and n != coordinator:
            continue
        _apply(stores[n], decision)
    return decision


def _apply(st: RosterStore, decision: str) -> None:
    if st.pending is None:
        return
    if decision == "commit":
        st.committed = st.pending.new_roster
    st.pending = None


def recover_roster(store: RosterStore, stores: Mapping[int, RosterStore]) -> None:
    """A rejoining participant resolves a dangling prepare from its coordinator."""
    if store.pending is None:
        return
    coord = stores[store.pending.coordinator]
    decision = coord.decisions.get(store.pending.new_roster.version)
    if decision is not None:
        _apply(store, decision)
