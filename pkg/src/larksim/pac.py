"""Partition Availability Conditions and exhaustive checks of their safety lemmas."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Collection, Dict, List, Optional, Sequence

from .model import Roster
from .placement import Placement

SUPER_MAJORITY = "SuperMajority"
ALL_ROSTER_REPLICAS = "AllRosterReplicas"
SIMPLE_MAJORITY = "SimpleMajority"
HALF_ROSTER = "HalfRoster"
CONDITIONS = (SUPER_MAJORITY, ALL_ROSTER_REPLICAS, SIMPLE_MAJORITY, HALF_ROSTER)


@dataclass(frozen=True)
class PacVerdict:
    available: bool
    condition: Optional[str] = None


UNAVAILABLE = PacVerdict(False, None)


def evaluate_pac(members: Collection[int], roster: Roster, partition: int,
                 full_nodes: Collection[int], *, placement: Placement | None = None,
                 mutations: Collection[str] = ()) -> PacVerdict:
    """Decide whether ``partition`` is available in a cluster of ``members``.

    ``full_nodes`` are the members predicted full for the partition. Fullness
    of a non-roster member counts toward the "some node is full" clauses.
    ``mutations`` weakens individual rules; it exists for negative tests only.
    """
    placement = placement or Placement(roster)
    present = set(members)
    full = set(full_nodes) & present
    in_roster = sum(1 for n in roster.members if n in present)
    missing = roster.size - in_roster
    replicas = placement.roster_replicas(partition)
    majority = 2 * in_roster > roster.size
    half = 2 * in_roster == roster.size

    if majority and (missing < roster.rf or "super-no-missing-bound" in mutations):
        return PacVerdict(True, SUPER_MAJORITY)
    all_replicas = all(r in present for r in replicas)
    if all_replicas or ("all-replicas-any-one" in mutations and any(r in present for r in replicas)):
        return PacVerdict(True, ALL_ROSTER_REPLICAS)
    has_replica = any(r in present for r in replicas)
    if majority and has_replica and (full or "simple-no-full" in mutations):
        return PacVerdict(True, SIMPLE_MAJORITY)
    leader_ok = replicas[0] in present or "half-no-leader" in mutations
    if half and leader_ok and full:
        return PacVerdict(True, HALF_ROSTER)
    return UNAVAILABLE


# Each mutation drops one clause from one rule.
MUTATIONS = ("super-no-missing-bound", "all-replicas-any-one", "simple-no-full", "half-no-leader")


@dataclass
class LemmaReport:
    roster_size: int
    rf: int
    combos_checked: int = 0
    available_combos: int = 0
    violations: List[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "roster_size": self.roster_size,
            "rf": self.rf,
            "combos_checked": self.combos_checked,
            "available_combos": self.available_combos,
            "violations": self.violations,
        }


def _subsets(items: Sequence[int]):
    for k in range(len(items) + 1):
        yield from itertools.combinations(items, k)


def lemma_oracles(roster: Roster, partition: int = 0, *, mutations: Collection[str] = (),
                  max_violations: int = 20, exhaustive_bound: int = 8,
                  evaluator: Callable[..., PacVerdict] = evaluate_pac) -> LemmaReport:
    """Enumerate every (cluster, full-set) pair and check the two structural lemmas.

    Lemma 1: an available cluster contains a roster replica.
    Lemma 2: two disjoint clusters are never both available. The full sets of
    two disjoint clusters are themselves disjoint, so for each member set we
    only need to know whether *some* full set makes it available.
    Lemma 4 (static form): a cluster available right after ``C1`` shares a
    node with ``C1``'s cluster replicas. Only those replicas can be predicted
    full in the next regime, so a successor missing all of them is evaluated
    with an empty full set.
    """
    if roster.size > exhaustive_bound:
        raise ValueError(f"roster of {roster.size} exceeds the exhaustive bound {exhaustive_bound}")
    placement = Placement(roster)
    replicas = set(placement.roster_replicas(partition))
    report = LemmaReport(roster.size, roster.rf)
    nodes = list(roster.members)
    availability: Dict[frozenset, Optional[frozenset]] = {}

    for cluster in _subsets(nodes):
        members = frozenset(cluster)
        witness = None
        for full in _subsets(cluster):
            report.combos_checked += 1
            verdict = evaluator(members, roster, partition, full, placement=placement,
                                mutations=mutations)
            if not verdict.available:
                continue
            report.available_combos += 1
            if witness is None:
                witness = frozenset(full)
            if not members & replicas and len(report.violations) < max_violations:
                report.violations.append({
                    "lemma": 1, "condition": verdict.condition,
                    "cluster": sorted(members), "full": sorted(full),
                })
        availability[members] = witness

    _check_successor_overlap(report, availability, placement, roster, partition,
                             mutations, evaluator, max_violations)

    avail = [(m, f) for m, f in availability.items() if f is not None]
    for (m1, f1), (m2, f2) in itertools.combinations(avail, 2):
        if m1 & m2:
            continue
        if len(report.violations) >= max_violations:
            break
        report.violations.append({
            "lemma": 2, "cluster_a": sorted(m1), "full_a": sorted(f1),
            "cluster_b": sorted(m2), "full_b": sorted(f2),
        })
    return report


def _check_successor_overlap(report, availability, placement, roster, partition,
                             mutations, evaluator, max_violations):
    unavailable_without_full = {}
    for members in availability:
        verdict = evaluator(members, roster, partition, (), placement=placement,
                            mutations=mutations)
        unavailable_without_full[members] = not verdict.available
    for c1, witness in availability.items():
        if witness is None:
            continue
        replicas1 = frozenset(placement.replicas(c1, partition))
        for c2, blocked in unavailable_without_full.items():
            if blocked or c2 & replicas1:
                continue
            if len(report.violations) >= max_violations:
                return
            report.violations.append({
                "lemma": 4, "previous": sorted(c1), "previous_replicas": sorted(replicas1),
                "next": sorted(c2),
            })
