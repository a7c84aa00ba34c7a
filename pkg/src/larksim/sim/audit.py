"""Trace obligations: lineage, single available cluster, regime overlap, monotone epochs."""
from __future__ import annotations

from collections import defaultdict
from typing import Dict, Iterable, List

from ..lincheck import check_events


def audit(trace: Iterable[dict]) -> List[dict]:
    trace = list(trace)
    out: List[dict] = []
    out += lineage_violations(trace)
    out += single_cluster_violations(trace)
    out += regime_overlap_violations(trace)
    out += monotonicity_violations(trace)
    out += retirement_violations(trace)
    return out


def lineage_violations(trace) -> List[dict]:
    """No version has two distinct replicated children, and replicated versions form one chain."""
    children: Dict[tuple, set] = defaultdict(set)
    replicated = set()
    first_seen = {}
    for r in trace:
        if r["type"] != "replicated":
            continue
        children[(r["key"], r["parent"])].add(r["uid"])
        replicated.add((r["key"], r["uid"]))
        first_seen.setdefault((r["key"], r["uid"]), r["t"])
    out = []
    for (key, parent), kids in sorted(children.items()):
        if len(kids) > 1:
            out.append({"check": "theorem1", "key": key, "parent": parent,
                        "children": sorted(kids)})
        if parent and (key, parent) not in replicated:
            out.append({"check": "theorem2", "key": key, "parent": parent,
                        "children": sorted(kids), "detail": "parent never replicated"})
    return out


def single_cluster_violations(trace) -> List[dict]:
    """Rounds minted at the same instant for disjoint components: at most one available per partition."""
    rounds = {r["id"]: r for r in trace if r["type"] == "round"}
    out = []
    for r in trace:
        if r["type"] != "concurrent_rounds":
            continue
        group = [rounds[i] for i in r["rounds"]]
        n_parts = len(group[0]["available"])
        for p in range(n_parts):
            avail = [g for g in group if g["available"][p]]
            if len(avail) > 1:
                out.append({"check": "lemma3", "t": r["t"], "partition": p,
                            "clusters": [g["members"] for g in avail]})
    by_er = defaultdict(list)
    for g in rounds.values():
        for p, a in enumerate(g["available"]):
            if a:
                by_er[(p, g["er"])].append(g)
    for (p, er), gs in sorted(by_er.items()):
        if len({tuple(g["members"]) for g in gs}) > 1:
            out.append({"check": "lemma3", "partition": p, "er": er,
                        "clusters": [g["members"] for g in gs]})
    return out


def regime_overlap_violations(trace) -> List[dict]:
    """Consecutive available regimes of a partition share a cluster replica of the earlier one."""
    rounds_by_er = defaultdict(list)
    for r in trace:
        if r["type"] == "round":
            rounds_by_er[r["er"]].append(r)
    applied = defaultdict(dict)  # partition -> er -> (members, replicas)
    for r in trace:
        if r["type"] == "rebalance" and r["available"]:
            if r["er"] in applied[r["p"]]:
                continue
            for g in rounds_by_er[r["er"]]:
                if r["node"] in g["members"] and g["available"][r["p"]]:
                    applied[r["p"]][r["er"]] = (set(g["members"]), set(g["replicas"][r["p"]]))
    out = []
    for p, regimes in sorted(applied.items()):
        ers = sorted(regimes)
        for a, b in zip(ers, ers[1:]):
            members_b = regimes[b][0]
            replicas_a = regimes[a][1]
            if not members_b & replicas_a:
                out.append({"check": "lemma4", "partition": p, "earlier": a, "later": b,
                            "earlier_replicas": sorted(replicas_a), "later_members": sorted(members_b)})
    return out


def monotonicity_violations(trace) -> List[dict]:
    er = defaultdict(int)
    pr = defaultdict(int)
    out = []
    for r in trace:
        if r["type"] == "adopt":
            if r["er"] <= er[r["node"]]:
                out.append({"check": "er-monotone", "node": r["node"], "er": r["er"]})
            er[r["node"]] = r["er"]
        elif r["type"] == "rebalance":
            k = (r["node"], r["p"])
            if r["pr"] < pr[k]:
                out.append({"check": "pr-monotone", "node": r["node"], "p": r["p"], "pr": r["pr"]})
            if r["pr"] > er[r["node"]]:
                out.append({"check": "pr-le-er", "node": r["node"], "p": r["p"], "pr": r["pr"]})
            pr[k] = r["pr"]
    return out


def retirement_violations(trace) -> List[dict]:
    out = []
    for r in trace:
        if r["type"] == "retire" and r["applied"] and (not r["available"] or r["replica"]):
            out.append({"check": "duplicate-retirement", "node": r["node"], "p": r["p"]})
    return out


def history_events(trace) -> List[dict]:
    return [r for r in trace if r["type"] == "history"]


def lin_violations(trace) -> List[dict]:
    out = []
    for key, verdict in check_events(history_events(trace)).items():
        if not verdict.linearizable:
            out.append({"check": "linearizability", "key": key,
                        "witness": [[o.id, o.kind, o.value, o.invoke,
                                     None if o.optional else o.respond] for o in verdict.witness]})
    return out
