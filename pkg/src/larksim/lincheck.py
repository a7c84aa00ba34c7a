"""Per-key linearizability checking for a read/write register."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

READ = "read"
WRITE = "write"
INF = math.inf


@dataclass(frozen=True)
class Op:
    """One client operation. ``respond`` is ``inf`` for writes whose outcome is unknown."""

    id: int
    kind: str
    value: object
    invoke: float
    respond: float = INF
    client: object = None

    @property
    def optional(self) -> bool:
        return self.respond == INF


@dataclass
class Verdict:
    linearizable: bool
    order: List[int] = field(default_factory=list)
    witness: List[Op] = field(default_factory=list)


class HistoryError(ValueError):
    pass


def validate(ops: Sequence[Op]) -> None:
    ids = set()
    for op in ops:
        if op.id in ids:
            raise HistoryError(f"duplicate op id {op.id}")
        ids.add(op.id)
        if op.kind not in (READ, WRITE):
            raise HistoryError(f"op {op.id}: unknown kind {op.kind!r}")
        if not op.invoke <= op.respond:
            raise HistoryError(f"op {op.id}: responds before it is invoked")
        if op.kind == READ and op.optional:
            raise HistoryError(f"op {op.id}: a read without a response carries no information")


def _search(ops: Sequence[Op], initial) -> Optional[List[int]]:
    """Depth-first search over linearization points, memoized on (done-set, value)."""
    n = len(ops)
    required = 0
    for i, op in enumerate(ops):
        if not op.optional:
            required |= 1 << i
    seen = set()
    order: List[int] = []

    def dfs(done: int, value) -> bool:
        if done & required == required:
            return True
        memo = (done, value)
        if memo in seen:
            return False
        seen.add(memo)
        # an op may go next only if nothing still pending finished before it began
        horizon = min(ops[i].respond for i in range(n) if not done >> i & 1)
        for i in range(n):
            if done >> i & 1:
                continue
            op = ops[i]
            if op.invoke > horizon:
                continue
            if op.kind == READ:
                if op.value != value:
                    continue
                nxt = value
            else:
                nxt = op.value
            order.append(op.id)
            if dfs(done | 1 << i, nxt):
                return True
            order.pop()
        return False

    return order if dfs(0, initial) else None


def _prefix(ops: Sequence[Op], cut: float) -> List[Op]:
    """Ops invoked no later than ``cut``; unfinished writes become optional, unfinished reads vanish."""
    out = []
    for op in ops:
        if op.invoke > cut:
            continue
        if op.respond > cut:
            if op.kind == READ:
                continue
            op = Op(op.id, op.kind, op.value, op.invoke, INF, op.client)
        out.append(op)
    return out


def check(ops: Sequence[Op], initial=None) -> Verdict:
    """Linearizability of one key's history; on failure returns the shortest violating prefix."""
    ops = list(ops)
    validate(ops)
    order = _search(ops, initial)
    if order is not None:
        return Verdict(True, order)
    # the property is prefix-closed, so the first bad cut can be binary searched
    cuts = sorted({t for op in ops for t in (op.invoke, op.respond) if t != INF})
    lo, hi = 0, len(cuts) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _search(_prefix(ops, cuts[mid]), initial) is None:
            hi = mid
        else:
            lo = mid + 1
    return Verdict(False, [], _prefix(ops, cuts[lo]))


def brute_force(ops: Sequence[Op], initial=None) -> bool:
    """Try every permutation of every admissible op subset. Only for tiny histories."""
    ops = list(ops)
    required = [o for o in ops if not o.optional]
    optional = [o for o in ops if o.optional]
    for k in range(len(optional) + 1):
        for extra in itertools.combinations(optional, k):
            chosen = required + list(extra)
            idx = {o.id: j for j, o in enumerate(chosen)}
            before = [0] * len(chosen)
            for a in chosen:
                for b in chosen:
                    if a.respond < b.invoke:
                        before[idx[b.id]] |= 1 << idx[a.id]
            for perm in itertools.permutations(range(len(chosen))):
                placed = 0
                value = initial
                good = True
                for j in perm:
                    if before[j] & ~placed:
                        good = False
                        break
                    o = chosen[j]
                    if o.kind == WRITE:
                        value = o.value
                    elif o.value != value:
                        good = False
                        break
                    placed |= 1 << j
                if good:
                    return True
    return False


# Histories as JSON lines: one object per invoke or respond event.

def ops_from_events(events: Iterable[dict]) -> Dict[str, List[Op]]:
    """Pair invoke/respond events into per-key ops.

    Events carry ``key``, ``op``, ``phase``, ``id``, ``t`` and either
    ``value`` (writes and read results) or ``status``. Rejected ops are
    dropped; unanswered or ``unknown`` writes become optional.
    """
    pending: Dict[object, dict] = {}
    done: Dict[str, List[Op]] = {}
    for ev in events:
        if "t" not in ev:
            raise HistoryError(f"event without a timestamp: {ev}")
        try:
            oid, phase = ev["id"], ev["phase"]
        except KeyError as exc:
            raise HistoryError(f"event missing field {exc}") from None
        if phase == "invoke":
            if oid in pending:
                raise HistoryError(f"op {oid} invoked twice")
            pending[oid] = ev
            continue
        if phase != "respond":
            raise HistoryError(f"bad phase {phase!r}")
        inv = pending.pop(oid, None)
        if inv is None:
            raise HistoryError(f"response for unknown op {oid}")
        status = ev.get("status", "ok")
        if status == "rejected":
            continue
        if status == "unknown":
            if inv["op"] == WRITE:
                done.setdefault(inv["key"], []).append(
                    Op(oid, WRITE, inv.get("value"), inv["t"], INF, inv.get("client")))
            continue
        value = inv.get("value") if inv["op"] == WRITE else ev.get("value")
        done.setdefault(inv["key"], []).append(
            Op(oid, inv["op"], value, inv["t"], ev["t"], inv.get("client")))
    for oid, inv in pending.items():
        if inv["op"] == WRITE:
            done.setdefault(inv["key"], []).append(
                Op(oid, WRITE, inv.get("value"), inv["t"], INF, inv.get("client")))
    return done


def check_events(events: Iterable[dict]) -> Dict[str, Verdict]:
    return {key: check(ops) for key, ops in sorted(ops_from_events(events).items())}


def load_events(path: str) -> List[dict]:
    """Read history events from a JSON-lines file; non-history trace lines are skipped."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("type", "history") == "history":
                out.append(rec)
    return out


def op_to_json(op: Op) -> dict:
    return {"id": op.id, "kind": op.kind, "value": op.value, "invoke": op.invoke,
            "respond": None if op.optional else op.respond, "client": op.client}
