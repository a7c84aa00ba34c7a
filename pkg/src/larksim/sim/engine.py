"""Deterministic discrete-event kernel: clock, bus with faults and holds, reclustering, clients."""
from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from ..clustering import STABILIZATION_TICKS, detect_components
from ..model import Roster
from ..pac import evaluate_pac
from ..placement import Placement, digest, partition_of
from ..rebalance import predict_full
from .rng import Stream

CLIENT = 0
ANY = "*"


class Message:
    __slots__ = ("mid", "src", "dst", "kind", "body", "sent")

    def __init__(self, mid, src, dst, kind, body, sent):
        self.mid = mid
        self.src = src
        self.dst = dst
        self.kind = kind
        self.body = body
        self.sent = sent


@dataclass
class HoldRule:
    kind: str = ANY
    src: object = ANY
    dst: object = ANY
    count: Optional[int] = None  # capture at most this many, then expire

    def matches(self, m: Message) -> bool:
        return ((self.kind == ANY or self.kind == m.kind)
                and (self.src == ANY or self.src == m.src)
                and (self.dst == ANY or self.dst == m.dst))


@dataclass
class SimConfig:
    partitions: int = 1
    fixed_order: Optional[Sequence[int]] = None
    initial_full: Optional[Sequence[int]] = None
    disabled: Tuple[str, ...] = ()
    mutations: Tuple[str, ...] = ()
    op_timeout: int = 1000
    rpc_timeout: int = 400
    retry_delay: int = 5
    delay: int = 1
    jitter: int = 0
    stabilization: int = STABILIZATION_TICKS
    trace_messages: bool = True


class Simulator:
    def __init__(self, roster: Roster, seed: int = 0, config: SimConfig | None = None):
        from .node import Node  # the protocol module imports the kernel's types

        self.roster = roster
        self.cfg = config or SimConfig()
        self.seed = seed
        self.placement = Placement(roster, self.cfg.fixed_order)
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self._mid = 0
        self.uid_counter = 0
        self.trace: List[dict] = []
        self.net_rng = Stream(seed, "network")
        self.client_rng = Stream(seed, "client")
        self.nodes: Dict[int, Node] = {n: Node(self, n) for n in roster.members}
        self.down_links: set = set()
        self.rules: List[HoldRule] = []
        self.held: List[Message] = []
        self.pending_ops: Dict[int, dict] = {}
        self.op_counter = 0
        self.rounds: List[dict] = []
        self._recluster_at: set = set()
        full = roster.members if self.cfg.initial_full is None else self.cfg.initial_full
        for n, node in self.nodes.items():
            node.bootstrap(n in set(full))
        self.log("start", roster=list(roster.members), rf=roster.rf, seed=seed,
                 partitions=self.cfg.partitions)
        # scripts get tick 0 to shape the first cluster
        self.request_recluster(1)

    # events and trace

    def at(self, t: int, fn: Callable, *args) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, fn, args))

    def after(self, dt: int, fn: Callable, *args) -> None:
        self.at(self.now + dt, fn, *args)

    def log(self, event: str, /, **fields) -> None:
        fields["t"] = self.now
        fields["type"] = event
        self.trace.append(fields)

    def run(self, until: Optional[int] = None, max_events: int = 2_000_000) -> None:
        heap = self._heap
        n = 0
        while heap:
            if until is not None and heap[0][0] > until:
                break
            t, _, fn, args = heapq.heappop(heap)
            self.now = t
            fn(*args)
            n += 1
            if n >= max_events:
                raise RuntimeError("event budget exhausted; the run does not quiesce")
        if until is not None and self.now < until:
            self.now = until

    def trace_lines(self) -> List[str]:
        return [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in self.trace]

    def trace_hash(self) -> str:
        h = hashlib.sha256()
        for line in self.trace_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    # helpers

    def partition(self, key: str) -> int:
        return partition_of(digest(key), self.cfg.partitions)

    def new_uid(self) -> int:
        self.uid_counter += 1
        return self.uid_counter

    def alive(self, n: int) -> bool:
        return n == CLIENT or self.nodes[n].alive

    def connected(self, a: int, b: int) -> bool:
        return a == b or (a, b) not in self.down_links

    # network

    def send(self, src: int, dst: int, kind: str, body: dict) -> None:
        self._mid += 1
        m = Message(self._mid, src, dst, kind, body, self.now)
        for rule in self.rules:
            if rule.matches(m):
                self.held.append(m)
                if rule.count is not None:
                    rule.count -= 1
                    if rule.count <= 0:
                        self.rules.remove(rule)
                if self.cfg.trace_messages:
                    self.log("hold", mid=m.mid, src=src, dst=dst, kind=kind)
                return
        if src != dst and src != CLIENT and dst != CLIENT:
            if not self.connected(src, dst) or not self.nodes[dst].alive:
                if self.cfg.trace_messages:
                    self.log("drop", mid=m.mid, src=src, dst=dst, kind=kind)
                return
        if self.cfg.trace_messages:
            self.log("send", mid=m.mid, src=src, dst=dst, kind=kind)
        d = self.cfg.delay
        if self.cfg.jitter and src != dst:
            d += self.net_rng.randint(0, self.cfg.jitter)
        self.after(d, self._deliver, m)

    def _deliver(self, m: Message) -> None:
        if m.dst == CLIENT:
            self._client_reply(m)
            return
        node = self.nodes[m.dst]
        if not node.alive:
            return
        node.on_message(m)

    def hold(self, kind=ANY, src=ANY, dst=ANY, count=None) -> None:
        self.rules.append(HoldRule(kind, src, dst, count))

    def release(self, kind=ANY, src=ANY, dst=ANY, keep_rule: bool = False, limit=None) -> int:
        """Stop holding matching messages and deliver the captured ones in send order."""
        probe = HoldRule(kind, src, dst)
        if not keep_rule:
            self.rules = [r for r in self.rules
                          if not (r.kind == kind and r.src == src and r.dst == dst)]
        out, keep = [], []
        for m in self.held:
            if probe.matches(m) and (limit is None or len(out) < limit):
                out.append(m)
            else:
                keep.append(m)
        self.held = keep
        for m in out:
            if self.cfg.trace_messages:
                self.log("release", mid=m.mid, src=m.src, dst=m.dst, kind=m.kind)
            self.after(self.cfg.delay, self._deliver, m)
        return len(out)

    def drop_held(self, kind=ANY, src=ANY, dst=ANY) -> int:
        probe = HoldRule(kind, src, dst)
        self.rules = [r for r in self.rules if not (r.kind == kind and r.src == src and r.dst == dst)]
        before = len(self.held)
        self.held = [m for m in self.held if not probe.matches(m)]
        return before - len(self.held)

    # faults

    def crash(self, n: int) -> None:
        self.log("crash", node=n)
        self.nodes[n].crash()
        self.request_recluster()

    def recover(self, n: int) -> None:
        self.log("recover", node=n)
        self.nodes[n].recover()
        self.request_recluster()

    def link(self, a: int, b: int, up: bool) -> None:
        pairs = {(a, b), (b, a)}
        if up:
            self.down_links -= pairs
        else:
            self.down_links |= pairs
        self.log("link", a=a, b=b, up=up)
        self.request_recluster()

    def split(self, groups: Iterable[Iterable[int]]) -> None:
        """Cut every link between different groups; links inside a group come up."""
        gid = {}
        for i, g in enumerate(groups):
            for n in g:
                gid[n] = i
        nodes = list(self.nodes)
        for i, a in enumerate(nodes):
            for b in nodes[i + 1:]:
                same = gid.get(a, -1 - a) == gid.get(b, -1 - b)
                if same:
                    self.down_links -= {(a, b), (b, a)}
                else:
                    self.down_links |= {(a, b), (b, a)}
        self.log("split", groups=[sorted(g) for g in groups])
        self.request_recluster()

    def heal(self) -> None:
        self.down_links.clear()
        self.log("heal")
        self.request_recluster()

    # reclustering

    def request_recluster(self, delay: Optional[int] = None) -> None:
        t = self.now + (self.cfg.stabilization if delay is None else delay)
        if t not in self._recluster_at:
            self._recluster_at.add(t)
            self.at(t, self._recluster)

    def _recluster(self) -> None:
        self._recluster_at.discard(self.now)
        live = [n for n, node in self.nodes.items() if node.alive]
        comps = detect_components(live, self.connected)
        batch = []
        for comp in comps:
            members = frozenset(comp)
            if all(self.nodes[n].view is not None and self.nodes[n].view.members == members
                   and self.nodes[n].er_promised == self.nodes[n].er for n in members):
                continue
            batch.append(self._gather_and_announce(members))
        if len(batch) > 1:
            self.log("concurrent_rounds", rounds=[r["id"] for r in batch])

    def _gather_and_announce(self, members: frozenset) -> dict:
        nodes = [self.nodes[n] for n in sorted(members)]
        er = 1 + max(nd.er_promised for nd in nodes)
        for nd in nodes:
            nd.er_promised = er
        coordinator = min(members)
        parts = []
        for p in range(self.cfg.partitions):
            states = {nd.id: nd.parts[p] for nd in nodes}
            full = sorted(n for n, s in states.items() if predict_full(s.pr, s.full, er))
            max_pr = max(s.pr for s in states.values())
            claims = sorted(((s.lr, -n) for n, s in states.items()
                             if s.available and s.leader == n and s.pr == max_pr), reverse=True)
            prior = (-claims[0][1], claims[0][0]) if claims else None
            dups = sorted(n for n, s in states.items() if s.duplicate)
            verdict = evaluate_pac(members, self.roster, p, full, placement=self.placement,
                                   mutations=self.cfg.mutations)
            parts.append({"full": full, "prior": prior, "dups": dups,
                          "available": verdict.available, "condition": verdict.condition,
                          "replicas": self.placement.replicas(members, p)})
        rid = len(self.rounds) + 1
        rnd = {"id": rid, "er": er, "members": sorted(members), "parts": parts}
        self.rounds.append(rnd)
        self.log("round", id=rid, er=er, members=sorted(members), coordinator=coordinator,
                 available=[p["available"] for p in parts],
                 full=[p["full"] for p in parts], replicas=[p["replicas"] for p in parts])
        body = {"er": er, "members": sorted(members), "round": rid}
        for nd in nodes:
            self.send(coordinator, nd.id, "adopt", body)
        return rnd

    # clients

    def client_op(self, node: int, kind: str, key: str, value=None, client=None) -> int:
        self.op_counter += 1
        oid = self.op_counter
        self.pending_ops[oid] = {"key": key, "op": kind}
        ev = {"id": oid, "key": key, "op": kind, "phase": "invoke", "node": node,
              "client": client if client is not None else oid}
        if kind == "write":
            ev["value"] = value
        self.log("history", **ev)
        self.send(CLIENT, node, "client_" + kind, {"op": oid, "key": key, "value": value})
        self.after(self.cfg.op_timeout, self._client_timeout, oid)
        return oid

    def _client_reply(self, m: Message) -> None:
        oid = m.body["op"]
        pend = self.pending_ops.pop(oid, None)
        if pend is None:
            return
        status = m.body["status"]
        if status == "rejected" and m.body.get("in_doubt"):
            # replicas may hold the version even though the leader gave up
            status = "unknown"
        ev = {"id": oid, "key": pend["key"], "op": pend["op"], "phase": "respond",
              "status": status, "reason": m.body.get("reason")}
        if pend["op"] == "read" and status == "ok":
            ev["value"] = m.body.get("value")
        self.log("history", **ev)

    def _client_timeout(self, oid: int) -> None:
        pend = self.pending_ops.pop(oid, None)
        if pend is None:
            return
        self.log("history", id=oid, key=pend["key"], op=pend["op"], phase="respond",
                 status="unknown", reason="timeout")

    def leader_of(self, p: int) -> Optional[int]:
        """A live node that currently believes it leads ``p``, preferring the highest PR."""
        best = None
        for n, nd in self.nodes.items():
            s = nd.parts[p]
            if nd.alive and s.available and s.leader == n:
                if best is None or s.pr > self.nodes[best].parts[p].pr:
                    best = n
        return best
