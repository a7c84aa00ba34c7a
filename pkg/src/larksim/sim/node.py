"""One simulated database node: rebalance, migrations and the per-key read/write path."""
from __future__ import annotations

from typing import Dict, List, Optional

from ..model import BOTTOM, REPLICATED, UNREPLICATED, ClusterView, LogicalClock, PartitionState, RecordVersion
from ..rebalance import PriorLeader, plan_rebalance
from ..replication import (
    ReplicaWriteMsg,
    check_regime,
    dup_res_fold,
    dup_res_handler,
    evaluate_replica_write,
)
from .engine import CLIENT, Message


class Wait:
    """Yielded by a task: resume when every rpc id has answered or after ``timeout`` ticks."""

    __slots__ = ("rids", "timeout")

    def __init__(self, rids, timeout):
        self.rids = list(rids)
        self.timeout = timeout


class Task:
    __slots__ = ("gen", "pending", "results", "token")

    def __init__(self, gen):
        self.gen = gen
        self.pending = set()
        self.results = {}
        self.token = 0


class Node:
    def __init__(self, sim, nid: int):
        self.sim = sim
        self.id = nid
        self.alive = True
        self.incarnation = 0
        # durable
        self.er = 0
        self.er_promised = 0
        self.parts: List[PartitionState] = [PartitionState() for _ in range(sim.cfg.partitions)]
        self.records: Dict[str, RecordVersion] = {}
        self.hw: Dict[str, LogicalClock] = {}
        self._reset_volatile()

    def _reset_volatile(self) -> None:
        n = self.sim.cfg.partitions
        self.view: Optional[ClusterView] = None
        self.rpcs: Dict[int, Task] = {}
        self.next_rid = 0
        self.busy_keys: set = set()
        self.queued: Dict[str, list] = {}
        self.inflight = [0] * n
        self.handing_off: set = set()
        self.mig_epoch = [0] * n
        self.dups = [frozenset()] * n

    def bootstrap(self, full: bool) -> None:
        for s in self.parts:
            s.full = full
            s.duplicate = full

    def crash(self) -> None:
        self.alive = False
        self.incarnation += 1
        self._reset_volatile()
        for s in self.parts:
            s.leader = None
            s.available = False

    def recover(self) -> None:
        self.alive = True

    # task plumbing

    def spawn(self, gen) -> None:
        self._step(Task(gen), None)

    def _step(self, task: Task, value) -> None:
        try:
            w = task.gen.send(value)
        except StopIteration:
            return
        task.token += 1
        task.pending = set(w.rids)
        task.results = {}
        for rid in w.rids:
            self.rpcs[rid] = task
        self.sim.after(w.timeout, self._timeout, task, task.token, self.incarnation)

    def _timeout(self, task: Task, token: int, inc: int) -> None:
        if not self.alive or inc != self.incarnation or task.token != token:
            return
        for rid in task.pending:
            self.rpcs.pop(rid, None)
        task.token += 1
        self._step(task, task.results)

    def _answer(self, body: dict) -> None:
        task = self.rpcs.pop(body["rid"], None)
        if task is None:
            return
        task.results[body["rid"]] = body
        task.pending.discard(body["rid"])
        if not task.pending:
            task.token += 1
            self._step(task, task.results)

    def rpc(self, dst: int, kind: str, body: dict) -> int:
        self.next_rid += 1
        rid = (self.incarnation << 32) | self.next_rid
        body["rid"] = rid
        self.sim.send(self.id, dst, kind, body)
        return rid

    def reply(self, m: Message, **body) -> None:
        body["rid"] = m.body["rid"]
        self.sim.send(self.id, m.src, m.kind + "_r", body)

    # dispatch

    def on_message(self, m: Message) -> None:
        k = m.kind
        if k.endswith("_r"):
            self._answer(m.body)
            return
        handler = getattr(self, "_on_" + k)
        handler(m)

    # reclustering and rebalance

    def _on_adopt(self, m: Message) -> None:
        er = m.body["er"]
        if er <= self.er or er < self.er_promised:
            self.sim.log("adopt_ignored", node=self.id, er=er, current=self.er)
            return
        self.er = er
        self.view = ClusterView(frozenset(m.body["members"]), er)
        self.sim.log("adopt", node=self.id, er=er, members=m.body["members"])
        self.sim.send(self.id, self.id, "rebalance", {"er": er, "round": m.body["round"]})

    def _on_rebalance(self, m: Message) -> None:
        er = m.body["er"]
        # a restart drops the view, so a rebalance adopted before the crash is stale too
        if er != self.er or self.view is None or self.view.er != er:
            self.sim.log("rebalance_stale", node=self.id, er=er, current=self.er)
            return
        rnd = self.sim.rounds[m.body["round"] - 1]
        members = self.view.members
        sim = self.sim
        # Step 4 for every partition happens inside this one event
        for p, info in enumerate(rnd["parts"]):
            prior = PriorLeader(*info["prior"]) if info["prior"] else None
            plan = plan_rebalance(self.id, p, self.view, sim.roster, sim.placement, self.parts[p],
                                  info["full"], prior, info["dups"], mutations=sim.cfg.mutations)
            self.parts[p] = st = plan.state
            self.dups[p] = frozenset(info["dups"]) & members
            self.mig_epoch[p] += 1
            self.handing_off.discard(p)
            sim.log("rebalance", node=self.id, p=p, er=er, available=st.available, pr=st.pr,
                    lr=st.lr, leader=st.leader, full=st.full, duplicate=st.duplicate,
                    condition=plan.verdict.condition)
            if st.available and st.leader == self.id:
                self.spawn(self._migrate(p, self.mig_epoch[p], plan))

    # migrations (rebalance steps 5 and 6)

    def _partition_records(self, p: int) -> List[RecordVersion]:
        part = self.sim.partition
        return [v for k, v in sorted(self.records.items()) if part(k) == p]

    def _merge(self, v: RecordVersion) -> None:
        cur = self.records.get(v.key)
        if cur is None or v.lc > cur.lc:
            self.records[v.key] = v
        elif v.lc == cur.lc and v.uid == cur.uid and v.replicated and not cur.replicated:
            self.records[v.key] = v
        hw = self.hw.get(v.key, BOTTOM)
        if v.lc > hw:
            self.hw[v.key] = v.lc

    def _migrate(self, p: int, epoch: int, plan):
        sim = self.sim
        pr = plan.state.pr

        def valid():
            st = self.parts[p]
            return self.mig_epoch[p] == epoch and st.pr == pr and st.leader == self.id

        pending = [t.source for t in plan.immigration]
        while pending:
            rids = {self.rpc(s, "pull", {"p": p, "pr": pr}): s for s in pending}
            res = yield Wait(rids, sim.cfg.rpc_timeout)
            if not valid():
                return
            for rid, r in res.items():
                if r["ok"]:
                    for v in r["records"]:
                        self._merge(v)
                    pending.remove(rids[rid])
            if pending:
                yield Wait((), sim.cfg.retry_delay)
                if not valid():
                    return
        if not self.parts[p].full:
            self.parts[p].full = True
            sim.log("full", node=self.id, p=p, pr=pr)

        targets = [t.destination for t in plan.emigration]
        while targets:
            snap = self._partition_records(p)
            rids = {self.rpc(d, "push", {"p": p, "pr": pr, "records": snap}): d for d in targets}
            res = yield Wait(rids, sim.cfg.rpc_timeout)
            if not valid():
                return
            for rid, r in res.items():
                if r["ok"]:
                    targets.remove(rids[rid])
            if targets:
                yield Wait((), sim.cfg.retry_delay)
                if not valid():
                    return
        sim.log("emigrated", node=self.id, p=p, pr=pr)

        replicas = set(plan.cluster_replicas)
        for n in sorted(self.dups[p] - replicas - {self.id}):
            sim.send(self.id, n, "retire", {"p": p, "pr": pr})

        if plan.acting:
            self.handing_off.add(p)
            while self.inflight[p]:
                yield Wait((), 1)
                if not valid():
                    self.handing_off.discard(p)
                    return
            new = plan.cluster_replicas[0]
            st = self.parts[p]
            st.leader = new
            st.full = False
            self.handing_off.discard(p)
            sim.log("handoff", node=self.id, p=p, pr=pr, to=new)
            for n in sorted(st.nodes_in_cluster - {self.id}):
                sim.send(self.id, n, "leader", {"p": p, "pr": pr, "leader": new})
            # the replicas now hold everything this node had, so it stops being a duplicate
            if self.id not in replicas and st.duplicate:
                st.duplicate = False
                sim.log("retire", node=self.id, p=p, pr=pr, applied=True,
                        available=st.available, replica=False, leader=self.id)

    def _on_pull(self, m: Message) -> None:
        st = self.parts[m.body["p"]]
        if st.pr != m.body["pr"]:
            self.reply(m, ok=False)
            return
        self.reply(m, ok=True, records=self._partition_records(m.body["p"]))

    def _on_push(self, m: Message) -> None:
        p = m.body["p"]
        st = self.parts[p]
        if st.pr != m.body["pr"]:
            self.reply(m, ok=False)
            return
        for v in m.body["records"]:
            self._merge(v)
        if not st.full:
            st.full = True
            self.sim.log("full", node=self.id, p=p, pr=st.pr)
        self.reply(m, ok=True)

    def _on_retire(self, m: Message) -> None:
        p = m.body["p"]
        st = self.parts[p]
        replica = self.id in self.sim.placement.replicas(st.nodes_in_cluster, p)
        legal = st.available and st.pr == m.body["pr"] and not replica
        if legal and st.duplicate:
            st.duplicate = False
        self.sim.log("retire", node=self.id, p=p, pr=m.body["pr"], applied=legal,
                     available=st.available, replica=replica, leader=m.src)

    def _on_leader(self, m: Message) -> None:
        p = m.body["p"]
        st = self.parts[p]
        if st.available and st.pr == m.body["pr"] and st.leader == m.src:
            st.leader = m.body["leader"]
            self.sim.log("leader_change", node=self.id, p=p, pr=st.pr, leader=st.leader)

    # replica side of the data path

    def _on_rw(self, m: Message) -> None:
        msg: ReplicaWriteMsg = m.body["msg"]
        p = m.body["p"]
        st = self.parts[p]
        cur = self.records.get(msg.key)
        verdict = evaluate_replica_write(msg, st, self.er, self.id, cur.lc if cur else BOTTOM,
                                         self.sim.placement, p, self.sim.cfg.disabled)
        self.sim.log("replica_write", node=self.id, key=msg.key, leader=msg.leader,
                     lc=list(msg.lc.as_tuple()), rr=msg.rr, lrm=msg.lrm, er=self.er, pr=st.pr,
                     lr=st.lr, accept=verdict.accept, reasons=list(verdict.reasons),
                     uid=msg.payload.uid)
        if verdict.accept:
            v = msg.payload
            # with two copies the leader holds the other one, unless it is only acting
            if self.sim.roster.rf == 2 and m.body.get("sole"):
                v = v.mark_replicated()
                self._lineage(v, "replica")
            self.records[msg.key] = v
            if v.lc > self.hw.get(msg.key, BOTTOM):
                self.hw[msg.key] = v.lc
        self.reply(m, ok=verdict.accept, reason=verdict.reason)

    def _on_advice(self, m: Message) -> None:
        cur = self.records.get(m.body["key"])
        if cur is not None and cur.uid == m.body["uid"] and cur.lc == m.body["lc"] and not cur.replicated:
            self.records[cur.key] = cur.mark_replicated()

    def _on_dupres(self, m: Message) -> None:
        st = self.parts[m.body["p"]]
        ok, v = dup_res_handler(st, m.src, self.records.get(m.body["key"]))
        self.reply(m, ok=ok, version=v)

    def _on_regime(self, m: Message) -> None:
        st = self.parts[m.body["p"]]
        self.reply(m, ok=check_regime(st, m.src, m.body["pr"]))

    # leader side of the data path

    def _lineage(self, v: RecordVersion, by: str) -> None:
        self.sim.log("replicated", node=self.id, key=v.key, uid=v.uid, parent=v.parent,
                     lc=list(v.lc.as_tuple()), by=by)

    def _client(self, m: Message, kind: str) -> None:
        key = m.body["key"]
        if key in self.busy_keys:
            self.queued.setdefault(key, []).append((kind, m.body))
            return
        self._start(kind, m.body)

    def _on_client_write(self, m: Message) -> None:
        self._client(m, "write")

    def _on_client_read(self, m: Message) -> None:
        self._client(m, "read")

    def _start(self, kind: str, body: dict) -> None:
        key = body["key"]
        self.busy_keys.add(key)
        gen = self._write(body) if kind == "write" else self._read(body)
        self.spawn(self._serialized(key, gen))

    def _serialized(self, key: str, gen):
        yield from gen
        self.busy_keys.discard(key)
        q = self.queued.get(key)
        if q:
            kind, body = q.pop(0)
            if not q:
                del self.queued[key]
            self._start(kind, body)

    def _respond(self, body: dict, status: str, reason=None, value=None, in_doubt=False) -> None:
        self.sim.send(self.id, CLIENT, "client_reply",
                      {"op": body["op"], "status": status, "reason": reason, "value": value,
                       "in_doubt": in_doubt})

    def _next_lc(self, key: str, rr: int) -> LogicalClock:
        base = self.hw.get(key, BOTTOM)
        cur = self.records.get(key)
        if cur is not None and cur.lc > base:
            base = cur.lc
        lc = base.next(rr)
        self.hw[key] = lc
        return lc

    def _targets(self, p: int) -> List[int]:
        st = self.parts[p]
        return [n for n in self.sim.placement.replicas(st.nodes_in_cluster, p) if n != self.id]

    def _ensure_latest(self, p: int, key: str, rr: int):
        """Dup-res when the leader is not full and the key is not from the current regime."""
        st = self.parts[p]
        cur = self.records.get(key)
        if st.full or (cur is not None and cur.lc.rr == rr):
            return True
        targets = sorted((self.dups[p] | set(self._targets(p))) - {self.id})
        rids = [self.rpc(n, "dupres", {"p": p, "key": key}) for n in targets]
        res = yield Wait(rids, self.sim.cfg.rpc_timeout)
        if len(res) < len(rids) or not all(r["ok"] for r in res.values()):
            return False
        best = dup_res_fold(self.records.get(key), (r["version"] for r in res.values()))
        if best is not None:
            self._merge(best)
        return True

    def _replicate(self, p: int, v: RecordVersion, rr: int):
        st = self.parts[p]
        rids = []
        targets = self._targets(p)
        for n in targets:
            msg = ReplicaWriteMsg(v.key, self.id, n, rr, v.lc, st.lr, v)
            rids.append(self.rpc(n, "rw", {"p": p, "msg": msg, "sole": len(targets) == 1}))
        if not rids:
            return "ok"
        res = yield Wait(rids, self.sim.cfg.rpc_timeout)
        if any(not r["ok"] for r in res.values()):
            return "rejected"
        if len(res) < len(rids):
            return "timeout"
        return "ok"

    def _committed(self, p: int, v: RecordVersion) -> None:
        self._lineage(v, "leader")
        cur = self.records.get(v.key)
        if cur is not None and cur.uid == v.uid and cur.lc == v.lc:
            self.records[v.key] = cur.mark_replicated()
        targets = self._targets(p)
        if len(targets) > 1:
            for n in targets:
                self.sim.send(self.id, n, "advice", {"key": v.key, "uid": v.uid, "lc": v.lc})

    def _rereplicate(self, p: int, key: str, rr: int):
        cur = self.records[key]
        v = cur.retagged(self._next_lc(key, rr))
        self.records[key] = v
        result = yield from self._replicate(p, v, rr)
        if result == "ok":
            self._committed(p, v)
        return result

    def _is_leader(self, p: int) -> bool:
        st = self.parts[p]
        return st.available and st.leader == self.id and p not in self.handing_off

    def _write(self, body: dict):
        key = body["key"]
        p = self.sim.partition(key)
        if not self._is_leader(p):
            self._respond(body, "rejected", "not-leader")
            return
        rr = self.parts[p].pr
        self.inflight[p] += 1
        try:
            ok = yield from self._ensure_latest(p, key, rr)
            if not ok:
                self._respond(body, "rejected", "dup-res")
                return
            cur = self.records.get(key)
            if cur is not None and not cur.replicated:
                result = yield from self._rereplicate(p, key, rr)
                if result != "ok":
                    self._respond(body, "rejected", "re-replication " + result)
                    return
            prev = self.records.get(key)
            v = RecordVersion(key, body["value"], self._next_lc(key, rr), UNREPLICATED,
                              uid=self.sim.new_uid(), parent=prev.uid if prev else 0,
                              parent_lc=prev.lc if prev else None)
            self.records[key] = v
            self.sim.log("version", node=self.id, key=key, uid=v.uid, parent=v.parent,
                         lc=list(v.lc.as_tuple()), value=v.value)
            result = yield from self._replicate(p, v, rr)
            if result == "ok":
                self._committed(p, v)
                self._respond(body, "ok")
            elif result == "rejected":
                if self.records.get(key) is v:
                    if prev is None:
                        del self.records[key]
                    else:
                        self.records[key] = RecordVersion(prev.key, prev.value, prev.lc,
                                                          UNREPLICATED, prev.uid, prev.parent,
                                                          prev.parent_lc)
                # a replica may have accepted before another rejected
                self._respond(body, "rejected", "replica-reject", in_doubt=True)
            else:
                self._respond(body, "rejected", "replica-timeout", in_doubt=True)
        finally:
            self.inflight[p] -= 1

    def _read(self, body: dict):
        key = body["key"]
        p = self.sim.partition(key)
        if not self._is_leader(p):
            self._respond(body, "rejected", "not-leader")
            return
        rr = self.parts[p].pr
        self.inflight[p] += 1
        try:
            ok = yield from self._ensure_latest(p, key, rr)
            if not ok:
                self._respond(body, "rejected", "dup-res")
                return
            cur = self.records.get(key)
            if cur is not None and not cur.replicated:
                result = yield from self._rereplicate(p, key, rr)
                if result != "ok":
                    self._respond(body, "rejected", "re-replication " + result)
                    return
            cur = self.records.get(key)
            value = cur.value if cur is not None else None
            rids = [self.rpc(n, "regime", {"p": p, "pr": rr}) for n in self._targets(p)]
            if rids:
                res = yield Wait(rids, self.sim.cfg.rpc_timeout)
                if len(res) < len(rids) or not all(r["ok"] for r in res.values()):
                    self._respond(body, "rejected", "check-regime")
                    return
            if not check_regime(self.parts[p], self.id, rr):
                self._respond(body, "rejected", "check-regime")
                return
            self._respond(body, "ok", value=value)
        finally:
            self.inflight[p] -= 1
