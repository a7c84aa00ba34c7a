"""Random adversarial runs: faults, holds and client ops, each trace audited and lin-checked."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

from ..model import Roster
from .audit import audit, lin_violations
from .engine import ANY, SimConfig, Simulator
from .rng import Stream

FAULT_KINDS = ("crash", "split", "link", "hold", "jitter")
# message kinds worth delaying; client traffic is left alone
HOLDABLE = ("rw", "rw_r", "dupres", "dupres_r", "regime", "regime_r", "adopt", "rebalance",
            "pull", "pull_r", "push", "push_r", "advice", "retire", "leader")
KEYS = ("a", "b", "c")


def parse_faults(spec: str) -> frozenset:
    """``"all"``, ``"none"`` or a comma list drawn from FAULT_KINDS."""
    spec = spec.strip()
    if spec in ("", "none"):
        return frozenset()
    if spec == "all":
        return frozenset(FAULT_KINDS)
    kinds = frozenset(s.strip() for s in spec.split(","))
    bad = kinds - set(FAULT_KINDS)
    if bad:
        raise ValueError(f"unknown fault kinds {sorted(bad)}; choose from {list(FAULT_KINDS)}")
    return kinds


def parse_seeds(spec: str) -> range:
    """``"a..b"`` is inclusive at both ends; a bare number is one seed."""
    if ".." in spec:
        a, b = spec.split("..", 1)
        lo, hi = int(a), int(b)
    else:
        lo = hi = int(spec)
    if hi < lo:
        raise ValueError(f"empty seed range {spec!r}")
    return range(lo, hi + 1)


@dataclass
class FuzzRun:
    seed: int
    nodes: int
    rf: int
    ops: int
    violations: List[dict]
    trace_hash: str
    sim: Optional[Simulator] = None


@dataclass
class FuzzReport:
    runs: int = 0
    ops: int = 0
    failures: List[FuzzRun] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures


class _Driver:
    """Schedules one random run. Every choice comes from the seed's own stream."""

    def __init__(self, seed: int, n_ops: int, faults: frozenset, disabled: Sequence[str] = (),
                 mutations: Sequence[str] = (), keep_trace: bool = False):
        self.rng = Stream(seed, "fuzz")
        r = self.rng
        self.n = r.randint(3, 7)
        self.rf = r.randint(2, min(4, self.n))
        self.n_ops = n_ops
        self.faults = faults
        cfg = SimConfig(partitions=r.randint(1, 4), op_timeout=120, rpc_timeout=30,
                        jitter=r.randint(0, 3) if "jitter" in faults else 0,
                        disabled=tuple(disabled), mutations=tuple(mutations),
                        trace_messages=keep_trace)
        self.sim = Simulator(Roster(tuple(range(1, self.n + 1)), self.rf), seed=seed, config=cfg)
        self.values = 0

    def schedule(self) -> int:
        r, sim = self.rng, self.sim
        t = 5
        for _ in range(self.n_ops):
            t += r.randint(0, 6)
            sim.at(t, self._client_op)
            if self.faults and r.random() < 0.3:
                sim.at(t + r.randint(0, 3), self._fault)
        end = t + 10
        sim.at(end, self._settle)
        # final reads see the state every earlier write left behind
        for i, key in enumerate(KEYS):
            sim.at(end + 40 + i, self._final_read, key)
        return end + 40 + len(KEYS) + sim.cfg.op_timeout + 5

    def _client_op(self) -> None:
        r, sim = self.rng, self.sim
        key = r.choice(KEYS)
        node = self._target(key)
        if r.random() < 0.6:
            self.values += 1
            sim.client_op(node, "write", key, f"v{self.values}")
        else:
            sim.client_op(node, "read", key)

    def _target(self, key: str) -> int:
        r, sim = self.rng, self.sim
        leader = sim.leader_of(sim.partition(key))
        if leader is not None and r.random() < 0.85:
            return leader
        return r.randint(1, self.n)

    def _fault(self) -> None:
        r, sim = self.rng, self.sim
        options = [k for k in ("crash", "split", "link", "hold") if k in self.faults]
        if not options:
            return
        kind = r.choice(options)
        nodes = list(range(1, self.n + 1))
        if kind == "crash":
            down = [n for n in nodes if not sim.nodes[n].alive]
            if down and r.random() < 0.5:
                sim.recover(r.choice(down))
            else:
                up = [n for n in nodes if sim.nodes[n].alive]
                if len(up) > 1:
                    sim.crash(r.choice(up))
        elif kind == "split":
            if r.random() < 0.35:
                sim.heal()
            else:
                k = r.randint(2, 3)
                groups = [[] for _ in range(k)]
                for n in nodes:
                    groups[r.randint(0, k - 1)].append(n)
                sim.split([g for g in groups if g])
        elif kind == "link":
            a, b = r.sample(nodes, 2)
            sim.link(a, b, (a, b) in sim.down_links and r.random() < 0.7)
        else:
            roll = r.random()
            if roll < 0.45:
                src = r.choice(nodes) if r.random() < 0.5 else ANY
                dst = r.choice(nodes) if r.random() < 0.5 else ANY
                sim.hold(r.choice(HOLDABLE), src, dst, r.randint(1, 4))
            elif roll < 0.9:
                if sim.held:
                    m = r.choice(sim.held)
                    sim.release(m.kind, m.src, m.dst, limit=r.randint(1, 3))
            else:
                if sim.held:
                    m = r.choice(sim.held)
                    sim.drop_held(m.kind, m.src, m.dst)

    def _settle(self) -> None:
        sim = self.sim
        sim.rules.clear()
        held, sim.held = sim.held, []
        for m in held:
            sim.after(sim.cfg.delay, sim._deliver, m)
        for n, nd in sim.nodes.items():
            if not nd.alive:
                sim.recover(n)
        sim.heal()

    def _final_read(self, key: str) -> None:
        leader = self.sim.leader_of(self.sim.partition(key))
        self.sim.client_op(leader if leader is not None else 1, "read", key)


def fuzz_one(seed: int, n_ops: int = 50, faults: Iterable[str] = FAULT_KINDS,
             disabled: Sequence[str] = (), mutations: Sequence[str] = (),
             keep_trace: bool = False) -> FuzzRun:
    d = _Driver(seed, n_ops, frozenset(faults), disabled, mutations, keep_trace)
    until = d.schedule()
    d.sim.run(until=until)
    violations = audit(d.sim.trace) + lin_violations(d.sim.trace)
    return FuzzRun(seed, d.n, d.rf, d.sim.op_counter, violations, d.sim.trace_hash(),
                   d.sim if (keep_trace or violations) else None)


def fuzz(seeds: Iterable[int], n_ops: int = 50, faults: Iterable[str] = FAULT_KINDS,
         disabled: Sequence[str] = (), mutations: Sequence[str] = (),
         progress=None) -> FuzzReport:
    report = FuzzReport()
    start = time.perf_counter()
    for seed in seeds:
        run = fuzz_one(seed, n_ops, faults, disabled, mutations)
        report.runs += 1
        report.ops += run.ops
        if run.violations:
            report.failures.append(run)
        if progress is not None:
            progress(run)
    report.seconds = time.perf_counter() - start
    return report
