"""Scripted scenarios: JSON loading, validation, execution and expectation checks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from ..model import Roster
from ..replication import DISABLEABLE
from .audit import audit, lin_violations
from .engine import ANY, SimConfig, Simulator

ACTIONS = {"crash", "recover", "split", "heal", "link_down", "link_up", "hold", "release",
           "drop_held", "write", "read"}


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    roster: List[int]
    rf: int
    steps: List[dict]
    seed: int = 0
    name: str = ""
    partitions: int = 1
    succession: Optional[List[int]] = None
    initial_full: Optional[List[int]] = None
    op_timeout: int = 1000
    rpc_timeout: int = 400
    jitter: int = 0
    run_until: Optional[int] = None
    expect: List[dict] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known - {"description"}
        if extra:
            raise ScenarioError(f"unknown scenario fields: {sorted(extra)}")
        try:
            sc = cls(**{k: v for k, v in d.items() if k in known})
        except TypeError as exc:
            raise ScenarioError(str(exc)) from None
        sc.validate()
        return sc

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"{path}: {exc}") from None

    def validate(self) -> None:
        nodes = set(self.roster)
        if len(nodes) != len(self.roster) or 0 in nodes:
            raise ScenarioError("roster ids must be distinct and non-zero")
        if not 1 <= self.rf <= len(self.roster):
            raise ScenarioError(f"rf={self.rf} does not fit a roster of {len(self.roster)}")
        for i, st in enumerate(self.steps):
            act = st.get("action")
            if act not in ACTIONS:
                raise ScenarioError(f"step {i}: unknown action {act!r}")
            if "t" not in st:
                raise ScenarioError(f"step {i}: missing time")
            args = st.get("args", {})
            refs = [args[k] for k in ("node", "a", "b") if k in args]
            refs += [args[k] for k in ("src", "dst") if k in args and args[k] != ANY]
            for g in args.get("groups", []):
                refs += list(g)
            for n in refs:
                if n not in nodes:
                    raise ScenarioError(f"step {i}: unknown node {n}")
        for lst in (self.succession, self.initial_full):
            if lst is not None and not set(lst) <= nodes:
                raise ScenarioError("succession/initial_full reference unknown nodes")


@dataclass
class RunResult:
    sim: Simulator
    violations: List[dict]
    expectations: List[dict]

    @property
    def ok(self) -> bool:
        return not self.violations and all(e["met"] for e in self.expectations)

    def trace_hash(self) -> str:
        return self.sim.trace_hash()


def apply_step(sim: Simulator, step: dict) -> None:
    act = step["action"]
    a = step.get("args", {})
    if act == "crash":
        sim.crash(a["node"])
    elif act == "recover":
        sim.recover(a["node"])
    elif act == "split":
        sim.split(a["groups"])
    elif act == "heal":
        sim.heal()
    elif act in ("link_down", "link_up"):
        sim.link(a["a"], a["b"], act == "link_up")
    elif act == "hold":
        sim.hold(a.get("kind", ANY), a.get("src", ANY), a.get("dst", ANY), a.get("count"))
    elif act == "release":
        sim.release(a.get("kind", ANY), a.get("src", ANY), a.get("dst", ANY),
                    keep_rule=a.get("keep_rule", False), limit=a.get("limit"))
    elif act == "drop_held":
        sim.drop_held(a.get("kind", ANY), a.get("src", ANY), a.get("dst", ANY))
    elif act == "write":
        sim.client_op(a["node"], "write", a["key"], a["value"], a.get("client"))
    elif act == "read":
        sim.client_op(a["node"], "read", a["key"], client=a.get("client"))


def check_expectation(trace: Sequence[dict], exp: dict) -> dict:
    """An expectation matches trace records on every field it names."""
    want = {k: v for k, v in exp.items() if k != "absent"}
    hits = [r for r in trace if all(_field_match(r.get(k), v) for k, v in want.items())]
    met = not hits if exp.get("absent") else bool(hits)
    return {"expect": exp, "met": met, "hits": len(hits)}


def _field_match(actual, wanted) -> bool:
    if isinstance(actual, list) and not isinstance(wanted, list):
        return wanted in actual
    return actual == wanted


def run_scenario(sc: Scenario, seed: Optional[int] = None, disabled: Sequence[str] = (),
                 mutations: Sequence[str] = ()) -> RunResult:
    bad = [d for d in disabled if d not in DISABLEABLE]
    if bad:
        raise ScenarioError(f"cannot disable {bad}; choose from {list(DISABLEABLE)}")
    cfg = SimConfig(partitions=sc.partitions, fixed_order=sc.succession,
                    initial_full=sc.initial_full, disabled=tuple(disabled),
                    mutations=tuple(mutations), op_timeout=sc.op_timeout,
                    rpc_timeout=sc.rpc_timeout, jitter=sc.jitter)
    sim = Simulator(Roster(tuple(sc.roster), sc.rf), seed=sc.seed if seed is None else seed,
                    config=cfg)
    for st in sorted(sc.steps, key=lambda s: s["t"]):
        sim.at(st["t"], apply_step, sim, st)
    last = max((s["t"] for s in sc.steps), default=0)
    sim.run(until=sc.run_until if sc.run_until is not None else last + sc.op_timeout + 10)
    violations = audit(sim.trace) + lin_violations(sim.trace)
    expectations = [check_expectation(sim.trace, e) for e in sc.expect]
    return RunResult(sim, violations, expectations)
