"""Cluster-scale availability under independent node failures.

Each tick every up node fails with probability p and stays down for a fixed
number of ticks. A partition is available to LARK when a majority of the
database is up and some node holding its latest copy is reachable; the
baseline needs a majority of a fixed 2f+1 replica set. Between failure and
recovery events nothing changes, so the sweep jumps from event to event and
multiplies the current unavailable count by the gap.
"""
from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .placement import succession_list

Z95 = 1.96
LARK_RULES = ("roster", "strict")
CSV_COLUMNS = ("rf", "p", "seed", "ticks", "u_lark", "u_maj", "ratio", "ci_lark", "ci_maj",
               "stopped_early")

DEFAULT_PS = (5e-5, 1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2)


class ConfigError(ValueError):
    pass


@dataclass
class SweepConfig:
    n: int = 155
    P: int = 4096
    rfs: Tuple[int, ...] = (2, 3, 4)
    ps: Tuple[float, ...] = DEFAULT_PS
    t_down: int = 10
    seeds: Tuple[int, ...] = (0, 1, 2)
    t_min: int = 50_000
    t_max: int = 3_000_000
    eps_abs: float = 5e-6
    eps_rel: float = 0.05
    check_every: int = 5_000
    min_events: int = 200
    # "roster": latest copy lost only while every roster replica is down.
    # "strict": a replica that missed writes stays stale until the partition is available again.
    lark_rule: str = "roster"

    def validate(self) -> "SweepConfig":
        self.rfs = tuple(int(r) for r in self.rfs)
        self.ps = tuple(float(p) for p in self.ps)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.n < 1 or self.P < 1 or self.t_down < 1:
            raise ConfigError("n, P and t_down must be positive")
        for rf in self.rfs:
            if rf < 1 or 2 * rf - 1 > self.n:
                raise ConfigError(f"rf={rf} needs at least {2 * rf - 1} nodes for the baseline")
        if any(not 0 <= p < 1 for p in self.ps):
            raise ConfigError("failure probabilities must lie in [0, 1)")
        if list(self.ps) != sorted(self.ps):
            raise ConfigError("p grid must be sorted")
        if not 0 < self.t_min <= self.t_max or self.check_every < 1:
            raise ConfigError("need 0 < t_min <= t_max and check_every >= 1")
        if self.eps_abs <= 0 or self.eps_rel <= 0 or self.min_events < 0:
            raise ConfigError("stopping thresholds must be positive")
        if self.lark_rule not in LARK_RULES:
            raise ConfigError(f"lark_rule must be one of {LARK_RULES}")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown sweep settings: {sorted(extra)}")
        try:
            return cls(**d).validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str) -> "SweepConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None


def desk_config(**overrides) -> SweepConfig:
    """Same rules on a small cluster: 31 nodes, 256 partitions."""
    d = {"n": 31, "P": 256}
    d.update(overrides)
    return SweepConfig(**d).validate()


@dataclass
class CellResult:
    rf: int
    p: float
    seed: int
    ticks: int
    u_lark: float
    u_maj: float
    ratio: float
    ci_lark: float
    ci_maj: float
    stopped_early: bool
    events_lark: int = 0
    events_maj: int = 0

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


def ci_half_width(u: float, P: int, T: int) -> float:
    """95% normal-approximation half width with denominator P*T."""
    if T <= 0:
        return math.inf
    return Z95 * math.sqrt(max(u * (1.0 - u), 0.0) / (P * T))


def placement_table(n: int, P: int, width: int) -> np.ndarray:
    """First ``width`` nodes (0-based) of every partition's succession list."""
    nodes = list(range(1, n + 1))
    return np.array([[x - 1 for x in succession_list(q, nodes)[:width]] for q in range(P)],
                    dtype=np.int64)


class _Cell:
    def __init__(self, cfg: SweepConfig, rf: int, p: float, seed: int,
                 table: Optional[np.ndarray] = None):
        self.cfg, self.rf, self.p, self.seed = cfg, rf, p, seed
        f = rf - 1
        self.width = 2 * f + 1
        tab = table if table is not None else placement_table(cfg.n, cfg.P, self.width)
        self.lark_tab = tab[:, :rf]
        self.maj_tab = tab[:, :self.width]
        n, P = cfg.n, cfg.P
        # per node: partitions where it is a roster replica (and its slot), and baseline member
        self.lark_parts, self.lark_slot, self.maj_parts = [], [], []
        for x in range(n):
            q, s = np.nonzero(self.lark_tab == x)
            self.lark_parts.append(q)
            self.lark_slot.append(s)
            self.maj_parts.append(np.nonzero((self.maj_tab == x).any(axis=1))[0])
        self.up = np.ones(n, dtype=bool)
        self.n_up = n
        self.lark_down = np.zeros(P, dtype=np.int64)
        self.maj_down = np.zeros(P, dtype=np.int64)
        full = (1 << rf) - 1
        self.upmask = np.full(P, full, dtype=np.int64)
        self.holders = np.full(P, full, dtype=np.int64)
        self.lark_un = np.zeros(P, dtype=bool)  # effective, majority rule included
        self.maj_un = np.zeros(P, dtype=bool)
        self.events_lark = 0
        self.events_maj = 0
        self.rng = np.random.default_rng([seed, rf, int(round(p * 1e12))])

    def majority(self) -> bool:
        return 2 * self.n_up > self.cfg.n

    def _geometric(self) -> int:
        return int(self.rng.geometric(self.p))

    def _evaluate(self, parts: np.ndarray) -> None:
        cfg = self.cfg
        maj = self.majority()
        if cfg.lark_rule == "roster":
            part = self.lark_down[parts] >= self.rf
        else:
            ok = maj & ((self.holders[parts] & self.upmask[parts]) != 0)
            # writes go on without the down replicas; returning ones are refreshed at once
            self.holders[parts] = np.where(ok, self.upmask[parts], self.holders[parts])
            part = ~ok
        new_l = part | (not maj)
        new_m = self.maj_down[parts] >= self.rf  # f+1 of 2f+1 down loses the majority
        self.events_lark += int(np.count_nonzero(new_l & ~self.lark_un[parts]))
        self.events_maj += int(np.count_nonzero(new_m & ~self.maj_un[parts]))
        self.lark_un[parts] = new_l
        self.maj_un[parts] = new_m

    def _flip(self, x: int, up: bool) -> None:
        d = -1 if up else 1
        self.up[x] = up
        self.n_up -= d
        lp = self.lark_parts[x]
        self.lark_down[lp] += d
        bits = np.left_shift(1, self.lark_slot[x])
        if up:
            self.upmask[lp] |= bits
        else:
            self.upmask[lp] &= ~bits
        self.maj_down[self.maj_parts[x]] += d

    def run(self) -> CellResult:
        cfg = self.cfg
        P, n = cfg.P, cfg.n
        if self.p == 0:
            return CellResult(self.rf, self.p, self.seed, cfg.t_min, 0.0, 0.0, math.nan,
                              0.0, 0.0, False)
        # a failure at tick t is counted down for t .. t+t_down-2 and back up at t+t_down-1
        down_ticks = cfg.t_down - 1
        heap = [(self._geometric(), x, False) for x in range(n)]
        heapq.heapify(heap)
        sum_l = sum_m = 0
        t = 1
        boundary = min(cfg.check_every, cfg.t_max)
        stopped = False
        all_parts = np.arange(P)
        while True:
            t_ev = heap[0][0] if heap else math.inf
            end = min(t_ev, boundary + 1)
            if end > t:
                gap = end - t
                sum_l += gap * int(np.count_nonzero(self.lark_un))
                sum_m += gap * int(np.count_nonzero(self.maj_un))
                t = end
            if t == boundary + 1:
                T = boundary
                u_l, u_m = sum_l / (P * T), sum_m / (P * T)
                if T >= cfg.t_min and self._converged(u_l, u_m, T):
                    stopped = T < cfg.t_max
                    break
                if T >= cfg.t_max:
                    break
                boundary = min(boundary + cfg.check_every, cfg.t_max)
                continue
            had_majority = self.majority()
            touched = []
            while heap and heap[0][0] == t_ev:
                _, x, up = heapq.heappop(heap)
                self._flip(x, up)
                touched.append(self.lark_parts[x])
                touched.append(self.maj_parts[x])
                nxt = t_ev + (self._geometric() if up else down_ticks)
                heapq.heappush(heap, (nxt, x, not up))
            if self.majority() != had_majority:
                self._evaluate(all_parts)
            else:
                self._evaluate(np.unique(np.concatenate(touched)))
        u_l, u_m = sum_l / (P * T), sum_m / (P * T)
        ratio = u_m / u_l if u_l > 0 else math.inf if u_m > 0 else math.nan
        return CellResult(self.rf, self.p, self.seed, T, u_l, u_m, ratio,
                          ci_half_width(u_l, P, T), ci_half_width(u_m, P, T), stopped,
                          self.events_lark, self.events_maj)

    def _converged(self, u_l: float, u_m: float, T: int) -> bool:
        cfg = self.cfg
        if min(self.events_lark, self.events_maj) < cfg.min_events:
            return False
        for u in (u_l, u_m):
            if ci_half_width(u, cfg.P, T) > max(cfg.eps_abs, cfg.eps_rel * u):
                return False
        return True


def run_cell(cfg: SweepConfig, rf: int, p: float, seed: int,
             table: Optional[np.ndarray] = None) -> CellResult:
    return _Cell(cfg, rf, p, seed, table).run()


def sweep(cfg: SweepConfig, progress=None) -> List[CellResult]:
    cfg.validate()
    out = []
    for rf in cfg.rfs:
        table = placement_table(cfg.n, cfg.P, 2 * rf - 1)
        for p in cfg.ps:
            for seed in cfg.seeds:
                r = run_cell(cfg, rf, p, seed, table)
                out.append(r)
                if progress is not None:
                    progress(r)
    return out


@dataclass
class Summary:
    rf: int
    p: float
    u_lark: float
    u_maj: float
    ratio: float
    sd_lark: float
    sd_maj: float
    seeds: int


def summarize(results: Iterable[CellResult]) -> List[Summary]:
    """Mean and standard deviation over seeds for each (rf, p)."""
    cells = {}
    for r in results:
        cells.setdefault((r.rf, r.p), []).append(r)
    out = []
    for (rf, p), rs in sorted(cells.items()):
        ul = np.array([r.u_lark for r in rs])
        um = np.array([r.u_maj for r in rs])
        ddof = 1 if len(rs) > 1 else 0
        mean_l, mean_m = float(ul.mean()), float(um.mean())
        ratio = mean_m / mean_l if mean_l > 0 else math.nan
        out.append(Summary(rf, p, mean_l, mean_m, ratio, float(ul.std(ddof=ddof)),
                           float(um.std(ddof=ddof)), len(rs)))
    return out


def write_csv(results: Sequence[CellResult], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS))
    w.writeheader()
    for r in results:
        w.writerow(r.row())


def analytic(f: int, p: float, r: float) -> Tuple[float, float, float, float]:
    """Leading-order model: per-node unavailability u from the failure rate and repair time.

    Returns (u, U_lark, U_maj, ratio) with U_lark = u^(f+1) and
    U_maj = C(2f+1, f+1) u^(f+1).
    """
    if f < 1:
        raise ValueError("f must be at least 1")
    if p < 0 or r < 0:
        raise ValueError("p and r must be non-negative")
    u = p * r / (1.0 + p * r)
    mult = math.comb(2 * f + 1, f + 1)
    lark = u ** (f + 1)
    return u, lark, mult * lark, float(mult)
