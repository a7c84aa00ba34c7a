"""Single-partition failure/recovery micro-simulation.

Two systems keep the same two copies of a partition. One copy's node fails and
returns 300 s later.

* LARK keeps serving from the surviving copy. When the node returns it copies
  back only the keys written while it was away, on 20% of the bandwidth.
* The quorum-log baseline stops committing and rebuilds a full copy at full
  bandwidth. It resumes when the rebuild finishes or the node comes back.

Operations run through a 1 ms tick queue. Every in-flight op gets an equal
share of the tick's byte budget, and an op takes at least one tick.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from numba import njit

from .avail import ConfigError

MB = 1_000_000
GB = 1_000_000_000
KB = 1000


@dataclass(frozen=True)
class MicroConfig:
    """All sizes in bytes, rates in bytes per second, times in seconds."""
    rs: int = 1 * KB
    ps: int = 1 * GB // 10
    bw: float = 5 * MB
    u: float = 0.8
    lf: float = 1.0
    read_frac: float = 0.8
    fail_at: float = 2.0
    recover_at: float = 302.0
    migration_delay: float = 300.0
    duration: float = 1000.0
    backfill_share: float = 0.2
    tick: float = 0.001
    fail: bool = True
    seed: int = 0

    def validate(self) -> "MicroConfig":
        for name in ("rs", "ps", "bw", "u", "lf", "duration", "tick"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.read_frac <= 1:
            raise ConfigError("read_frac must be in [0, 1]")
        if not 0 < self.backfill_share < 1:
            raise ConfigError("backfill_share must be in (0, 1)")
        if not self.fail:
            return self
        if not 0 <= self.fail_at < self.recover_at <= self.duration:
            raise ConfigError("need 0 <= fail_at < recover_at <= duration")
        if self.recover_at - self.fail_at > self.migration_delay:
            # past the delay LARK would migrate to a spare, which is not modelled
            raise ConfigError("outage longer than migration_delay is not modelled")
        return self

    @property
    def write_bytes(self) -> float:
        # the client ships the delta to the leader, the leader ships it to the replica
        return 2 * self.lf * self.rs

    @property
    def mean_request(self) -> float:
        return self.read_frac * self.rs + (1 - self.read_frac) * self.write_bytes

    @property
    def rate(self) -> float:
        """Offered ops/s that loads the partition to ``u`` of its bandwidth."""
        return self.u * self.bw / self.mean_request

    @property
    def keys(self) -> int:
        return max(1, int(round(self.ps / self.rs)))

    @classmethod
    def from_dict(cls, d: dict) -> "MicroConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown micro-sim fields {sorted(bad)}")
        try:
            return cls(**d).validate()
        except TypeError as e:
            raise ConfigError(str(e)) from None


@dataclass
class SystemStats:
    throughput: float
    completed: int
    avg_ms: float
    p99_ms: int
    max_ms: int


@dataclass
class MicroResult:
    cfg: MicroConfig
    window: float
    lark: SystemStats
    base: SystemStats
    backfill_s: float
    base_down_s: float
    outage_keys: int
    series: Optional[Dict[str, np.ndarray]] = field(default=None, repr=False)

    @property
    def ratio(self) -> float:
        return self.lark.throughput / self.base.throughput if self.base.throughput else math.inf

    def row(self) -> dict:
        c = self.cfg
        return {
            "rs_kb": c.rs / KB, "ps_gb": c.ps / GB, "bw_mbs": c.bw / MB, "u": c.u, "lf": c.lf,
            "lark_ops": round(self.lark.throughput, 1), "base_ops": round(self.base.throughput, 1),
            "ratio": round(self.ratio, 3),
            "lark_avg_ms": round(self.lark.avg_ms, 3), "base_avg_ms": round(self.base.avg_ms, 3),
            "lark_p99_ms": self.lark.p99_ms, "base_p99_ms": self.base.p99_ms,
            "backfill_s": round(self.backfill_s, 2), "base_down_s": round(self.base_down_s, 2),
        }


CSV_COLUMNS = ("rs_kb", "ps_gb", "bw_mbs", "u", "lf", "lark_ops", "base_ops", "ratio",
               "lark_avg_ms", "base_avg_ms", "lark_p99_ms", "base_p99_ms",
               "backfill_s", "base_down_s")


# ---- closed forms -----------------------------------------------------------

def baseline_model(cfg: MicroConfig) -> float:
    """Seconds the baseline refuses commits: rebuild time, cut short by the node's return."""
    if not cfg.fail:
        return 0.0
    return min(cfg.ps / cfg.bw, cfg.recover_at - cfg.fail_at)


def outage_keys(cfg: MicroConfig) -> float:
    """Expected distinct keys written while the node is away."""
    w = (1 - cfg.read_frac) * cfg.rate
    k = cfg.keys
    return k * -math.expm1(-w * (cfg.recover_at - cfg.fail_at) / k)


def backfill_model(cfg: MicroConfig, delta_keys: Optional[float] = None) -> float:
    """Fluid estimate of backfill seconds.

    The delta shrinks at the backfill rate and also whenever a fresh write lands
    on a key still in it, since that write reaches both copies:
    dD/dt = -r_b - w*D/K.
    """
    d0 = outage_keys(cfg) if delta_keys is None else delta_keys
    if d0 <= 0:
        return 0.0
    k = cfg.keys
    w = (1 - cfg.read_frac) * cfg.rate
    r_b = cfg.backfill_share * cfg.bw / cfg.rs
    if w == 0:
        return d0 / r_b
    return (k / w) * math.log1p(d0 * w / (k * r_b))


# ---- tick kernel ------------------------------------------------------------

_HIST = 1 << 16


@njit(cache=True)
def _kernel(seed, stop_tick, rate_per_tick, read_b, write_b, write_p, budget,
            fail_tick, recover_tick, mode, down_ticks, n_keys, rs, bf_share, horizon):
    # mode 0: LARK, runs until the backfill drains (or horizon); mode 1: baseline until stop_tick
    np.random.seed(seed)
    cap = 1 << 12
    rem = np.empty(cap)
    start = np.empty(cap, np.int64)
    n = 0
    hist = np.zeros(_HIST, np.int64)
    n_sec = horizon // 1000 + 2
    sec_ops = np.zeros(n_sec, np.int64)
    sec_lat = np.zeros(n_sec, np.int64)
    dirty = np.zeros(n_keys if mode == 0 else 1, np.bool_)
    n_dirty = 0
    cursor = 0
    bf_credit = 0.0
    bf_done_tick = -1
    outage = 0
    gap = 1.0 / rate_per_tick
    t_next = gap
    end = stop_tick if mode == 1 else horizon
    t = 0
    while t < end:
        down = mode == 1 and fail_tick <= t < fail_tick + down_ticks
        backfilling = mode == 0 and t >= recover_tick and bf_done_tick < 0
        while t_next < t + 1:
            t_next += gap
            is_write = np.random.random() < write_p
            if mode == 0 and is_write and t >= fail_tick and bf_done_tick < 0:
                key = np.random.randint(n_keys)
                if t < recover_tick:
                    if not dirty[key]:
                        dirty[key] = True
                        n_dirty += 1
                        outage += 1
                elif dirty[key]:
                    # the new version goes to both copies
                    dirty[key] = False
                    n_dirty -= 1
            if down:
                continue
            if n == cap:
                cap *= 2
                r2 = np.empty(cap)
                s2 = np.empty(cap, np.int64)
                r2[:n] = rem[:n]
                s2[:n] = start[:n]
                rem = r2
                start = s2
            rem[n] = write_b if is_write else read_b
            start[n] = t
            n += 1
        fg = budget
        if backfilling:
            fg = budget * (1.0 - bf_share)
            bf_credit += budget * bf_share
            while n_dirty > 0 and bf_credit >= rs:
                while not dirty[cursor]:
                    cursor += 1
                dirty[cursor] = False
                n_dirty -= 1
                bf_credit -= rs
            if n_dirty == 0:
                bf_done_tick = t + 1
        if n > 0:
            share = fg / n
            m = 0
            for j in range(n):
                r = rem[j] - share
                if r <= 1e-9:
                    lat = t - start[j] + 1
                    hist[min(lat, _HIST - 1)] += 1
                    s = t // 1000
                    sec_ops[s] += 1
                    sec_lat[s] += lat
                else:
                    rem[m] = r
                    start[m] = start[j]
                    m += 1
            n = m
        t += 1
        if mode == 0 and bf_done_tick >= 0:
            break
    if mode == 0 and bf_done_tick < 0 and fail_tick < horizon:
        bf_done_tick = t if recover_tick < t else -1
    return hist, sec_ops, sec_lat, bf_done_tick, outage, t


def _stats(hist: np.ndarray, window: float) -> SystemStats:
    total = int(hist.sum())
    if total == 0:
        return SystemStats(0.0, 0, 0.0, 0, 0)
    lat = np.arange(len(hist))
    cum = np.cumsum(hist)
    p99 = int(np.searchsorted(cum, 0.99 * total))
    return SystemStats(total / window, total, float((lat * hist).sum() / total), p99,
                       int(np.flatnonzero(hist)[-1]))


def micro_run(cfg: MicroConfig, series: bool = False) -> MicroResult:
    """Run both systems over the same window and collect the table metrics."""
    cfg.validate()
    ticks_per_s = 1.0 / cfg.tick
    horizon = int(round(cfg.duration * ticks_per_s))
    fail_tick = int(round(cfg.fail_at * ticks_per_s)) if cfg.fail else horizon + 1
    recover_tick = int(round(cfg.recover_at * ticks_per_s)) if cfg.fail else horizon + 1
    budget = cfg.bw * cfg.tick
    rate = cfg.rate * cfg.tick
    common = (rate, float(cfg.rs), cfg.write_bytes, 1 - cfg.read_frac, budget, fail_tick, recover_tick)

    hl, so_l, sl_l, bf_tick, outage, end_l = _kernel(
        cfg.seed, 0, *common, 0, 0, cfg.keys, float(cfg.rs), cfg.backfill_share, horizon)
    if cfg.fail and bf_tick > 0:
        window_ticks = bf_tick
        backfill_s = (bf_tick - recover_tick) * cfg.tick
    else:
        window_ticks = horizon
        backfill_s = 0.0
    down_s = baseline_model(cfg)
    down_ticks = int(round(down_s * ticks_per_s))
    hb, so_b, sl_b, _, _, _ = _kernel(
        cfg.seed, window_ticks, *common, 1, down_ticks, 1, float(cfg.rs), cfg.backfill_share, horizon)
    window = window_ticks * cfg.tick
    out = None
    if series:
        secs = int(math.ceil(window))
        out = {"t": np.arange(secs), "lark_ops": so_l[:secs], "base_ops": so_b[:secs],
               "lark_avg_ms": np.divide(sl_l[:secs], np.maximum(so_l[:secs], 1)),
               "base_avg_ms": np.divide(sl_b[:secs], np.maximum(so_b[:secs], 1))}
    return MicroResult(cfg, window, _stats(hl, window), _stats(hb, window),
                       backfill_s, down_s, int(outage), out)


# ---- the published grid -----------------------------------------------------

# (rs, ps, bw) in table order; table labels print 1e8/1e9/1e10 B as 0.1/0.9/9.3 GB
# and 50e6 B/s as 48 MB/s
GRID_ROWS = [(rs, ps, bw) for rs in (1 * KB, 10 * KB)
             for ps in (GB // 10, GB, 10 * GB) for bw in (5 * MB, 50 * MB)]
CONFIGS = {1: dict(u=0.8, lf=1.0), 2: dict(u=0.5, lf=0.5)}


def grid(config: int, base: Optional[MicroConfig] = None) -> List[MicroConfig]:
    base = base or MicroConfig()
    return [replace(base, rs=rs, ps=ps, bw=bw, **CONFIGS[config]) for rs, ps, bw in GRID_ROWS]


def run_grid(cfgs: Sequence[MicroConfig], workers: int = 1) -> List[MicroResult]:
    if workers <= 1:
        return [micro_run(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(micro_run, cfgs))


def load_configs(path: str) -> List[MicroConfig]:
    """A JSON file holding one config object, a list of them, or
    ``{"grid": [1, 2], "base": {...}}`` for the published table grid."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    if isinstance(raw, dict) and "grid" in raw:
        extra = set(raw) - {"grid", "base"}
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)}")
        base = MicroConfig.from_dict(raw.get("base", {}))
        which = raw["grid"]
        which = [which] if isinstance(which, int) else which
        if not which or any(w not in CONFIGS for w in which):
            raise ConfigError(f"grid must name configs from {sorted(CONFIGS)}")
        return [c for w in which for c in grid(w, base)]
    if isinstance(raw, dict):
        return [MicroConfig.from_dict(raw)]
    if isinstance(raw, list) and raw and all(isinstance(x, dict) for x in raw):
        return [MicroConfig.from_dict(x) for x in raw]
    raise ConfigError("micro-sim config must be an object, a list of objects, or a grid spec")


def write_csv(results: Iterable[MicroResult], fh) -> None:
    import csv
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
    w.writeheader()
    for r in results:
        w.writerow(r.row())


def write_series_csv(result: MicroResult, fh) -> None:
    import csv
    s = result.series
    if s is None:
        raise ValueError("run with series=True first")
    cfg = result.cfg
    w = csv.writer(fh)
    w.writerow(["t", "lark_ops", "lark_avg_ms", "base_ops", "base_avg_ms", "state"])
    down_end = cfg.fail_at + result.base_down_s
    bf_end = cfg.recover_at + result.backfill_s
    for i, t in enumerate(s["t"]):
        if not cfg.fail or t < cfg.fail_at:
            state = "normal"
        elif t < cfg.recover_at:
            state = "outage" + ("+hydrating" if t < down_end else "")
        elif t < bf_end:
            state = "backfill"
        else:
            state = "normal"
        w.writerow([int(t), int(s["lark_ops"][i]), round(float(s["lark_avg_ms"][i]), 3),
                    int(s["base_ops"][i]), round(float(s["base_avg_ms"][i]), 3), state])


__all__ = ["MicroConfig", "MicroResult", "SystemStats", "micro_run", "baseline_model",
           "backfill_model", "outage_keys", "grid", "run_grid", "load_configs", "write_csv",
           "write_series_csv", "GRID_ROWS", "CONFIGS", "CSV_COLUMNS"]
