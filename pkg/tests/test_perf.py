import csv
import io
import json
import math
from dataclasses import replace

import pytest

from larksim import perf
from larksim.avail import ConfigError
from larksim.perf import GB, KB, MB, MicroConfig


def test_offered_rate_fills_the_target_share():
    c = MicroConfig(rs=1 * KB, bw=50 * MB, u=0.5, lf=0.5)
    # 0.8 reads of rs plus 0.2 writes of 2*lf*rs bytes each
    assert c.mean_request == pytest.approx(0.8 * 1000 + 0.2 * 1000)
    assert c.rate == pytest.approx(25_000)
    assert MicroConfig(rs=10 * KB, bw=5 * MB, u=0.8, lf=1.0).rate == pytest.approx(333.33, rel=1e-4)


@pytest.mark.parametrize("ps,bw,down", [
    (GB // 10, 50 * MB, 2.0),
    (GB // 10, 5 * MB, 20.0),
    (10 * GB, 50 * MB, 200.0),
    (10 * GB, 5 * MB, 300.0),
])
def test_baseline_downtime(ps, bw, down):
    assert perf.baseline_model(MicroConfig(ps=ps, bw=bw)) == pytest.approx(down)


def test_baseline_never_down_without_a_failure():
    assert perf.baseline_model(MicroConfig(fail=False)) == 0.0


def test_outage_keys_saturate_at_the_keyspace():
    small = MicroConfig(rs=1 * KB, ps=GB // 10, bw=50 * MB, u=0.8)
    assert perf.outage_keys(small) == pytest.approx(small.keys, rel=1e-6)
    big = MicroConfig(rs=10 * KB, ps=10 * GB, bw=5 * MB, u=0.5, lf=0.5)
    w = 0.2 * big.rate
    assert perf.outage_keys(big) == pytest.approx(w * 300, rel=0.01)


def test_backfill_fluid_model_examples():
    c = MicroConfig(rs=1 * KB, ps=GB // 10, bw=5 * MB, u=0.5, lf=0.5)
    assert perf.backfill_model(c) == pytest.approx(66, rel=0.1)
    assert perf.backfill_model(c, delta_keys=0) == 0.0


def test_backfill_fluid_model_matches_numeric_integration():
    c = MicroConfig(rs=1 * KB, ps=GB, bw=50 * MB, u=0.8, lf=1.0)
    k, w = c.keys, 0.2 * c.rate
    r_b = 0.2 * c.bw / c.rs
    d, t, dt = perf.outage_keys(c), 0.0, 1e-3
    while d > 0:
        d -= (r_b + w * d / k) * dt
        t += dt
    assert perf.backfill_model(c) == pytest.approx(t, rel=1e-3)


def test_without_writes_backfill_is_plain_transfer():
    c = MicroConfig(read_frac=1.0)
    assert perf.backfill_model(c, delta_keys=1000) == pytest.approx(1000 / (0.2 * c.bw / c.rs))


def test_no_failure_variant_is_symmetric():
    c = MicroConfig(rs=1 * KB, ps=GB, bw=50 * MB, u=0.8, fail=False, duration=10)
    r = perf.micro_run(c)
    assert r.lark == r.base
    assert r.backfill_s == 0.0 and r.base_down_s == 0.0 and r.window == 10
    assert r.lark.throughput == pytest.approx(c.rate, rel=0.01)


def test_latency_never_beats_one_tick_or_transfer_time():
    c = MicroConfig(rs=10 * KB, ps=GB, bw=5 * MB, u=0.5, lf=0.5, fail=False, duration=20)
    r = perf.micro_run(c)
    # a 10 KB read alone on a 5 KB/ms link needs two ticks
    assert r.lark.avg_ms >= 2.0
    assert r.lark.p99_ms >= 2


@pytest.mark.parametrize("row", [1, 4, 7, 10])
def test_short_outage_backfill_tracks_fluid_model(row):
    c = replace(perf.grid(2)[row], recover_at=12.0, duration=200.0)
    r = perf.micro_run(c)
    assert r.backfill_s == pytest.approx(perf.backfill_model(c, r.outage_keys), rel=0.1)
    assert r.outage_keys == pytest.approx(perf.outage_keys(c), rel=0.05)


def test_published_rows_two_and_five():
    g = perf.grid(2)
    r = perf.micro_run(g[1])
    assert r.lark.throughput == pytest.approx(25_000, rel=0.1)
    assert r.base.throughput == pytest.approx(24_839, rel=0.1)
    assert r.ratio == pytest.approx(1.01, rel=0.1)
    assert r.backfill_s == pytest.approx(8, rel=0.1)
    assert r.base_down_s == pytest.approx(2, rel=0.1)
    r = perf.micro_run(g[4])
    assert r.ratio == pytest.approx(2.99, rel=0.1)
    assert r.backfill_s == pytest.approx(149, rel=0.1)
    assert r.base_down_s == pytest.approx(300, rel=0.1)


def test_same_seed_same_result():
    c = replace(perf.grid(1)[9], recover_at=12.0, duration=100.0)
    a, b = perf.micro_run(c), perf.micro_run(c)
    assert a.row() == b.row()


def test_grid_layout():
    g = perf.grid(1)
    assert len(g) == 12 and len(perf.grid(2)) == 12
    assert (g[0].rs, g[0].ps, g[0].bw) == (KB, GB // 10, 5 * MB)
    assert (g[11].rs, g[11].ps, g[11].bw) == (10 * KB, 10 * GB, 50 * MB)
    assert {(c.u, c.lf) for c in perf.grid(2)} == {(0.5, 0.5)}


@pytest.mark.parametrize("bad", [
    {"rs": 0}, {"u": -1}, {"read_frac": 1.5}, {"backfill_share": 1.0},
    {"fail_at": 5, "recover_at": 4}, {"recover_at": 400}, {"colour": "red"},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        MicroConfig.from_dict(bad)


def test_load_configs(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"grid": [2], "base": {"seed": 3}}))
    cfgs = perf.load_configs(str(p))
    assert len(cfgs) == 12 and all(c.seed == 3 and c.u == 0.5 for c in cfgs)
    p.write_text(json.dumps([{"rs": 10000}, {"u": 0.5}]))
    assert [c.rs for c in perf.load_configs(str(p))] == [10000, 1000]
    for bad in ({"grid": [3]}, {"grid": [1], "extra": 1}, [], 7, [{"rs": -1}]):
        p.write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            perf.load_configs(str(p))
    with pytest.raises(ConfigError):
        perf.load_configs(str(tmp_path / "missing.json"))


def test_csv_outputs():
    c = MicroConfig(rs=10 * KB, ps=GB // 10, bw=5 * MB, u=0.5, lf=0.5,
                    recover_at=12.0, duration=60.0)
    r = perf.micro_run(c, series=True)
    buf = io.StringIO()
    perf.write_csv([r], buf)
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert tuple(rows[0]) == perf.CSV_COLUMNS
    buf = io.StringIO()
    perf.write_series_csv(r, buf)
    series = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert len(series) == math.ceil(r.window)
    states = [s["state"] for s in series]
    assert states[0] == "normal" and "backfill" in states
    assert any(s.startswith("outage") for s in states)
    with pytest.raises(ValueError):
        perf.write_series_csv(perf.micro_run(replace(c, fail=False)), io.StringIO())
