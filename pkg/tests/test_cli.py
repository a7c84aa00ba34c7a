import json
from pathlib import Path

import pytest

from larksim.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as e:
        code = e.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_scenario_ok(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    code, out, _ = run(["scenario", "run", str(SCENARIOS / "appendixA-1.json"),
                        "--trace", str(trace)], capsys)
    assert code == 0 and out.rstrip().endswith("ok")
    recs = [json.loads(l) for l in trace.read_text().splitlines()]
    assert any(r["type"] == "replica_write" and "LeaderInCluster" in r.get("reasons", ())
               for r in recs)
    # the written trace feeds straight into the checker
    assert run(["check-lin", str(trace)], capsys)[0] == 0


def test_disable_condition_needs_the_unsafe_flag(capsys):
    code, _, err = run(["scenario", "run", str(SCENARIOS / "appendixA-1.json"),
                        "--disable-condition", "LeaderInCluster"], capsys)
    assert code == 2 and "unsafe-test-mode" in err


def test_disabled_condition_reports_violation_with_witness(capsys, tmp_path):
    code, out, _ = run(["scenario", "run", str(SCENARIOS / "appendixA-1.json"),
                        "--disable-condition", "LeaderInCluster", "--unsafe-test-mode",
                        "--witness-dir", str(tmp_path)], capsys)
    assert code == 1 and "VIOLATION" in out
    assert list(tmp_path.glob("*.trace.jsonl")) and list(tmp_path.glob("*.violations.json"))


def test_scenario_bad_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"roster": [1], "rf": 3, "steps": []}')
    assert run(["scenario", "run", str(bad)], capsys)[0] == 2
    assert run(["scenario", "run", str(tmp_path / "nope.json")], capsys)[0] == 2


def test_pac_enum(capsys):
    code, out, _ = run(["pac-enum", "--roster-size", "4", "--rf", "2"], capsys)
    assert code == 0 and json.loads(out)["violations"] == []
    code, out, _ = run(["pac-enum", "--roster-size", "4", "--rf", "2",
                        "--mutation", "half-no-leader"], capsys)
    assert code == 1 and json.loads(out)["violations"]
    assert run(["pac-enum", "--roster-size", "3", "--rf", "4"], capsys)[0] == 2
    assert run(["pac-enum", "--roster-size", "3", "--rf", "2", "--mutation", "x"], capsys)[0] == 2


def test_usage_errors(capsys):
    assert run([], capsys)[0] == 2
    assert run(["pac-enum", "--rf", "2"], capsys)[0] == 2
    assert run(["frobnicate"], capsys)[0] == 2


def test_check_lin_violation_and_bad_input(capsys, tmp_path):
    hist = tmp_path / "h.jsonl"
    ev = [
        {"key": "k", "op": "write", "phase": "invoke", "id": 1, "t": 0, "value": 1},
        {"key": "k", "op": "write", "phase": "respond", "id": 1, "t": 1},
        {"key": "k", "op": "read", "phase": "invoke", "id": 2, "t": 2},
        {"key": "k", "op": "read", "phase": "respond", "id": 2, "t": 3, "value": 2},
    ]
    hist.write_text("\n".join(json.dumps(e) for e in ev))
    code, out, _ = run(["check-lin", str(hist)], capsys)
    verdict = json.loads(out)
    assert code == 1 and not verdict["linearizable"] and len(verdict["witness"]) == 2
    hist.write_text("not json\n")
    assert run(["check-lin", str(hist)], capsys)[0] == 2


def test_fuzz(capsys, tmp_path):
    code, out, _ = run(["fuzz", "--ops", "20", "--seeds", "0..4"], capsys)
    assert code == 0 and json.loads(out.splitlines()[-1])["runs"] == 5
    assert run(["fuzz", "--seeds", "0..1", "--mutation", "simple-no-full"], capsys)[0] == 2
    code, out, _ = run(["fuzz", "--seeds", "6", "--mutation", "simple-no-full",
                        "--unsafe-test-mode", "--witness-dir", str(tmp_path)], capsys)
    assert code == 1 and "witness" in out
    assert list(tmp_path.glob("fuzz-seed6.trace.jsonl"))
    assert run(["fuzz", "--faults", "meteor"], capsys)[0] == 2
    assert run(["fuzz", "--ops", "0"], capsys)[0] == 2


def test_avail_sweep(capsys, tmp_path):
    cfg = tmp_path / "a.json"
    cfg.write_text(json.dumps({"n": 9, "P": 16, "rfs": [2], "ps": [0.0], "seeds": [0]}))
    code, out, _ = run(["avail-sweep", "--config", str(cfg)], capsys)
    assert code == 0 and out.splitlines()[0].startswith("rf,p,seed")
    cfg.write_text(json.dumps({"n": -1}))
    assert run(["avail-sweep", "--config", str(cfg)], capsys)[0] == 2


def test_micro_sim(capsys, tmp_path):
    cfg = tmp_path / "m.json"
    cfg.write_text(json.dumps({"rs": 10000, "ps": 100000000, "bw": 5000000, "u": 0.5,
                               "lf": 0.5, "recover_at": 12.0, "duration": 60.0}))
    series = tmp_path / "s.csv"
    code, out, _ = run(["micro-sim", "--config", str(cfg), "--series", str(series)], capsys)
    assert code == 0 and len(out.splitlines()) == 2
    assert series.read_text().startswith("t,lark_ops")
    cfg.write_text(json.dumps({"rs": 0}))
    assert run(["micro-sim", "--config", str(cfg)], capsys)[0] == 2


def test_help_lists_flags(capsys):
    code, out, _ = run(["fuzz", "--help"], capsys)
    assert code == 0
    for flag in ("--ops", "--faults", "--seeds", "--unsafe-test-mode", "--witness-dir"):
        assert flag in out
