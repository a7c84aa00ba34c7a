"""Command-line entry point. Exit codes: 0 clean, 1 violations found, 2 usage or config error."""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional, Sequence

from . import avail, perf
from .lincheck import HistoryError, check_events, load_events, op_to_json
from .model import Roster
from .pac import MUTATIONS, lemma_oracles
from .sim.fuzz import fuzz, parse_faults, parse_seeds
from .sim.scenario import Scenario, ScenarioError, run_scenario

OK, VIOLATION, USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE)


def _dump_witness(out_dir: str, stem: str, sim, violations: List[dict]) -> str:
    os.makedirs(out_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, f"{stem}.trace.jsonl")
    with open(trace_path, "w") as fh:
        for line in sim.trace_lines():
            fh.write(line + "\n")
    with open(os.path.join(out_dir, f"{stem}.violations.json"), "w") as fh:
        json.dump(violations, fh, indent=1, default=str)
    return trace_path


def cmd_scenario(args) -> int:
    if args.disable_condition and not args.unsafe_test_mode:
        print("--disable-condition needs --unsafe-test-mode", file=sys.stderr)
        return USAGE
    try:
        sc = Scenario.load(args.file)
        res = run_scenario(sc, seed=args.seed, disabled=args.disable_condition or ())
    except (ScenarioError, OSError, ValueError) as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return USAGE
    for e in res.expectations:
        print(("met    " if e["met"] else "UNMET  ") + json.dumps(e["expect"]))
    print(f"trace_hash {res.trace_hash()}")
    if args.trace:
        with open(args.trace, "w") as fh:
            for line in res.sim.trace_lines():
                fh.write(line + "\n")
    if res.ok:
        print("ok")
        return OK
    for v in res.violations:
        print("VIOLATION " + json.dumps(v, default=str))
    if res.violations:
        stem = f"{sc.name}-seed{res.sim.seed}"
        print(f"witness {_dump_witness(args.witness_dir, stem, res.sim, res.violations)}")
    return VIOLATION


def cmd_pac_enum(args) -> int:
    if not 1 <= args.rf <= args.roster_size:
        print("need 1 <= rf <= roster-size", file=sys.stderr)
        return USAGE
    bad = set(args.mutation or ()) - set(MUTATIONS)
    if bad:
        print(f"unknown mutations {sorted(bad)}; choose from {list(MUTATIONS)}", file=sys.stderr)
        return USAGE
    roster = Roster(tuple(range(1, args.roster_size + 1)), args.rf)
    try:
        rep = lemma_oracles(roster, args.partition, mutations=args.mutation or ())
    except ValueError as e:
        print(str(e), file=sys.stderr)
        return USAGE
    print(json.dumps(rep.as_dict(), indent=1))
    return VIOLATION if rep.violations else OK


def cmd_avail(args) -> int:
    try:
        if args.config:
            cfg = avail.SweepConfig.load(args.config)
        elif args.full_scale:
            cfg = avail.SweepConfig()
        else:
            cfg = avail.desk_config()
    except avail.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return USAGE
    progress = None
    if args.verbose:
        def progress(r):
            print(f"rf={r.rf} p={r.p:g} seed={r.seed} ticks={r.ticks} ratio={r.ratio:.3g}",
                  file=sys.stderr)
    results = avail.sweep(cfg, progress)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        avail.write_csv(results, out)
    finally:
        if args.out:
            out.close()
    return OK


def cmd_micro(args) -> int:
    try:
        cfgs = perf.load_configs(args.config) if args.config else perf.grid(1) + perf.grid(2)
    except avail.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return USAGE
    if args.series and len(cfgs) != 1:
        print("--series needs a config with exactly one run", file=sys.stderr)
        return USAGE
    if args.series:
        results = [perf.micro_run(cfgs[0], series=True)]
        with open(args.series, "w", newline="") as fh:
            perf.write_series_csv(results[0], fh)
    else:
        results = perf.run_grid(cfgs, workers=args.workers)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        perf.write_csv(results, out)
    finally:
        if args.out:
            out.close()
    return OK


def cmd_check_lin(args) -> int:
    try:
        events = load_events(args.trace)
        verdicts = check_events(events)
    except (OSError, ValueError, KeyError, HistoryError) as e:
        print(f"bad history: {e}", file=sys.stderr)
        return USAGE
    bad = 0
    for key, v in verdicts.items():
        rec = {"key": key, "linearizable": v.linearizable}
        if not v.linearizable:
            bad += 1
            rec["witness"] = [op_to_json(o) for o in v.witness]
        print(json.dumps(rec))
    return VIOLATION if bad else OK


def cmd_fuzz(args) -> int:
    if (args.disable_condition or args.mutation) and not args.unsafe_test_mode:
        print("--disable-condition/--mutation need --unsafe-test-mode", file=sys.stderr)
        return USAGE
    try:
        faults = parse_faults(args.faults)
        seeds = parse_seeds(args.seeds)
    except ValueError as e:
        print(str(e), file=sys.stderr)
        return USAGE
    if not 1 <= args.ops <= 10_000:
        print("--ops must be in 1..10000", file=sys.stderr)
        return USAGE

    def progress(run):
        if run.violations:
            from .sim.fuzz import fuzz_one
            again = fuzz_one(run.seed, args.ops, faults, args.disable_condition or (),
                             args.mutation or (), keep_trace=True)
            path = _dump_witness(args.witness_dir, f"fuzz-seed{run.seed}", again.sim,
                                 again.violations)
            kinds = sorted({v.get("check", v.get("kind", "?")) for v in run.violations})
            print(f"seed {run.seed}: {len(run.violations)} violations {kinds} witness {path}")

    rep = fuzz(seeds, args.ops, faults, args.disable_condition or (), args.mutation or (),
               progress=progress)
    print(json.dumps({"runs": rep.runs, "ops": rep.ops, "failing_seeds": len(rep.failures),
                      "seconds": round(rep.seconds, 1)}))
    return OK if rep.ok else VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="larksim", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("scenario", help="scripted scenarios")
    ss = s.add_subparsers(dest="scmd", required=True, parser_class=_Parser)
    r = ss.add_parser("run", help="run one scenario file, audit and lin-check its trace")
    r.add_argument("file")
    r.add_argument("--seed", type=int, default=None, help="override the scenario's seed")
    r.add_argument("--disable-condition", action="append", metavar="NAME",
                   help="turn off one replica-write condition (needs --unsafe-test-mode)")
    r.add_argument("--unsafe-test-mode", action="store_true",
                   help="allow protocol-weakening flags; for negative tests only")
    r.add_argument("--trace", metavar="PATH", help="write the full trace as JSON lines")
    r.add_argument("--witness-dir", default="witness", help="where violation traces go")
    r.set_defaults(func=cmd_scenario)

    e = sub.add_parser("pac-enum", help="exhaustive PAC lemma check for one roster shape")
    e.add_argument("--roster-size", type=int, required=True)
    e.add_argument("--rf", type=int, required=True)
    e.add_argument("--partition", type=int, default=0)
    e.add_argument("--mutation", action="append", metavar="NAME",
                   help=f"weaken a rule: {', '.join(MUTATIONS)}")
    e.set_defaults(func=cmd_pac_enum)

    a = sub.add_parser("avail-sweep", help="availability sweep, CSV on stdout")
    a.add_argument("--config", help="JSON sweep config (overrides the scale flag)")
    a.add_argument("--full-scale", action="store_true", help="n=155, P=4096 instead of desk scale")
    a.add_argument("--out", help="CSV path instead of stdout")
    a.add_argument("-v", "--verbose", action="store_true", help="per-cell progress on stderr")
    a.set_defaults(func=cmd_avail)

    m = sub.add_parser("micro-sim", help="single-partition failure/recovery runs, CSV on stdout")
    m.add_argument("--config", help="JSON config; default is both published grids")
    m.add_argument("--out", help="CSV path instead of stdout")
    m.add_argument("--series", metavar="PATH", help="per-second time series for a single run")
    m.add_argument("--workers", type=int, default=1, help="parallel processes for a grid")
    m.set_defaults(func=cmd_micro)

    c = sub.add_parser("check-lin", help="check a JSON-lines history for linearizability")
    c.add_argument("trace")
    c.set_defaults(func=cmd_check_lin)

    f = sub.add_parser("fuzz", help="random fault scenarios, each audited and lin-checked")
    f.add_argument("--ops", type=int, default=50, help="client ops per scenario")
    f.add_argument("--faults", default="all", help="all, none, or a comma list of crash,split,link,hold,jitter")
    f.add_argument("--seeds", default="0..99", help="inclusive range a..b")
    f.add_argument("--disable-condition", action="append", metavar="NAME")
    f.add_argument("--mutation", action="append", metavar="NAME")
    f.add_argument("--unsafe-test-mode", action="store_true")
    f.add_argument("--witness-dir", default="witness")
    f.set_defaults(func=cmd_fuzz)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
