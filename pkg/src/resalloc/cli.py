"""Command-line front end.

Exit codes: 0 success, 1 a violation was found (details on stderr),
2 usage or configuration error, 3 exploration stopped at its bound before
covering every reachable state.
"""
from __future__ import annotations

import argparse
import json
import sys

from .invariants import check_all
from .liveness import check_unless, monitor_starvation, silent_set, theorem2_failures
from .network import OverwriteInTransit
from .protocol import initial_state
from .scenario import load_scenario
from .simulator import (
    BoundExceeded,
    ConfigError,
    InvariantViolation,
    ScenarioConfig,
    Simulator,
    check_message_counts,
    explore,
    message_stats,
)
from .trace import Trace, TraceFormatError, load, replay

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_INCOMPLETE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(args, summary: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(summary, sort_keys=True, indent=2))
    else:
        for line in lines:
            print(line)


def _fail(msg: str) -> None:
    print(msg, file=sys.stderr)


def _config_of(trace: Trace) -> ScenarioConfig:
    try:
        return ScenarioConfig.from_dict(trace.header["scenario"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceFormatError(f"trace header has no usable scenario: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.max_steps = args.steps
    cfg.validate()
    sim = Simulator(cfg)
    code, problem = EXIT_OK, None
    try:
        sim.run()
    except InvariantViolation as exc:
        code, problem = EXIT_VIOLATION, str(exc.violation)
    except OverwriteInTransit as exc:
        code, problem = EXIT_VIOLATION, str(exc)
    out = args.output or f"{cfg.name}-{cfg.seed}.trace.jsonl"
    sim.trace.save(out)
    stats = sim.stats.to_dict()
    summary = {"trace": out, "status": sim.trace.status, "stats": stats}
    if problem:
        summary["violation"] = problem
        _fail(f"violation: {problem}")
    _emit(args, summary, [
        f"trace written to {out}",
        f"status {sim.trace.status} after {stats['steps']} steps",
        f"CS entries per process: {stats['cs_entries']}",
        f"max void occupancy {stats['max_void_occupancy']}, max step age {stats['max_age']} (F={cfg.F})",
    ])
    return code


def cmd_explore(args) -> int:
    cfg = load_scenario(args.scenario)
    try:
        rep = explore(cfg, max_states=args.states, max_depth=args.depth,
                      stop_on_violation=args.stop)
    except BoundExceeded as exc:
        rep = exc.report
    summary = rep.to_dict()
    lines = [
        f"{rep.states} states, {rep.transitions} transitions, depth {rep.depth}",
        f"coverage {'complete' if rep.complete else 'INCOMPLETE'}",
        f"terminal states {rep.terminal_states}, with a locked process {rep.locked_terminal}",
    ]
    lines += [f"{k}: {v}" for k, v in sorted(rep.counts.items())]
    _emit(args, summary, lines)
    for f in rep.findings:
        _fail(f"{f.kind} {json.dumps(f.detail, sort_keys=True)} via {' '.join(map(str, f.path))}")
    if rep.findings:
        return EXIT_VIOLATION
    return EXIT_OK if rep.complete else EXIT_INCOMPLETE


def _invariant_check(every: int):
    def check(state, i):
        if every and (i + 1) % every == 0:
            bad = check_all(state, i)
            if bad:
                return f"invariant {bad[0]}"
        return None
    return check


def cmd_check_trace(args) -> int:
    trace = load(args.trace)
    cfg = _config_of(trace)
    un = check_unless(trace, cfg.process_count)
    if not un:
        _fail(f"unless check failed at step {un.index}: {un.detail}")
        return EXIT_VIOLATION
    res = replay(trace, initial_state(cfg.model(), cfg.process_count), cfg.variant,
                 _invariant_check(args.check_every))
    if not res.ok:
        _fail(f"replay failed at step {res.index}: {res.error}")
        return EXIT_VIOLATION
    _emit(args, {"ok": True, "steps": res.steps, "status": trace.status},
          [f"ok: {res.steps} steps replayed, control graph respected, invariants hold"])
    return EXIT_VIOLATION if trace.status == "violation" else EXIT_OK


def cmd_stats(args) -> int:
    trace = load(args.trace)
    passages = message_stats(trace)
    bad = check_message_counts(passages)
    per_nb = {3: 0, 4: 0}
    for pa in passages:
        for q, total in pa.totals().items():
            per_nb[total] = per_nb.get(total, 0) + 1
    summary = {"passages": len(passages), "neighbour_exchanges": {str(k): v for k, v in sorted(per_nb.items())},
               "mismatches": [pa.to_dict() for pa in bad]}
    _emit(args, summary, [
        f"{len(passages)} completed CS passages",
        f"neighbour exchanges with 3 messages: {per_nb.get(3, 0)}, with 4: {per_nb.get(4, 0)}",
        f"passages with other counts: {len(bad)}",
    ])
    for pa in bad:
        _fail(f"unexpected message counts {json.dumps(pa.to_dict(), sort_keys=True)}")
    return EXIT_VIOLATION if bad else EXIT_OK


def _state_at(trace: Trace, index: int | None):
    cfg = _config_of(trace)
    sub = Trace(trace.header, trace.records if index is None else trace.records[:index])
    res = replay(sub, initial_state(cfg.model(), cfg.process_count), cfg.variant)
    if not res.ok:
        raise TraceFormatError(f"trace does not replay: {res.error}")
    return cfg, res.final


def cmd_theorem2(args) -> int:
    trace = load(args.trace)
    cfg, state = _state_at(trace, args.index)
    sil = silent_set(state, cfg.variant)
    fails = theorem2_failures(state, cfg.variant, sil)
    summary = {"silent": sorted(sil), "locked": sorted(q for q in sil if state.procs[q].pc != 21),
               "failures": [f.to_dict() for f in fails]}
    _emit(args, summary, [
        f"silent processes {summary['silent']}, locked {summary['locked']}",
        "locked-set claim holds for every W" if not fails else f"{len(fails)} sets W fail",
    ])
    for f in fails:
        _fail(f"silent set {sorted(f.W)} with locked {f.locked} has no conflict leaving it")
    return EXIT_VIOLATION if fails else EXIT_OK


def cmd_starve(args) -> int:
    trace = load(args.trace)
    rep = monitor_starvation(trace, args.budget)
    lines = [f"longest stretch off line 21 per process: {rep.off_rounds}"]
    lines += [f"p{f.process} off line 21 for {f.length} rounds from {f.start}, "
              f"witness {'p%d' % f.witness if f.witness is not None else 'none'}" for f in rep.flags]
    _emit(args, rep.to_dict(), lines)
    for f in rep.unexcused:
        _fail(f"p{f.process} starved for {f.length} rounds with no conflict witness")
    return EXIT_VIOLATION if rep.unexcused else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="resalloc", description="Simulate and check the resource allocation protocol.")
    ap.add_argument("--json", action="store_true", help="structured output")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a seeded simulation and write its trace")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("explore", help="exhaustive reachability with all checks")
    p.add_argument("scenario")
    p.add_argument("--depth", type=int)
    p.add_argument("--states", type=int, default=1_000_000)
    p.add_argument("--stop", action="store_true", help="stop at the first finding")
    p.set_defaults(fn=cmd_explore)

    p = sub.add_parser("check-trace", help="replay a trace and re-check it")
    p.add_argument("trace")
    p.add_argument("--check-every", type=int, default=1, help="invariant check period (0 = off)")
    p.set_defaults(fn=cmd_check_trace)

    p = sub.add_parser("stats", help="per-passage message counts")
    p.add_argument("trace")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("theorem2", help="locked-set analysis of one trace state")
    p.add_argument("trace")
    p.add_argument("--index", type=int, help="number of steps to replay (default: all)")
    p.set_defaults(fn=cmd_theorem2)

    p = sub.add_parser("starve", help="starvation monitor over a trace")
    p.add_argument("trace")
    p.add_argument("--budget", type=int, required=True)
    p.set_defaults(fn=cmd_starve)
    for sp in sub.choices.values():
        sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="structured output")
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _fail(f"usage error: {exc}")
        return EXIT_USAGE
    except SystemExit as exc:       # --help
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ConfigError as exc:
        _fail(f"config error: {exc}")
        return EXIT_USAGE
    except (TraceFormatError, OSError) as exc:
        _fail(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
