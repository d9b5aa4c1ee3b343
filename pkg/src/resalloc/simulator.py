"""Executions: workloads, the fair scheduler, exhaustive exploration, and
message accounting over traces.

The scheduler runs in rounds and takes exactly one step per round.  Every
non-environment step carries an age: the number of consecutive rounds at
whose start it was enabled.  A step is never left enabled past age F as
long as at most F steps are enabled at once.  Environment steps are never
forced; they are offered by the workload with their configured
probabilities and compete with the other steps in a uniform draw.
"""
from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .invariants import INVARIANT_IDS, Violation, check_all
from .job_model import Job, JobModel
from .liveness import silent_set, theorem2_failures, wax_failures
from .network import ACK, GRA, NOTIFY, VOID_KEYS, WITHDRAW, OverwriteInTransit
from .protocol import (
    ABORT,
    ENV21,
    FORWARD,
    LOWERING,
    RECV,
    STANDARD,
    GlobalState,
    Step,
    StepNotEnabled,
    Variant,
    abort,
    enabled,
    env21,
    env31,
    execute,
    initial_state,
    nonenv_steps,
)
from .trace import COMPLETED, QUIESCENT, STEP_LIMIT, VIOLATION, Trace, TraceRecord, make_header

LOWERING_POLICIES = ("none", "zero", "random")
ABORT_LINES = (24, 25, 26)


class ConfigError(ValueError):
    def __init__(self, field_name: str, msg: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_name}: {msg}")
        self.field = field_name
        self.msg = msg
        self.line = line


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    process_count: int = 2
    site_count: int = 1
    resource_count: int = 1
    K: int = 1
    loc: tuple[int, ...] | None = None     # default: resource c lives at site c mod site_count
    arrival_prob: float = 0.5
    job_size: tuple[int, int] = (1, 2)     # resources per random job
    max_level: int | None = None           # default K
    offers: dict[int, list[Job]] | None = None
    abort_prob: dict[int, float] = field(default_factory=dict)
    lowering: str = "none"
    lowering_prob: float = 0.0
    F: int = 64
    strong_fairness_32: bool = True
    max_steps: int = 10_000
    seed: int = 0
    check_every: int = 1
    hash_every: int = 1
    variant: Variant = STANDARD

    def __post_init__(self):
        if self.loc is None:
            self.loc = tuple(c % max(self.site_count, 1) for c in range(self.resource_count))
        else:
            self.loc = tuple(self.loc)
        self.job_size = tuple(self.job_size)
        self.abort_prob = {int(k): float(v) for k, v in self.abort_prob.items()}
        if self.offers is not None:
            self.offers = {int(p): [j if isinstance(j, Job) else Job(j) for j in js]
                           for p, js in self.offers.items()}
        self.validate()

    def validate(self) -> None:
        for name in ("process_count", "site_count", "resource_count", "K", "F"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(name, "must be a positive integer")
        for name in ("max_steps", "check_every", "hash_every", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ConfigError(name, "must be a non-negative integer")
        for name in ("arrival_prob", "lowering_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(name, "probability must lie in [0, 1]")
        for line, pr in self.abort_prob.items():
            if line not in ABORT_LINES:
                raise ConfigError("abort_prob", f"line {line} is not abortable")
            if not 0.0 <= pr <= 1.0:
                raise ConfigError("abort_prob", "probability must lie in [0, 1]")
        if self.lowering not in LOWERING_POLICIES:
            raise ConfigError("lowering", f"must be one of {', '.join(LOWERING_POLICIES)}")
        lo, hi = self.job_size
        if not 1 <= lo <= hi:
            raise ConfigError("job_size", "need 1 <= min <= max")
        if self.max_level is not None and not 1 <= self.max_level <= self.K:
            raise ConfigError("max_level", "must lie in 1..K")
        try:
            model = self.model()
        except ValueError as exc:
            raise ConfigError("loc", str(exc)) from None
        if self.offers is not None:
            for p, jobs in self.offers.items():
                if not 0 <= p < self.process_count:
                    raise ConfigError("offers", f"unknown process {p}")
                for j in jobs:
                    if not j:
                        raise ConfigError("offers", "offered jobs must be nonempty")
                    try:
                        model.check_job(j)
                    except ValueError as exc:
                        raise ConfigError("offers", str(exc)) from None

    def model(self) -> JobModel:
        return JobModel(self.K, self.resource_count, self.site_count, tuple(self.loc))

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "process_count": self.process_count,
            "site_count": self.site_count,
            "resource_count": self.resource_count,
            "K": self.K,
            "loc": list(self.loc),
            "arrival_prob": self.arrival_prob,
            "job_size": list(self.job_size),
            "max_level": self.max_level,
            "abort_prob": {str(k): v for k, v in sorted(self.abort_prob.items())},
            "lowering": self.lowering,
            "lowering_prob": self.lowering_prob,
            "F": self.F,
            "strong_fairness_32": self.strong_fairness_32,
            "max_steps": self.max_steps,
            "seed": self.seed,
            "check_every": self.check_every,
            "hash_every": self.hash_every,
            "variant": self.variant.to_dict(),
        }
        if self.offers is not None:
            out["offers"] = {str(p): [{str(c): lvl for c, lvl in j.items} for j in js]
                             for p, js in sorted(self.offers.items())}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        if "variant" in d:
            d["variant"] = Variant(**d["variant"])
        if d.get("offers") is not None:
            d["offers"] = {int(p): [{int(c): int(l) for c, l in j.items()} for j in js]
                           for p, js in d["offers"].items()}
        return cls(**d)


# -- workloads -------------------------------------------------------------

class RandomWorkload:
    """Seeded environment: job arrivals, aborts and lowering requests."""

    def __init__(self, cfg: ScenarioConfig, rng: random.Random):
        self.cfg = cfg
        self.rng = rng
        self.max_level = cfg.max_level or cfg.K

    def new_job(self, p: int) -> Job:
        cfg, rng = self.cfg, self.rng
        if cfg.offers is not None:
            return rng.choice(cfg.offers[p])
        lo, hi = cfg.job_size
        k = rng.randint(lo, min(hi, cfg.resource_count))
        res = sorted(rng.sample(range(cfg.resource_count), k))
        return Job({c: rng.randint(1, self.max_level) for c in res})

    def _can_arrive(self, p: int) -> bool:
        offers = self.cfg.offers
        return offers is None or bool(offers.get(p))

    def offer(self, state: GlobalState) -> list[Step]:
        cfg, rng = self.cfg, self.rng
        out: list[Step] = []
        for p, ps in enumerate(state.procs):
            if ps.pc == 21:
                if cfg.arrival_prob and self._can_arrive(p) and rng.random() < cfg.arrival_prob:
                    out.append(env21(p, self.new_job(p)))
            elif ps.pc in ABORT_LINES:
                pr = cfg.abort_prob.get(ps.pc, 0.0)
                if pr and rng.random() < pr:
                    st = abort(p, ps.pc)
                    if enabled(state, st):
                        out.append(st)
            if ps.pcr == 31 and cfg.lowering != "none" and any(ps.fun):
                if cfg.lowering_prob and rng.random() < cfg.lowering_prob:
                    if cfg.lowering == "zero":
                        news = [0] * len(ps.fun)
                    else:
                        news = [rng.randint(0, f) for f in ps.fun]
                    out.append(env31(p, news))
        return out

    def may_offer(self, state: GlobalState) -> bool:
        cfg = self.cfg
        for p, ps in enumerate(state.procs):
            if ps.pc == 21 and cfg.arrival_prob and self._can_arrive(p):
                return True
            if ps.pc in ABORT_LINES and cfg.abort_prob.get(ps.pc) and enabled(state, abort(p, ps.pc)):
                return True
            if ps.pcr == 31 and cfg.lowering != "none" and cfg.lowering_prob and any(ps.fun):
                return True
        return False


@dataclass
class FiniteWorkload:
    """Environment with finitely many choices, for exhaustive exploration.

    ``lowering`` is ``none``, ``zero`` (lower every site to 0) or ``all``
    (every vector below the current registration).
    """

    offers: dict[int, list[Job]]
    lowering: str = "none"
    aborts: bool = False

    def env_steps(self, state: GlobalState) -> Iterable[Step]:
        for p, ps in enumerate(state.procs):
            if ps.pc == 21:
                for j in self.offers.get(p, ()):
                    yield env21(p, j)
            elif self.aborts and ps.pc in ABORT_LINES:
                yield abort(p, ps.pc)
            if ps.pcr == 31 and self.lowering != "none":
                if self.lowering == "zero":
                    yield env31(p, [0] * len(ps.fun))
                else:
                    for news in itertools.product(*(range(f + 1) for f in ps.fun)):
                        yield env31(p, news)

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> FiniteWorkload:
        if cfg.offers is None:
            raise ConfigError("offers", "exploration needs a finite job offer per process")
        low = {"none": "none", "zero": "zero", "random": "all"}[cfg.lowering]
        if not cfg.lowering_prob:
            low = "none"
        return cls(cfg.offers, low, any(cfg.abort_prob.values()))


# -- the scheduler -----------------------------------------------------------

class InvariantViolation(RuntimeError):
    def __init__(self, violation: Violation, trace: Trace):
        super().__init__(str(violation))
        self.violation = violation
        self.trace = trace


@dataclass
class RunStats:
    process_count: int
    steps: int = 0
    env_steps: int = 0
    cs_entries: list[int] = field(default_factory=list)
    aborts: list[dict[int, int]] = field(default_factory=list)
    channel_peak: dict[tuple[str, int, int], int] = field(default_factory=dict)
    max_age: int = 0
    max_enabled: int = 0
    forced_weak: int = 0
    forced_strong: int = 0
    checks: int = 0

    def __post_init__(self):
        if not self.cs_entries:
            self.cs_entries = [0] * self.process_count
            self.aborts = [{} for _ in range(self.process_count)]

    @property
    def max_void_occupancy(self) -> int:
        return max(self.channel_peak.values(), default=0)

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "env_steps": self.env_steps,
            "cs_entries": self.cs_entries,
            "aborts": [{str(k): v for k, v in sorted(a.items())} for a in self.aborts],
            "max_void_occupancy": self.max_void_occupancy,
            "channel_peak": {f"{k}.{a}.{b}": n for (k, a, b), n in sorted(self.channel_peak.items())},
            "max_age": self.max_age,
            "max_enabled": self.max_enabled,
            "forced_weak": self.forced_weak,
            "forced_strong": self.forced_strong,
            "invariant_checks": self.checks,
        }


Freeze = Callable[[GlobalState, Step], bool]


class Simulator:
    """Steps one execution.  Use :meth:`step` for scripted control, :meth:`run`
    to go until the step limit."""

    def __init__(self, cfg: ScenarioConfig, freeze: Freeze | None = None,
                 check_ids: tuple[str, ...] | None = None):
        self.cfg = cfg
        self.variant = cfg.variant
        self.state = initial_state(cfg.model(), cfg.process_count)
        self.rng = random.Random(cfg.seed)
        self.workload = RandomWorkload(cfg, self.rng)
        self.freeze = freeze
        self.check_ids = check_ids or INVARIANT_IDS
        self.ages: dict[Step, int] = {}
        self.low_rounds = [0] * cfg.process_count
        self.i = 0
        self.trace = Trace(make_header(cfg.to_dict(), cfg.seed, cfg.variant, self.state.state_hash()))
        self.stats = RunStats(cfg.process_count)
        self.done = False

    def candidates(self) -> list[Step]:
        steps = nonenv_steps(self.state, self.variant)
        if self.freeze is not None:
            steps = [s for s in steps if not self.freeze(self.state, s)]
        return steps

    def _choose(self, E: list[Step]) -> Step | None:
        cfg, ages, F = self.cfg, self.ages, self.cfg.F
        if E:
            oldest = max(ages.values())
            if oldest + len(E) > F:
                order = sorted(E, key=lambda s: (-ages[s], s))
                if any(ages[s] + i + 1 > F for i, s in enumerate(order)):
                    self.stats.forced_weak += 1
                    return order[0]
        if cfg.strong_fairness_32:
            for p, n in enumerate(self.low_rounds):
                if n >= F:
                    st = Step(LOWERING, p, line=32)
                    if st in ages:
                        self.stats.forced_strong += 1
                        return st
        for _ in range(10_000):
            pool = E + self.workload.offer(self.state)
            if pool:
                return pool[self.rng.randrange(len(pool))]
            if not self.workload.may_offer(self.state):
                return None
        return None

    def step(self, chosen: Step | None = None) -> Step | None:
        """Run one scheduler round; returns the step taken (None if quiescent)."""
        E = self.candidates()
        old = self.ages
        ages = {s: old.get(s, 0) + 1 for s in E}
        self.ages = ages
        if ages:
            m = max(ages.values())
            if m > self.stats.max_age:
                self.stats.max_age = m
            if len(E) > self.stats.max_enabled:
                self.stats.max_enabled = len(E)
        for s in E:
            if s.kind == LOWERING and s.line == 32:
                self.low_rounds[s.actor] += 1
        if chosen is None:
            chosen = self._choose(E)
            if chosen is None:
                self.done = True
                return None
        elif not enabled(self.state, chosen, self.variant):
            raise StepNotEnabled(str(chosen))
        self._take(chosen)
        return chosen

    def _take(self, st: Step) -> None:
        state, stats, i = self.state, self.stats, self.i
        try:
            eff = execute(state, st)
        except OverwriteInTransit as exc:
            self.trace.status = VIOLATION
            self.trace.violation = {"overwrite": list(exc.channel), "step": i}
            exc.trace = self.trace
            raise
        self.ages.pop(st, None)
        kind = st.kind
        if kind == LOWERING and st.line == 32:
            self.low_rounds[st.actor] = 0
        elif kind == FORWARD and st.line == 26:
            stats.cs_entries[st.actor] += 1
        elif kind == ABORT:
            a = stats.aborts[st.actor]
            a[st.line] = a.get(st.line, 0) + 1
        if st.step_class == "env":
            stats.env_steps += 1
        void = state.net.void
        peak = stats.channel_peak
        for key, a, b, _ in eff.sends:
            if key in VOID_KEYS:
                ch = (key, a, b)
                n = void[ch]
                if n > peak.get(ch, 0):
                    peak[ch] = n
        ctl = None if kind == "Site" else (state.procs[st.actor].pc, state.procs[st.actor].pcr)
        he = self.cfg.hash_every
        h = state.state_hash() if he and (i + 1) % he == 0 else None
        self.trace.records.append(TraceRecord(i, st, ctl, eff.consumed, tuple(eff.sends), h))
        self.i = i + 1
        stats.steps = self.i
        ce = self.cfg.check_every
        if ce and self.i % ce == 0:
            self.check(i)

    def check(self, i: int | None = None) -> None:
        self.stats.checks += 1
        bad = check_all(self.state, i, self.check_ids)
        if bad:
            v = bad[0]
            self.trace.status = VIOLATION
            self.trace.violation = v.to_dict()
            raise InvariantViolation(v, self.trace)

    def run(self, max_steps: int | None = None) -> Trace:
        limit = self.cfg.max_steps if max_steps is None else max_steps
        while self.i < limit:
            if self.step() is None:
                break
        if self.cfg.check_every:
            self.check(self.i - 1 if self.i else None)
        if self.done:
            self.trace.status = QUIESCENT
        elif self.i >= limit:
            self.trace.status = STEP_LIMIT if limit < self.cfg.max_steps else COMPLETED
        return self.trace


def run(cfg: ScenarioConfig, freeze: Freeze | None = None) -> tuple[Trace, RunStats]:
    sim = Simulator(cfg, freeze)
    trace = sim.run()
    return trace, sim.stats


# -- exhaustive exploration --------------------------------------------------

class BoundExceeded(RuntimeError):
    def __init__(self, report: ExplorationReport):
        super().__init__(f"exploration stopped after {report.states} states "
                         f"(bound reached, coverage incomplete)")
        self.report = report


@dataclass
class Finding:
    kind: str                 # "invariant", "theorem2", "wax", "overwrite"
    detail: dict
    path: list[Step]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail, "path": [str(s) for s in self.path]}


@dataclass
class ExplorationReport:
    complete: bool = False
    states: int = 0
    transitions: int = 0
    depth: int = 0
    terminal_states: int = 0
    locked_terminal: int = 0       # terminal states with some locked process
    silent_states: int = 0         # states where some process off 21 is silent
    findings: list[Finding] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.findings

    def violations(self, kind: str | None = None) -> list[Finding]:
        return [f for f in self.findings if kind is None or f.kind == kind]

    def invariant_ids(self) -> set[str]:
        return {f.detail["invariant"] for f in self.findings if f.kind == "invariant"}

    def to_dict(self) -> dict:
        return {
            "complete": self.complete, "states": self.states,
            "transitions": self.transitions, "depth": self.depth,
            "terminal_states": self.terminal_states,
            "locked_terminal": self.locked_terminal,
            "silent_states": self.silent_states,
            "counts": dict(sorted(self.counts.items())),
            "findings": [f.to_dict() for f in self.findings],
        }


def explore(cfg: ScenarioConfig, workload: FiniteWorkload | None = None, *,
            max_states: int = 1_000_000, max_depth: int | None = None,
            check_every: int = 1, theorem2: bool = True, wax: bool = True,
            stop_on_violation: bool = False, max_findings: int = 20,
            visit: Callable[[GlobalState], None] | None = None,
            on_bound: str = "raise") -> ExplorationReport:
    """Breadth-first reachability over every enabled step.

    Visited states are keyed on their canonical form, so hash collisions
    are resolved by full comparison.  Every state is checked against the
    invariant catalogue (or every ``check_every``-th) and, unless
    disabled, against the locked-set claim for all W and the waiting facts
    for silent processes.
    """
    variant = cfg.variant
    wl = workload or FiniteWorkload.from_config(cfg)
    init = initial_state(cfg.model(), cfg.process_count)
    rep = ExplorationReport()
    ids: dict[tuple, int] = {init.canonical(): 0}
    parent: list[tuple[int, Step | None]] = [(-1, None)]
    frontier = deque([(0, init, 0)])

    def path_to(sid: int, last: Step | None = None) -> list[Step]:
        out = [] if last is None else [last]
        while sid > 0:
            sid, st = parent[sid]
            out.append(st)
        out.reverse()
        return out

    def report(kind: str, detail: dict, sid: int, last: Step | None = None) -> bool:
        rep.counts[kind] = rep.counts.get(kind, 0) + 1
        if len(rep.findings) < max_findings:
            rep.findings.append(Finding(kind, detail, path_to(sid, last)))
        return stop_on_violation

    n_checked = 0
    while frontier:
        sid, state, depth = frontier.popleft()
        rep.depth = max(rep.depth, depth)
        if visit is not None:
            visit(state)
        stop = False
        if check_every and n_checked % check_every == 0:
            for v in check_all(state, depth):
                stop |= report("invariant", v.to_dict(), sid)
        n_checked += 1
        steps = nonenv_steps(state, variant)
        if theorem2 or wax:
            sil = silent_set(state, variant, steps)
            if any(state.procs[q].pc != 21 for q in sil):
                rep.silent_states += 1
                if theorem2:
                    for lr in theorem2_failures(state, variant, sil):
                        stop |= report("theorem2", lr.to_dict(), sid)
                        break
                if wax:
                    for name, q, r in wax_failures(state, sil):
                        stop |= report("wax", {"fact": name, "q": q, "r": r}, sid)
            if not steps:
                rep.terminal_states += 1
                if any(state.procs[q].pc != 21 for q in sil):
                    rep.locked_terminal += 1
        elif not steps:
            rep.terminal_states += 1
        if stop:
            rep.states = len(parent)
            return rep
        if max_depth is not None and depth >= max_depth:
            continue
        steps.extend(s for s in wl.env_steps(state) if enabled(state, s, variant))
        for st in steps:
            nxt = state.clone()
            try:
                execute(nxt, st)
            except OverwriteInTransit as exc:
                if report("overwrite", {"channel": list(exc.channel)}, sid, st):
                    rep.states = len(parent)
                    return rep
                continue
            rep.transitions += 1
            key = nxt.canonical()
            if key in ids:
                continue
            ids[key] = len(parent)
            parent.append((sid, st))
            if len(parent) > max_states:
                rep.states = len(parent)
                if on_bound == "raise":
                    raise BoundExceeded(rep)
                return rep
            frontier.append((ids[key], nxt, depth + 1))
    rep.states = len(parent)
    rep.complete = max_depth is None or rep.depth < max_depth
    return rep


# -- message accounting -------------------------------------------------------

@dataclass
class Passage:
    process: int
    start: int                               # index of Forward(p,25)
    end: int | None = None                   # index of the last acknowledgement
    nbh0: frozenset[int] = frozenset()
    counts: dict[int, dict[str, int]] = field(default_factory=dict)
    pending: set[int] = field(default_factory=set)

    def totals(self) -> dict[int, int]:
        return {q: sum(c.values()) for q, c in self.counts.items()}

    def expected(self) -> dict[int, int]:
        return {q: 4 if self.process < q else 3 for q in self.nbh0}

    def to_dict(self) -> dict:
        return {"process": self.process, "start": self.start, "end": self.end,
                "nbh0": sorted(self.nbh0),
                "counts": {str(q): c for q, c in sorted(self.counts.items())}}


def message_stats(trace: Trace) -> list[Passage]:
    """Central-algorithm messages exchanged per completed CS passage.

    A passage of p opens at Forward(p,25), whose notify messages fix nbh0,
    and closes when every withdraw sent at line 28 has been acknowledged.
    Per neighbour q in nbh0 it counts notify and withdraw sent by p, and
    gra and ack received by p.  Passages cut short by an abort are dropped.
    Acknowledgements always belong to the latest withdraw batch, since p
    cannot pass line 24 again before they are all in.
    """
    n = trace.header.get("scenario", {}).get("process_count")
    if n is None:
        n = 1 + max((r.step.actor for r in trace.records), default=0)
    open_: list[Passage | None] = [None] * n
    acking: list[Passage | None] = [None] * n
    done: list[Passage] = []
    for rec in trace.records:
        st = rec.step
        kind, p = st.kind, st.actor
        if kind == FORWARD:
            if st.line == 25:
                nb = frozenset(b for k, _, b, _ in rec.sends if k == NOTIFY)
                open_[p] = Passage(p, rec.i, nbh0=nb,
                                   counts={q: {"notify": 1, "gra": 0, "withdraw": 0, "ack": 0}
                                           for q in nb})
            elif st.line == 28:
                pa = open_[p]
                open_[p] = None
                targets = {b for k, _, b, _ in rec.sends if k == WITHDRAW}
                if pa is not None:
                    for q in targets & pa.nbh0:
                        pa.counts[q]["withdraw"] += 1
                    pa.pending = targets
                    if not targets:
                        pa.end = rec.i
                        done.append(pa)
                    else:
                        acking[p] = pa
        elif kind == ABORT:
            open_[p] = None
        elif kind == RECV:
            q = st.peer
            if st.key == GRA:
                pa = open_[p]
                if pa is not None and q in pa.nbh0:
                    pa.counts[q]["gra"] += 1
            elif st.key == ACK:
                pa = acking[p]
                if pa is not None and q in pa.pending:
                    if q in pa.nbh0:
                        pa.counts[q]["ack"] += 1
                    pa.pending.discard(q)
                    if not pa.pending:
                        pa.end = rec.i
                        done.append(pa)
                        acking[p] = None
    done.sort(key=lambda pa: (pa.end, pa.process))
    return done


def check_message_counts(passages: list[Passage]) -> list[Passage]:
    """Passages whose per-neighbour totals differ from 3 (lower) / 4 (higher)."""
    bad = []
    for pa in passages:
        for q, c in pa.counts.items():
            want = {"notify": 1, "withdraw": 1, "ack": 1, "gra": 1 if pa.process < q else 0}
            if c != want:
                bad.append(pa)
                break
    return bad

