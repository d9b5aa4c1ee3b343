"""Progress notions as decidable checks: silent and locked processes,
locked sets, starvation monitoring over finite traces, and control-graph
(unless) checks.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from .job_model import NONE, compatible
from .protocol import (
    ABORT,
    ENV21,
    FORWARD,
    RECV,
    SITE,
    STANDARD,
    GlobalState,
    Step,
    Variant,
    nonenv_steps,
    send_targets,
)
from .trace import Trace

# pc successors along the main loop, plus the abort back-edges
PC_EDGES = frozenset({(21, 22), (22, 23), (23, 24), (24, 25), (25, 26), (26, 27),
                      (27, 28), (28, 21), (24, 21), (25, 21), (26, 21)})
PCR_EDGES = frozenset({(31, 32), (32, 33), (33, 31)})


def active_processes(state: GlobalState, variant: Variant = STANDARD,
                     steps: list[Step] | None = None, narrow: bool = False) -> set[int]:
    """Processes that are not silent.

    A process is active when it has an enabled forward, lowering or
    triggered step, or when some enabled triggered step elsewhere sends a
    message to it.  Unless ``narrow`` is set, a process is also active
    while a message it sent is still deliverable: the receiving step is
    enabled and will eventually fire, so the sender is not yet waiting
    in vain.
    """
    if steps is None:
        steps = nonenv_steps(state, variant)
    out: set[int] = set()
    for st in steps:
        if st.kind != SITE:
            out.add(st.actor)
        tgt = send_targets(st)
        if tgt is not None:
            out.add(tgt[1])
        if not narrow and st.kind in (RECV, SITE):
            out.add(st.peer)
    return out


def silent_set(state: GlobalState, variant: Variant = STANDARD,
               steps: list[Step] | None = None, narrow: bool = False) -> set[int]:
    active = active_processes(state, variant, steps, narrow)
    return {p for p in range(len(state.procs)) if p not in active}


def is_silent(state: GlobalState, p: int, variant: Variant = STANDARD,
              narrow: bool = False) -> bool:
    return p not in active_processes(state, variant, narrow=narrow)


def is_locked(state: GlobalState, p: int, variant: Variant = STANDARD,
              narrow: bool = False) -> bool:
    return state.procs[p].pc != 21 and is_silent(state, p, variant, narrow)


@dataclass
class LockedSetReport:
    W: frozenset[int]
    silent: bool
    locked: list[int]
    edges: list[tuple[int, int]] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        """False only for a silent set with a locked member and no conflict leaving it."""
        return not (self.silent and self.locked) or bool(self.edges)

    def to_dict(self) -> dict:
        return {"W": sorted(self.W), "silent": self.silent, "locked": self.locked,
                "edges": [list(e) for e in self.edges], "holds": self.holds}


def _conflicts(state: GlobalState, q: int, r: int) -> bool:
    procs = state.procs
    return not compatible(procs[q].job, procs[r].job, state.model.K)


def check_theorem2(state: GlobalState, W, variant: Variant = STANDARD,
                   silent: set[int] | None = None) -> LockedSetReport:
    W = frozenset(W)
    if not W:
        raise ValueError("W must be nonempty")
    if silent is None:
        silent = silent_set(state, variant)
    is_sil = W <= silent
    locked = sorted(q for q in W if state.procs[q].pc != 21) if is_sil else []
    outside = [r for r in range(len(state.procs)) if r not in W]
    edges = [(q, r) for q in sorted(W) for r in outside if _conflicts(state, q, r)]
    return LockedSetReport(W, is_sil, locked, edges)


def theorem2_failures(state: GlobalState, variant: Variant = STANDARD,
                      silent: set[int] | None = None, enumerate_up_to: int = 12,
                      samples: int = 64, rng: random.Random | None = None
                      ) -> list[LockedSetReport]:
    """Every W for which the locked-set claim fails in this state.

    All nonempty W are enumerated when there are at most ``enumerate_up_to``
    processes.  Larger universes check W = all, the conflict closure of
    each locked process (which is the smallest candidate counterexample
    containing it), and ``samples`` random subsets of the silent set.
    """
    if silent is None:
        silent = silent_set(state, variant)
    n = len(state.procs)
    if not any(state.procs[q].pc != 21 for q in silent):
        return []
    cands: list[frozenset[int]]
    if n <= enumerate_up_to:
        sil = sorted(silent)
        cands = [frozenset(c) for k in range(1, len(sil) + 1)
                 for c in itertools.combinations(sil, k)]
    else:
        rng = rng or random.Random(0)
        cands = [frozenset(range(n))]
        for q in sorted(silent):
            if state.procs[q].pc != 21:
                cands.append(conflict_closure(state, q))
        sil = sorted(silent)
        for _ in range(samples):
            k = rng.randint(1, len(sil))
            cands.append(frozenset(rng.sample(sil, k)))
    out = []
    for W in cands:
        rep = check_theorem2(state, W, variant, silent)
        if not rep.holds:
            out.append(rep)
    return out


def conflict_closure(state: GlobalState, q: int) -> frozenset[int]:
    seen = {q}
    todo = [q]
    n = len(state.procs)
    while todo:
        a = todo.pop()
        for b in range(n):
            if b not in seen and _conflicts(state, a, b):
                seen.add(b)
                todo.append(b)
    return frozenset(seen)


def wax_failures(state: GlobalState, silent: set[int]) -> list[tuple[str, int, int]]:
    """Simplified waiting facts for silent q, as (name, q, r) for each failure."""
    procs = state.procs
    n = len(procs)
    out = []
    for q in sorted(silent):
        pq = procs[q]
        for r in range(n):
            pr = procs[r]
            cf = _conflicts(state, q, r)
            if r in pq.wack:
                out.append(("Wax0", q, r))
            if r in pq.prio and not (pr.pc >= 26 and cf):
                out.append(("Wax1", q, r))
            if r < q and r in pq.need and not (pr.pc >= 26 and cf):
                out.append(("Wax2", q, r))
            if q < r and r in pq.need and not (pr.pc >= 27 and cf):
                out.append(("Wax3", q, r))
    return out


# -- trace monitors -------------------------------------------------------

@dataclass
class StarvationFlag:
    process: int
    start: int
    length: int
    open: bool
    witness: int | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class StarvationReport:
    budget: int
    off_rounds: dict[int, int]           # longest stretch off line 21, per process
    passages: dict[int, int]             # completed returns to line 21, per process
    flags: list[StarvationFlag] = field(default_factory=list)

    @property
    def unexcused(self) -> list[StarvationFlag]:
        return [f for f in self.flags if f.witness is None]

    def flagged(self) -> set[int]:
        return {f.process for f in self.flags}

    def to_dict(self) -> dict:
        return {"budget": self.budget, "off_rounds": self.off_rounds,
                "passages": self.passages, "flags": [f.to_dict() for f in self.flags]}


def monitor_starvation(trace: Trace, budget_rounds: int, K: int | None = None,
                       process_count: int | None = None) -> StarvationReport:
    """Flag processes that stay off line 21 for more than ``budget_rounds`` steps.

    One recorded step is one scheduler round.  For a flagged stretch of q
    that passes the budget at round t, the witness is a process r whose
    job conflicts with q's at every recorded state from t to the end of
    the stretch.  This is the finite stand-in for "eventually always in
    conflict"; the smallest such r is reported.
    """
    sc = trace.header.get("scenario", {})
    K = K if K is not None else sc["K"]
    n = process_count if process_count is not None else sc["process_count"]
    jobs = [NONE] * n
    start: list[int | None] = [None] * n
    cand: list[set[int] | None] = [None] * n
    longest = {p: 0 for p in range(n)}
    passages = {p: 0 for p in range(n)}
    flags: list[StarvationFlag] = []

    def flush(i: int) -> None:
        # the current jobs held for the states after records seg..i-1
        for q in range(n):
            s = start[q]
            if s is not None and i - 1 >= s + budget_rounds:
                now = {r for r in range(n) if r != q and not compatible(jobs[q], jobs[r], K)}
                cand[q] = now if cand[q] is None else cand[q] & now

    def close(q: int, end: int, still_open: bool) -> None:
        s = start[q]
        length = end - s
        longest[q] = max(longest[q], length)
        if length > budget_rounds:
            w = cand[q]
            flags.append(StarvationFlag(q, s, length, still_open, min(w) if w else None))
        start[q] = None
        cand[q] = None

    end = 0
    for rec in trace.records:
        i, st = rec.i, rec.step
        end = i + 1
        if st.kind == ENV21:
            flush(i)
            jobs[st.actor] = st.value
            start[st.actor] = i
        elif st.kind in (FORWARD, ABORT) and rec.ctl is not None and rec.ctl[0] == 21:
            flush(i)
            q = st.actor
            jobs[q] = NONE
            if start[q] is not None:
                passages[q] += st.kind == FORWARD
                close(q, i, False)
    flush(end)
    for q in range(n):
        if start[q] is not None:
            close(q, end, True)
    return StarvationReport(budget_rounds, longest, passages, flags)


@dataclass
class UnlessResult:
    ok: bool
    index: int | None = None
    detail: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_unless(trace: Trace, process_count: int | None = None) -> UnlessResult:
    """Every recorded pc/pcr change follows the control graph."""
    n = process_count if process_count is not None else trace.header.get("scenario", {}).get("process_count")
    ctl: dict[int, tuple[int, int]] = {}
    for rec in trace.records:
        if rec.step.kind == SITE or rec.ctl is None:
            continue
        p = rec.step.actor
        if n is not None and not 0 <= p < n:
            return UnlessResult(False, rec.i, f"unknown process {p}")
        old_pc, old_pcr = ctl.get(p, (21, 31))
        pc, pcr = rec.ctl
        if pc != old_pc and (old_pc, pc) not in PC_EDGES:
            return UnlessResult(False, rec.i, f"p{p} jumped from line {old_pc} to {pc}")
        if pcr != old_pcr and (old_pcr, pcr) not in PCR_EDGES:
            return UnlessResult(False, rec.i, f"p{p} jumped from line {old_pcr} to {pcr}")
        ctl[p] = (pc, pcr)
    return UnlessResult(True)

