"""Guarded atomic transitions of processes and sites.

Every process runs three interleaved threads: the main loop (lines
21..28), the lowering loop (lines 31..33), and the message handlers.  Each
alternative is one atomic :class:`Step`, including all messages it sends.
Sites only answer ``asklist`` and ``lower`` requests.

:func:`enabled` evaluates a step's guard, :func:`apply` returns the
successor state, and :func:`execute` performs the step in place (the
simulator hot path).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple, Protocol, Sequence

from .job_model import NONE, Job, JobModel, compatible
from .network import (
    ACK,
    ANSWER,
    ASKLIST,
    DONE,
    GRA,
    HELLO,
    LOWER,
    NOTIFY,
    TO_SITE,
    VOID_KEYS,
    WELCOME,
    WITHDRAW,
    Network,
)

FORWARD = "Forward"
ENV21 = "Env21"
ENV31 = "Env31"
ABORT = "Abort"
LOWERING = "Lower"
RECV = "Recv"
AFTER = "After"
PROM = "Prom"
LISTEN = "Listen"
SITE = "Site"

ENV_KINDS = frozenset({ENV21, ENV31, ABORT})
TRIGGERED_KINDS = frozenset({RECV, AFTER, PROM, LISTEN, SITE})

PROCESS_RECV_KEYS = (NOTIFY, WITHDRAW, ACK, GRA, HELLO, WELCOME)
LISTEN_KEYS = (ANSWER, DONE)
SITE_KEYS = (ASKLIST, LOWER)


class StepNotEnabled(RuntimeError):
    pass


class Step(NamedTuple):
    """A step label.

    ``actor`` is the process taking the step, or the site for ``Site``
    steps.  ``peer`` is the other endpoint of a message step, ``line`` the
    program line for Forward/Abort/Lower, ``value`` the environment's
    choice for Env21 (a Job) and Env31 (a tuple of per-site levels).
    """

    kind: str
    actor: int
    line: int = 0
    peer: int = -1
    key: str = ""
    value: Any = None

    @property
    def step_class(self) -> str:
        k = self.kind
        if k in ENV_KINDS:
            return "env"
        if k == FORWARD:
            return "fwd"
        if k == LOWERING:
            return "low"
        return "trig"

    def process(self) -> int | None:
        """The process whose private state this step may modify (None for sites)."""
        return None if self.kind == SITE else self.actor

    def __str__(self) -> str:
        k, a = self.kind, self.actor
        if k == FORWARD:
            return f"Forward(p{a},{self.line})"
        if k in (ABORT, LOWERING):
            return f"{k}{self.line}(p{a})"
        if k == ENV21:
            return f"Env21(p{a},{self.value!r})"
        if k == ENV31:
            return f"Env31(p{a},{list(self.value)})"
        if k in (RECV, LISTEN):
            src = "s" if k == LISTEN else "p"
            return f"{k}(p{a}<-{src}{self.peer},{self.key})"
        if k in (AFTER, PROM):
            return f"{k}(p{a},p{self.peer})"
        return f"Site(s{a}<-p{self.peer},{self.key})"


def forward(p: int, line: int) -> Step:
    return Step(FORWARD, p, line=line)


def env21(p: int, job: Job) -> Step:
    return Step(ENV21, p, line=21, value=job)


def env31(p: int, news: Sequence[int]) -> Step:
    return Step(ENV31, p, line=31, value=tuple(news))


def abort(p: int, line: int) -> Step:
    return Step(ABORT, p, line=line)


def lower(p: int, line: int) -> Step:
    return Step(LOWERING, p, line=line)


def recv(p: int, q: int, key: str) -> Step:
    return Step(RECV, p, peer=q, key=key)


def after(p: int, q: int) -> Step:
    return Step(AFTER, p, peer=q)


def prom(p: int, q: int) -> Step:
    return Step(PROM, p, peer=q)


def listen(p: int, s: int, key: str) -> Step:
    return Step(LISTEN, p, peer=s, key=key)


def site_step(s: int, q: int, key: str) -> Step:
    return Step(SITE, s, peer=q, key=key)


def step_for_channel(key: str, src: int, dst: int) -> Step:
    """The reception step that consumes a message on this channel."""
    if key in TO_SITE:
        return Step(SITE, dst, peer=src, key=key)
    if key in (ANSWER, DONE):
        return Step(LISTEN, dst, peer=src, key=key)
    return Step(RECV, dst, peer=src, key=key)


@dataclass(frozen=True)
class Variant:
    """Deliberate protocol mutations used to show that checks have teeth."""

    skip_prio_guard: bool = False          # line 25 no longer awaits prio = {}
    prom_drop_pc_disjunct: bool = False    # prom guard without "pc <= 26 or"
    prom_unguarded: bool = False           # prom enabled whenever q in prom

    def is_default(self) -> bool:
        return self == STANDARD

    def to_dict(self) -> dict[str, bool]:
        return {k: v for k, v in self.__dict__.items() if v}


STANDARD = Variant()


@dataclass(slots=True)
class ProcessState:
    pc: int = 21
    pcr: int = 31
    job: Job = NONE
    nbh: set[int] = field(default_factory=set)
    nbh0: set[int] = field(default_factory=set)
    prio: set[int] = field(default_factory=set)
    wack: set[int] = field(default_factory=set)
    after: set[int] = field(default_factory=set)
    away: set[int] = field(default_factory=set)
    need: set[int] = field(default_factory=set)
    prom: set[int] = field(default_factory=set)
    pack: set[int] = field(default_factory=set)
    # only entries different from none are stored
    copy: dict[int, Job] = field(default_factory=dict)
    fun: list[int] = field(default_factory=list)
    news: list[int] = field(default_factory=list)
    reglist: set[int] = field(default_factory=set)
    curlist: set[int] = field(default_factory=set)

    def clone(self) -> ProcessState:
        return ProcessState(
            self.pc, self.pcr, self.job,
            set(self.nbh), set(self.nbh0), set(self.prio), set(self.wack),
            set(self.after), set(self.away), set(self.need), set(self.prom),
            set(self.pack), dict(self.copy), list(self.fun), list(self.news),
            set(self.reglist), set(self.curlist),
        )

    def copy_of(self, q: int) -> Job:
        return self.copy.get(q, NONE)

    def canonical(self) -> tuple:
        srt = sorted
        return (
            self.pc, self.pcr, self.job.items,
            tuple(srt(self.nbh)), tuple(srt(self.nbh0)), tuple(srt(self.prio)),
            tuple(srt(self.wack)), tuple(srt(self.after)), tuple(srt(self.away)),
            tuple(srt(self.need)), tuple(srt(self.prom)), tuple(srt(self.pack)),
            tuple(srt((q, j.items) for q, j in self.copy.items())),
            tuple(self.fun), tuple(self.news),
            tuple(srt(self.reglist)), tuple(srt(self.curlist)),
        )


@dataclass(slots=True)
class GlobalState:
    model: JobModel
    procs: list[ProcessState]
    sites: list[dict[int, int]]   # site -> {process: level>0}
    net: Network

    @property
    def process_count(self) -> int:
        return len(self.procs)

    def clone(self) -> GlobalState:
        return GlobalState(
            self.model,
            [p.clone() for p in self.procs],
            [dict(s) for s in self.sites],
            self.net.copy(),
        )

    def canonical(self) -> tuple:
        return (
            tuple(p.canonical() for p in self.procs),
            tuple(tuple(sorted(s.items())) for s in self.sites),
            self.net.canonical(),
        )

    def state_hash(self) -> str:
        return hashlib.blake2b(repr(self.canonical()).encode(), digest_size=8).hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GlobalState):
            return NotImplemented
        return self.canonical() == other.canonical()


def initial_state(model: JobModel, process_count: int) -> GlobalState:
    S = model.site_count
    procs = [ProcessState(fun=[0] * S, news=[0] * S) for _ in range(process_count)]
    return GlobalState(model, procs, [{} for _ in range(S)], Network())


# -- guards -----------------------------------------------------------------

def _prom_enabled(ps: ProcessState, q: int, K: int, variant: Variant) -> bool:
    if q not in ps.prom:
        return False
    if variant.prom_unguarded:
        return True
    if ps.pc <= 26 and not variant.prom_drop_pc_disjunct:
        return True
    return compatible(ps.job, ps.copy.get(q, NONE), K)


def _forward_enabled(state: GlobalState, ps: ProcessState, variant: Variant) -> bool:
    pc = ps.pc
    if pc == 22:
        return ps.pcr <= 32
    if pc == 23:
        return not ps.curlist
    if pc == 24:
        return not ps.pack and not ps.wack
    if pc == 25:
        return variant.skip_prio_guard or not ps.prio
    if pc == 26:
        return not ps.need
    return pc in (27, 28)


def _lower32_enabled(state: GlobalState, ps: ProcessState) -> bool:
    if ps.pcr != 32:
        return False
    if ps.pc == 21:
        return True
    if ps.pc < 25:
        return False
    need = state.model.site_levels(ps.job)
    news = ps.news
    return all(need[s] <= news[s] for s in range(len(news)))


def enabled(state: GlobalState, step: Step, variant: Variant = STANDARD) -> bool:
    kind = step.kind
    if kind == SITE:
        if not 0 <= step.actor < len(state.sites):
            return False
        return state.net.valued.get((step.key, step.peer, step.actor)) is not None
    p = step.actor
    if not 0 <= p < len(state.procs):
        return False
    ps = state.procs[p]
    if kind == FORWARD:
        return ps.pc == step.line and _forward_enabled(state, ps, variant)
    if kind in (RECV, LISTEN):
        ch = (step.key, step.peer, p)
        if step.key in VOID_KEYS:
            return state.net.void.get(ch, 0) > 0
        return state.net.valued.get(ch) is not None
    if kind == AFTER:
        q = step.peer
        return q in ps.after and q in ps.copy
    if kind == PROM:
        return _prom_enabled(ps, step.peer, state.model.K, variant)
    if kind == LOWERING:
        if step.line == 32:
            return _lower32_enabled(state, ps)
        return step.line == 33 and ps.pcr == 33 and not ps.reglist
    if kind == ENV21:
        job = step.value
        return ps.pc == 21 and isinstance(job, Job) and bool(job)
    if kind == ENV31:
        news = step.value
        return (ps.pcr == 31 and news is not None and len(news) == len(ps.fun)
                and all(0 <= n <= f for n, f in zip(news, ps.fun)))
    if kind == ABORT:
        if step.line == 24:
            return ps.pc == 24 and not ps.pack
        if step.line == 25:
            return ps.pc == 25
        if step.line == 26:
            return ps.pc == 26 and not any(q > p for q in ps.need)
    return False


class Workload(Protocol):
    def env_steps(self, state: GlobalState) -> Iterable[Step]:
        """Environment steps currently on offer (guards need not hold)."""


def nonenv_steps(state: GlobalState, variant: Variant = STANDARD) -> list[Step]:
    """All enabled forward, lowering and triggered steps, in canonical order."""
    out: list[Step] = []
    K = state.model.K
    for p, ps in enumerate(state.procs):
        pc = ps.pc
        if pc != 21 and _forward_enabled(state, ps, variant):
            out.append(Step(FORWARD, p, line=pc))
        if ps.pcr == 32:
            if _lower32_enabled(state, ps):
                out.append(Step(LOWERING, p, line=32))
        elif ps.pcr == 33 and not ps.reglist:
            out.append(Step(LOWERING, p, line=33))
        if ps.after:
            cp = ps.copy
            for q in sorted(ps.after):
                if q in cp:
                    out.append(Step(AFTER, p, peer=q))
        if ps.prom:
            for q in sorted(ps.prom):
                if _prom_enabled(ps, q, K, variant):
                    out.append(Step(PROM, p, peer=q))
    net = state.net
    if net.void or net.valued:
        for key, src, dst in net.deliverable():
            out.append(step_for_channel(key, src, dst))
    return out


def enabled_steps(state: GlobalState, workload: Workload | None = None,
                  variant: Variant = STANDARD) -> list[Step]:
    steps = nonenv_steps(state, variant)
    if workload is not None:
        steps.extend(s for s in workload.env_steps(state) if enabled(state, s, variant))
    return steps


# -- bodies -----------------------------------------------------------------

Send = tuple[str, int, int, Any]


class Effect(NamedTuple):
    consumed: Any          # payload taken from the network (None if void/none)
    sends: list[Send]


def apply(state: GlobalState, step: Step, variant: Variant = STANDARD) -> GlobalState:
    """Successor state of an enabled step; ``state`` is left untouched."""
    if not enabled(state, step, variant):
        raise StepNotEnabled(str(step))
    nxt = state.clone()
    execute(nxt, step)
    return nxt


def execute(state: GlobalState, step: Step) -> Effect:
    """Perform ``step`` in place.  The caller guarantees it is enabled."""
    sends: list[Send] = []
    net = state.net
    kind = step.kind
    K = state.model.K

    def send(key: str, src: int, dst: int, value: Any = None) -> None:
        if value is None:
            net.send_void(key, src, dst)
        else:
            net.send_valued(key, src, dst, value)
        sends.append((key, src, dst, value))

    if kind == SITE:
        s, q = step.actor, step.peer
        k = net.consume(step.key, q, s)
        lst = state.sites[s]
        if step.key == ASKLIST:
            if k > lst.get(q, 0):
                lst[q] = k
            send(ANSWER, s, q, frozenset(r for r, lvl in lst.items() if lvl > K - k))
        else:
            if k:
                lst[q] = k
            else:
                lst.pop(q, None)
            send(DONE, s, q)
        return Effect(k, sends)

    p = step.actor
    ps = state.procs[p]
    consumed = None

    if kind == FORWARD:
        line = step.line
        if line == 22:
            need = state.model.site_levels(ps.job)
            ps.curlist = {s for s, lvl in enumerate(need) if lvl > 0}
            for s in sorted(ps.curlist):
                send(ASKLIST, p, s, need[s])
            ps.pc = 23
        elif line == 23:
            for q in sorted(ps.pack):
                send(HELLO, p, q)
            ps.pc = 24
        elif line == 24:
            job = ps.job
            ps.prio = {q for q, cj in ps.copy.items()
                       if q not in ps.after and not compatible(job, cj, K)}
            ps.pc = 25
        elif line == 25:
            job = ps.job
            ps.nbh0 = set(ps.nbh)
            for q in sorted(ps.nbh):
                send(NOTIFY, p, q, job)
            ps.need = {q for q in ps.nbh
                       if p < q or (q in ps.away and not compatible(job, ps.copy.get(q, NONE), K))}
            ps.pc = 26
        elif line == 26:
            ps.pc = 27
        elif line == 27:
            ps.pc = 28
        elif line == 28:
            for q in sorted(ps.nbh):
                send(WITHDRAW, p, q)
            ps.wack = set(ps.nbh)
            ps.job = NONE
            ps.nbh = set()
            ps.nbh0 = set()
            ps.pc = 21
        else:
            raise StepNotEnabled(str(step))

    elif kind == RECV:
        q, key = step.peer, step.key
        consumed = net.consume(key, q, p)
        if key == NOTIFY:
            if consumed:
                ps.copy[q] = consumed
            else:
                ps.copy.pop(q, None)
            if q < p:
                ps.prom.add(q)
        elif key == WITHDRAW:
            ps.after.add(q)
            ps.prio.discard(q)
            if q < p:
                ps.away.discard(q)
                ps.need.discard(q)
        elif key == ACK:
            ps.wack.discard(q)
        elif key == GRA:
            ps.need.discard(q)
        elif key == HELLO:
            send(WELCOME, p, q, ps.job if ps.pc >= 26 and q not in ps.nbh else NONE)
            if ps.pc >= 23:
                ps.nbh.add(q)
        elif key == WELCOME:
            ps.pack.discard(q)
            if consumed:
                ps.copy[q] = consumed

    elif kind == AFTER:
        q = step.peer
        send(ACK, p, q)
        ps.after.discard(q)
        ps.copy.pop(q, None)

    elif kind == PROM:
        q = step.peer
        send(GRA, p, q)
        ps.away.add(q)
        ps.prom.discard(q)
        if ps.pc == 26 and not compatible(ps.job, ps.copy.get(q, NONE), K):
            ps.need.add(q)

    elif kind == LISTEN:
        s, key = step.peer, step.key
        consumed = net.consume(key, s, p)
        if key == ANSWER:
            others = consumed - {p}
            ps.nbh |= others
            need = state.model.site_levels(ps.job)[s]
            if ps.fun[s] < need:
                ps.pack |= others
                ps.fun[s] = need
            ps.curlist.discard(s)
        else:
            ps.reglist.discard(s)

    elif kind == LOWERING:
        if step.line == 32:
            news, fun = ps.news, ps.fun
            ps.reglist = {s for s in range(len(fun)) if news[s] != fun[s]}
            ps.fun = list(news)
            for s in sorted(ps.reglist):
                send(LOWER, p, s, news[s])
            ps.pcr = 33
        else:
            ps.pcr = 31

    elif kind == ENV21:
        ps.job = step.value
        ps.pc = 22

    elif kind == ENV31:
        ps.news = list(step.value)
        ps.pcr = 32

    elif kind == ABORT:
        line = step.line
        if line == 26:
            for q in sorted(ps.nbh):
                send(WITHDRAW, p, q)
            ps.wack = set(ps.nbh)
            ps.need = set()
            ps.nbh0 = set()
        elif line == 25:
            ps.prio = set()
        ps.job = NONE
        ps.nbh = set()
        ps.pc = 21

    else:
        raise StepNotEnabled(str(step))

    return Effect(consumed, sends)


def send_targets(step: Step) -> tuple[str, int] | None:
    """(key, receiving process) of the process-bound message a triggered step sends.

    Only one triggered alternative per kind sends to a process, and it
    always targets the step's peer, so this is read off the step label.
    """
    kind = step.kind
    if kind == AFTER:
        return ACK, step.peer
    if kind == PROM:
        return GRA, step.peer
    if kind == RECV and step.key == HELLO:
        return WELCOME, step.peer
    if kind == SITE:
        return (ANSWER if step.key == ASKLIST else DONE), step.peer
    return None
