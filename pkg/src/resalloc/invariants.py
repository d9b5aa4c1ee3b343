"""The constituent invariants and the safety predicates, as state checks.

Every entry of :data:`CATALOGUE` is a universally quantified formula over
processes ``q, r`` (and sites ``s`` where it mentions one), evaluated over
the whole finite universe.  A check returns the first witness that makes
the formula false, or ``None``.

Conventions used in the formulas below: ``at l`` means ``pc = l``,
``in {l..}`` means ``pc >= l``, a void channel is a count, a valued
channel is a payload or empty, and ``|b|`` is 1 if b holds and 0 otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

from .job_model import NONE, compatible
from .network import (
    ACK,
    ANSWER,
    ASKLIST,
    DONE,
    GRA,
    HELLO,
    LOWER,
    NOTIFY,
    VOID_KEYS,
    WELCOME,
    WITHDRAW,
)
from .protocol import GlobalState


@dataclass
class Violation:
    invariant: str
    witness: dict[str, int]
    step: int | None = None

    def to_dict(self) -> dict:
        return {"invariant": self.invariant, "witness": self.witness, "step": self.step}

    def __str__(self) -> str:
        w = ", ".join(f"{k}={v}" for k, v in self.witness.items())
        at = "" if self.step is None else f" at step {self.step}"
        return f"{self.invariant} violated ({w}){at}"


Check = Callable[[GlobalState], "dict[str, int] | None"]
CATALOGUE: dict[str, Check] = {}


def invariant(name: str):
    def register(fn: Check) -> Check:
        CATALOGUE[name] = fn
        return fn
    return register


class _View:
    """Shorthand accessors used by the formulas."""

    __slots__ = ("st", "procs", "void", "val", "K", "P", "S", "lv")

    def __init__(self, st: GlobalState):
        self.st = st
        self.procs = st.procs
        self.void = st.net.void
        self.val = st.net.valued
        self.K = st.model.K
        self.P = range(len(st.procs))
        self.S = range(st.model.site_count)
        self.lv = st.model.site_levels

    def n(self, key: str, a: int, b: int) -> int:
        return self.void.get((key, a, b), 0)

    def m(self, key: str, a: int, b: int):
        return self.val.get((key, a, b))

    def compat(self, q: int, r: int) -> bool:
        return compatible(self.procs[q].job, self.procs[r].job, self.K)

    def pairs(self) -> Iterator[tuple[int, int]]:
        for q in self.P:
            for r in self.P:
                yield q, r

    def d_after(self, q: int, r: int) -> bool:
        pq = self.procs[q]
        return r not in pq.after or pq.copy_of(r) == NONE

    def d_prom(self, q: int, r: int) -> bool:
        pq = self.procs[q]
        return r not in pq.prom or (pq.pc >= 27 and not compatible(pq.job, pq.copy_of(r), self.K))


def _b(x: bool) -> int:
    return 1 if x else 0


# -- functional requirements --------------------------------------------------

@invariant("Rq0")
def _rq0(st):
    v = _View(st)
    for q, r in v.pairs():
        if v.procs[q].pc == 27 and v.procs[r].pc == 27 and q != r and not v.compat(q, r):
            return {"q": q, "r": r}


@invariant("Rq1")
def _rq1(st):
    v = _View(st)
    for q, r in v.pairs():
        pq, pr = v.procs[q], v.procs[r]
        if pq.pc == 27 and pr.pc == 27 and q != r and r not in pq.nbh0 and not v.compat(q, r):
            return {"q": q, "r": r}


@invariant("Rq2")
def _rq2(st):
    v = _View(st)
    for q, r in v.pairs():
        pq, pr = v.procs[q], v.procs[r]
        if (pq.pc == 27 and pr.pc == 27 and r in pq.nbh0 and q in pr.nbh0
                and not v.compat(q, r)):
            return {"q": q, "r": r}


@invariant("Rq1a")
def _rq1a(st):
    v = _View(st)
    for q, r in v.pairs():
        pq, pr = v.procs[q], v.procs[r]
        if pq.pc >= 26 and pr.pc >= 26 and q != r and r not in pq.nbh0 and not v.compat(q, r):
            return {"q": q, "r": r}


@invariant("Rq2a")
def _rq2a(st):
    v = _View(st)
    for q, r in v.pairs():
        pq, pr = v.procs[q], v.procs[r]
        if (r in pq.nbh0 and q in pr.nbh0 and r not in pq.need and q not in pr.need
                and not v.compat(q, r)):
            return {"q": q, "r": r}


# -- outer protocol -----------------------------------------------------------

@invariant("Iq0")
def _iq0(st):
    for q, pq in enumerate(st.procs):
        if q in pq.nbh:
            return {"q": q}


@invariant("Iq1")
def _iq1(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        if r in pq.nbh0 and not (pq.pc >= 26 and r in pq.nbh):
            return {"q": q, "r": r}


@invariant("Iq2")
def _iq2(st):
    v = _View(st)
    for q, r in v.pairs():
        lhs = v.n(WITHDRAW, q, r) + _b(q in v.procs[r].after) + v.n(ACK, r, q)
        if lhs != _b(r in v.procs[q].wack):
            return {"q": q, "r": r}


@invariant("Iq2a")
def _iq2a(st):
    v = _View(st)
    for q, r in v.pairs():
        if v.procs[q].pc >= 25 and (v.n(WITHDRAW, q, r) != 0 or q in v.procs[r].after):
            return {"q": q, "r": r}


@invariant("Iq3")
def _iq3(st):
    for q, pq in enumerate(st.procs):
        if pq.pc >= 25 and pq.wack:
            return {"q": q}


@invariant("Iq4")
def _iq4(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        if r in pq.nbh0 and v.m(NOTIFY, q, r) is None and v.procs[r].copy_of(q) != pq.job:
            return {"q": q, "r": r}


@invariant("Iq5")
def _iq5(st):
    for q, pq in enumerate(st.procs):
        if (pq.job == NONE) != (pq.pc == 21):
            return {"q": q}


@invariant("Iq6")
def _iq6(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        msg = v.m(NOTIFY, q, r)
        if pq.pc >= 26 and msg is not None and msg != pq.job:
            return {"q": q, "r": r}


@invariant("Iq7")
def _iq7(st):
    v = _View(st)
    for q, r in v.pairs():
        pq, pr = v.procs[q], v.procs[r]
        ok = ((v.m(NOTIFY, q, r) is None and pr.copy_of(q) == NONE)
              or (pq.pc >= 26 and r in pq.nbh)
              or v.n(WITHDRAW, q, r) > 0
              or q in pr.after)
        if not ok:
            return {"q": q, "r": r}


@invariant("Iq7a")
def _iq7a(st):
    v = _View(st)
    for q, r in v.pairs():
        if v.procs[q].pc == 25 and (v.m(NOTIFY, q, r) is not None
                                    or v.procs[r].copy_of(q) != NONE):
            return {"q": q, "r": r}


@invariant("Iq8")
def _iq8(st):
    v = _View(st)
    for q, r in v.pairs():
        if v.m(NOTIFY, q, r) is not None and v.procs[r].copy_of(q) != NONE:
            return {"q": q, "r": r}


# -- inner protocol -----------------------------------------------------------

@invariant("Jq0")
def _jq0(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        if r in pq.need and not (pq.pc == 26 and r in pq.nbh0):
            return {"q": q, "r": r}


@invariant("Jq1")
def _jq1(st):
    v = _View(st)
    for q, r in v.pairs():
        if q in v.procs[r].prom and not q < r:
            return {"q": q, "r": r}


@invariant("Jq2")
def _jq2(st):
    v = _View(st)
    for q, r in v.pairs():
        if q < r:
            lhs = (_b(v.m(NOTIFY, q, r) is not None) + _b(q in v.procs[r].prom)
                   + v.n(GRA, r, q))
            if lhs != _b(r in v.procs[q].need):
                return {"q": q, "r": r}


@invariant("Jq3")
def _jq3(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        if q < r and r in pq.nbh0 and r not in pq.need and q not in v.procs[r].away:
            return {"q": q, "r": r}


@invariant("Jq4")
def _jq4(st):
    v = _View(st)
    for q, r in v.pairs():
        pr = v.procs[r]
        if (q in pr.away and q in pr.nbh0 and v.n(WITHDRAW, q, r) == 0
                and q not in pr.need and not v.compat(q, r)):
            return {"q": q, "r": r}


@invariant("Jq5")
def _jq5(st):
    v = _View(st)
    for q, r in v.pairs():
        if v.n(GRA, r, q) > 0 and q not in v.procs[r].away:
            return {"q": q, "r": r}


@invariant("Jq6")
def _jq6(st):
    v = _View(st)
    for q, r in v.pairs():
        if q in v.procs[r].away and not (q < r and v.m(NOTIFY, q, r) is None):
            return {"q": q, "r": r}


@invariant("Jq7")
def _jq7(st):
    v = _View(st)
    for q, r in v.pairs():
        if (q in v.procs[r].away and v.n(WITHDRAW, q, r) == 0
                and r not in v.procs[q].nbh0):
            return {"q": q, "r": r}


# -- registration messages ----------------------------------------------------

@invariant("Kq0")
def _kq0(st):
    v = _View(st)
    for q in v.P:
        for s in v.S:
            lhs = _b(v.m(ASKLIST, q, s) is not None) + _b(v.m(ANSWER, s, q) is not None)
            if lhs != _b(s in v.procs[q].curlist):
                return {"q": q, "s": s}


@invariant("Kq0a")
def _kq0a(st):
    v = _View(st)
    for q in v.P:
        for s in v.S:
            if v.m(ANSWER, s, q) is not None and v.procs[q].pc != 23:
                return {"q": q, "s": s}


@invariant("Kq1")
def _kq1(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        lhs = v.n(HELLO, q, r) + _b(v.m(WELCOME, r, q) is not None)
        if lhs != _b(pq.pc == 24 and r in pq.pack):
            return {"q": q, "r": r}


@invariant("Kq2")
def _kq2(st):
    v = _View(st)
    for q in v.P:
        pq = v.procs[q]
        for s in v.S:
            lhs = _b(v.m(LOWER, q, s) is not None) + v.n(DONE, s, q)
            if lhs != _b(pq.pcr == 33 and s in pq.reglist):
                return {"q": q, "s": s}


@invariant("Kq3")
def _kq3(st):
    for q, pq in enumerate(st.procs):
        if pq.pc != 23 and pq.curlist:
            return {"q": q}


@invariant("Kq4")
def _kq4(st):
    for q, pq in enumerate(st.procs):
        if q in pq.pack:
            return {"q": q}


@invariant("Kq5")
def _kq5(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        w = v.m(WELCOME, q, r)
        if pq.pc >= 26 and w is not None and w != NONE and w != pq.job:
            return {"q": q, "r": r}


def _welcome_blank(v: _View, q: int, r: int) -> bool:
    w = v.m(WELCOME, q, r)
    return w is None or w == NONE


@invariant("Kq6")
def _kq6(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        ok = (_welcome_blank(v, q, r) or v.n(WITHDRAW, q, r) > 0
              or q in v.procs[r].after or (pq.pc >= 26 and r in pq.nbh))
        if not ok:
            return {"q": q, "r": r}


@invariant("Kq7")
def _kq7(st):
    v = _View(st)
    for q, r in v.pairs():
        ok = _welcome_blank(v, q, r) or (v.m(NOTIFY, q, r) is None
                                         and v.procs[r].copy_of(q) == NONE)
        if not ok:
            return {"q": q, "r": r}


# -- registration safety ------------------------------------------------------

@invariant("Lq0")
def _lq0(st):
    for q, pq in enumerate(st.procs):
        if pq.pc in (23, 24) and pq.pcr not in (31, 32):
            return {"q": q}


@invariant("Lq1")
def _lq1(st):
    for q, pq in enumerate(st.procs):
        if any(n > f for n, f in zip(pq.news, pq.fun)):
            return {"q": q}


@invariant("Lq2")
def _lq2(st):
    v = _View(st)
    for q, r in v.pairs():
        pr = v.procs[r]
        if q in pr.prio and not (pr.pc == 25 and q not in pr.after):
            return {"q": q, "r": r}


@invariant("Lq3")
def _lq3(st):
    for q, pq in enumerate(st.procs):
        if pq.pc not in (23, 24) and pq.pack:
            return {"q": q}


@invariant("Lq4")
def _lq4(st):
    v = _View(st)
    for q in v.P:
        need = v.lv(v.procs[q].job)
        for s in v.S:
            a = v.m(ASKLIST, q, s)
            if a is not None and a != need[s]:
                return {"q": q, "s": s}


@invariant("Lq5")
def _lq5(st):
    v = _View(st)
    for q in v.P:
        for s in v.S:
            lo = v.m(LOWER, q, s)
            if lo is not None and lo != v.procs[q].fun[s]:
                return {"q": q, "s": s}


@invariant("Lq6")
def _lq6(st):
    v = _View(st)
    for q in v.P:
        pq = v.procs[q]
        need = v.lv(pq.job)
        for s in v.S:
            if not (pq.pc == 22 or s in pq.curlist or need[s] <= pq.fun[s]):
                return {"q": q, "s": s}


@invariant("Lq7")
def _lq7(st):
    v = _View(st)
    for q in v.P:
        pq = v.procs[q]
        need = v.lv(pq.job)
        for s in v.S:
            if (pq.pc >= 23 and v.m(ASKLIST, q, s) is None
                    and need[s] > st.sites[s].get(q, 0)):
                return {"q": q, "s": s}


@invariant("Lq8")
def _lq8(st):
    v = _View(st)
    for q in v.P:
        for s in v.S:
            if v.procs[q].fun[s] > st.sites[s].get(q, 0):
                return {"q": q, "s": s}


def _pending_answer_covers(v: _View, q: int, r: int, s: int) -> bool:
    if s not in v.procs[q].curlist:
        return False
    ans = v.m(ANSWER, s, q)
    return ans is None or r in ans


@invariant("Mq0")
def _mq0(st):
    v = _View(st)
    for q, r in v.pairs():
        pq, pr = v.procs[q], v.procs[r]
        if pq.pc < 23 or q == r or r in pq.nbh or v.n(HELLO, r, q) > 0:
            continue
        if pr.pc == 23 and q in pr.pack:
            continue
        need = v.lv(pq.job)
        for s in v.S:
            if need[s] + pr.fun[s] <= v.K or _pending_answer_covers(v, q, r, s):
                continue
            return {"q": q, "r": r, "s": s}


@invariant("Mq1")
def _mq1(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        if pq.pc < 23 or q == r or r in pq.nbh:
            continue
        nq, nr = v.lv(pq.job), v.lv(v.procs[r].job)
        for s in v.S:
            ans = v.m(ANSWER, s, r)
            if ans is None or q in ans:
                continue
            if nq[s] + nr[s] <= v.K or _pending_answer_covers(v, q, r, s):
                continue
            return {"q": q, "r": r, "s": s}


@invariant("Mq0a")
def _mq0a(st):
    v = _View(st)
    for q, r in v.pairs():
        pq, pr = v.procs[q], v.procs[r]
        if (pq.pc >= 24 and pr.pc >= 24 and not pr.pack and q != r
                and r not in pq.nbh and not v.compat(q, r)):
            return {"q": q, "r": r}


@invariant("Mq2")
def _mq2(st):
    v = _View(st)
    for q, r in v.pairs():
        pq = v.procs[q]
        if pq.pc >= 26 and r in pq.nbh and r not in pq.nbh0:
            if v.m(WELCOME, q, r) != pq.job and v.procs[r].copy_of(q) != pq.job:
                return {"q": q, "r": r}


@invariant("Mq3")
def _mq3(st):
    v = _View(st)
    for q, r in v.pairs():
        pq, pr = v.procs[q], v.procs[r]
        if (pq.pc >= 26 and pr.pc >= 25 and q != r and r not in pq.nbh0
                and q not in pr.prio and not v.compat(q, r)):
            return {"q": q, "r": r}


# -- progress support -------------------------------------------------------

@invariant("Nq0")
def _nq0(st):
    v = _View(st)
    for q, r in v.pairs():
        pr = v.procs[r]
        if q < r and q in pr.need and q not in pr.away:
            return {"q": q, "r": r}


@invariant("Nq1")
def _nq1(st):
    v = _View(st)
    for q, r in v.pairs():
        if q < r and q in v.procs[r].need and v.compat(q, r) and v.n(WITHDRAW, q, r) == 0:
            return {"q": q, "r": r}


@invariant("Nq2")
def _nq2(st):
    v = _View(st)
    for q, r in v.pairs():
        pr = v.procs[r]
        if (v.m(NOTIFY, q, r) is None and pr.copy_of(q) == NONE and _welcome_blank(v, q, r)
                and (q in pr.after or v.n(WITHDRAW, q, r) != 0)):
            return {"q": q, "r": r}


@invariant("Nq3")
def _nq3(st):
    v = _View(st)
    for q, r in v.pairs():
        if v.m(NOTIFY, q, r) == NONE:
            return {"q": q, "r": r}


@invariant("Nq4")
def _nq4(st):
    v = _View(st)
    for q, r in v.pairs():
        pr = v.procs[r]
        if q in pr.prio and compatible(pr.copy_of(q), pr.job, v.K):
            return {"q": q, "r": r}


# -- waiting invariants -----------------------------------------------------

@invariant("Waq0")
def _waq0(st):
    v = _View(st)
    for q, r in v.pairs():
        if (v.n(WITHDRAW, q, r) == 0 and v.n(ACK, r, q) == 0 and v.m(NOTIFY, q, r) is None
                and _welcome_blank(v, q, r) and v.d_after(r, q) and r in v.procs[q].wack):
            return {"q": q, "r": r}


@invariant("Waq1")
def _waq1(st):
    v = _View(st)
    for q, r in v.pairs():
        if r in v.procs[q].prio and v.n(WITHDRAW, r, q) == 0 and _welcome_blank(v, q, r):
            if not (v.procs[r].pc >= 26 and not v.compat(q, r)):
                return {"q": q, "r": r}


@invariant("Waq2")
def _waq2(st):
    v = _View(st)
    for q, r in v.pairs():
        if r < q and r in v.procs[q].need and v.n(WITHDRAW, r, q) == 0:
            if not (v.procs[r].pc >= 26 and not v.compat(q, r)):
                return {"q": q, "r": r}


@invariant("Waq3")
def _waq3(st):
    v = _View(st)
    for q, r in v.pairs():
        if (q < r and r in v.procs[q].need and v.n(GRA, r, q) == 0
                and v.m(NOTIFY, q, r) is None and v.d_prom(r, q)):
            if not (v.procs[r].pc >= 27 and not v.compat(q, r)):
                return {"q": q, "r": r}


INVARIANT_IDS: tuple[str, ...] = tuple(CATALOGUE)


def check(state: GlobalState, inv_id: str, step: int | None = None) -> Violation | None:
    witness = CATALOGUE[inv_id](state)
    if witness is None:
        return None
    return Violation(inv_id, witness, step)


def check_all(state: GlobalState, step: int | None = None,
              ids: tuple[str, ...] | None = None) -> list[Violation]:
    out = []
    for inv_id in ids or INVARIANT_IDS:
        witness = CATALOGUE[inv_id](state)
        if witness is not None:
            out.append(Violation(inv_id, witness, step))
    return out


def max_void_count(state: GlobalState) -> int:
    return max(state.net.void.values(), default=0)


def disabled_after(state: GlobalState, q: int, r: int) -> bool:
    return _View(state).d_after(q, r)


def disabled_prom(state: GlobalState, q: int, r: int) -> bool:
    return _View(state).d_prom(q, r)
