import pytest

from conftest import J1, J2, fresh
from resalloc.job_model import NONE, Job, JobModel
from resalloc.network import ANSWER, ASKLIST, LOWER
from resalloc.protocol import (
    Step,
    StepNotEnabled,
    Variant,
    abort,
    after,
    apply,
    enabled,
    enabled_steps,
    env21,
    env31,
    forward,
    listen,
    lower,
    nonenv_steps,
    prom,
    recv,
    site_step,
)
from resalloc.simulator import FiniteWorkload


def test_initial_state_has_only_environment_steps(model1):
    st = fresh(model1)
    assert nonenv_steps(st) == []
    wl = FiniteWorkload({0: [J1]}, lowering="zero")
    got = enabled_steps(st, wl)
    assert env21(0, J1) in got
    assert {s.kind for s in got} == {"Env21", "Env31"}
    assert all(s.step_class == "env" for s in got)


def test_forward_26_waits_for_need(model1):
    st = fresh(model1)
    p = st.procs[0]
    p.pc, p.job, p.need = 26, J1, {1}
    assert not enabled(st, forward(0, 26))
    p.need = set()
    nxt = apply(st, forward(0, 26))
    assert nxt.procs[0].pc == 27
    before = st.canonical()
    nxt.procs[0].pc = 26
    assert nxt.canonical() == before


def test_abort24_with_pending_acks(model1):
    st = fresh(model1)
    p = st.procs[0]
    p.pc, p.job, p.wack = 24, J1, {1}
    assert enabled(st, abort(0, 24))
    assert not enabled(st, forward(0, 24))
    nxt = apply(st, abort(0, 24))
    assert nxt.procs[0].pc == 21 and nxt.procs[0].job == NONE
    assert nxt.procs[0].wack == {1}


def test_abort26_only_without_higher_need(model1):
    st = fresh(model1, 3)
    p = st.procs[1]
    p.pc, p.job, p.nbh, p.nbh0, p.need = 26, J1, {0, 2}, {0, 2}, {2}
    assert not enabled(st, abort(1, 26))
    p.need = {0}
    nxt = apply(st, abort(1, 26))
    q = nxt.procs[1]
    assert (q.pc, q.job, q.nbh, q.nbh0, q.need, q.wack) == (21, NONE, set(), set(), set(), {0, 2})
    assert nxt.net.count("withdraw", 1, 0) == 1 and nxt.net.count("withdraw", 1, 2) == 1


def test_recv_withdraw_from_lower(model1):
    st = fresh(model1)
    p = st.procs[1]
    p.pc, p.job = 25, J1
    p.away, p.need, p.prio = {0}, {0}, {0}
    st.net.send_void("withdraw", 0, 1)
    nxt = apply(st, recv(1, 0, "withdraw"))
    q = nxt.procs[1]
    assert q.after == {0} and not q.prio and not q.away and not q.need


def test_site_answer_uses_k_complement(model2):
    st = fresh(model2, 3)
    st.sites[0] = {1: 2}
    st.net.send_valued(ASKLIST, 2, 0, 1)
    nxt = apply(st, site_step(0, 2, ASKLIST))
    assert nxt.sites[0] == {1: 2, 2: 1}
    assert nxt.net.slot(ANSWER, 0, 2) == frozenset({1})


def test_site_lower_resets_entry(model2):
    st = fresh(model2, 2)
    st.sites[0] = {1: 2}
    st.net.send_valued(LOWER, 1, 0, 0)
    nxt = apply(st, site_step(0, 1, LOWER))
    assert nxt.sites[0] == {}
    assert nxt.net.count("done", 0, 1) == 1


def test_one_ack_gives_one_receive(model1):
    st = fresh(model1)
    st.procs[0].pc, st.procs[0].job, st.procs[0].wack = 22, J1, {1}
    st.net.send_void("ack", 1, 0)
    got = [s for s in nonenv_steps(st) if s.kind == "Recv"]
    assert got == [recv(0, 1, "ack")]


def test_cs_exit_always_enabled(model1):
    st = fresh(model1)
    st.procs[0].pc, st.procs[0].job = 27, J1
    assert forward(0, 27) in nonenv_steps(st)


def test_step_classes():
    kinds = {
        "env": [env21(0, J1), env31(0, [0]), abort(0, 24), abort(0, 25), abort(0, 26)],
        "fwd": [forward(0, l) for l in range(22, 29)],
        "low": [lower(0, 32), lower(0, 33)],
        "trig": [recv(0, 1, k) for k in ("notify", "withdraw", "ack", "gra", "hello", "welcome")]
        + [after(0, 1), prom(0, 1), listen(0, 0, "answer"), listen(0, 0, "done"),
           site_step(0, 1, "asklist"), site_step(0, 1, "lower")],
    }
    sizes = {c: len(v) for c, v in kinds.items()}
    assert sizes == {"env": 5, "fwd": 7, "low": 2, "trig": 12}
    for c, steps in kinds.items():
        assert all(s.step_class == c for s in steps)


def test_apply_rejects_disabled_and_is_pure(model1):
    st = fresh(model1)
    with pytest.raises(StepNotEnabled):
        apply(st, forward(0, 22))
    before = st.canonical()
    a = apply(st, env21(0, J1))
    b = apply(st, env21(0, J1))
    assert st.canonical() == before
    assert a == b


def test_env21_needs_real_job(model1):
    st = fresh(model1)
    assert not enabled(st, env21(0, NONE))


def test_env31_bounded_by_fun(model2):
    st = fresh(model2)
    st.procs[0].fun = [2]
    assert enabled(st, env31(0, [1]))
    assert not enabled(st, env31(0, [3]))
    assert not enabled(st, env31(0, [0, 0]))


def test_prio_filters_known_conflicts(model1):
    st = fresh(model1, 4)
    p = st.procs[0]
    p.pc, p.job = 24, J1
    p.copy = {1: J1, 2: J1, 3: Job({0: 1})}
    p.after = {2}
    nxt = apply(st, forward(0, 24))
    assert nxt.procs[0].prio == {1, 3}


def test_line25_notifies_and_computes_need(model1):
    st = fresh(model1, 3)
    p = st.procs[1]
    p.pc, p.job, p.nbh = 25, J1, {0, 2}
    p.away, p.copy = {0}, {0: J1}
    nxt = apply(st, forward(1, 25))
    q = nxt.procs[1]
    assert q.nbh0 == {0, 2} and q.need == {0, 2} and q.pc == 26
    assert nxt.net.slot("notify", 1, 0) == J1 and nxt.net.slot("notify", 1, 2) == J1


def test_prom_guard_and_variants(model1):
    st = fresh(model1)
    p = st.procs[1]
    p.pc, p.job, p.prom, p.copy = 27, J1, {0}, {0: J1}
    assert not enabled(st, prom(1, 0))
    assert enabled(st, prom(1, 0), Variant(prom_unguarded=True))
    p.pc = 26
    assert enabled(st, prom(1, 0))
    assert not enabled(st, prom(1, 0), Variant(prom_drop_pc_disjunct=True))
    nxt = apply(st, prom(1, 0))
    assert nxt.procs[1].need == {0} and nxt.procs[1].away == {0}
    assert nxt.net.count("gra", 1, 0) == 1


def test_line25_guard_variant(model1):
    st = fresh(model1)
    st.procs[0].pc, st.procs[0].job, st.procs[0].prio = 25, J1, {1}
    assert not enabled(st, forward(0, 25))
    assert enabled(st, forward(0, 25), Variant(skip_prio_guard=True))


def test_hello_welcome(model1):
    st = fresh(model1)
    p = st.procs[0]
    p.pc, p.job = 26, J1
    st.net.send_void("hello", 1, 0)
    nxt = apply(st, recv(0, 1, "hello"))
    assert nxt.net.slot("welcome", 0, 1) == J1
    assert nxt.procs[0].nbh == {1}
    # already a neighbour: the welcome is a bare acknowledgement
    nxt.net.consume("welcome", 0, 1)
    nxt.net.send_void("hello", 1, 0)
    again = apply(nxt, recv(0, 1, "hello"))
    assert again.net.slot("welcome", 0, 1) == NONE
    # a process before line 23 answers but does not adopt the neighbour
    st2 = fresh(model1)
    st2.net.send_void("hello", 1, 0)
    out = apply(st2, recv(0, 1, "hello"))
    assert out.net.slot("welcome", 0, 1) == NONE and out.procs[0].nbh == set()
    r = out.procs[1]
    r.pc, r.job, r.pack = 24, J1, {0}
    fin = apply(out, recv(1, 0, "welcome"))
    assert fin.procs[1].pack == set() and fin.procs[1].copy == {}


def test_registration_listen(model2):
    st = fresh(model2, 3)
    p = st.procs[0]
    p.pc, p.job, p.curlist = 23, J2, {0}
    st.net.send_valued(ANSWER, 0, 0, frozenset({0, 1, 2}))
    nxt = apply(st, listen(0, 0, ANSWER))
    q = nxt.procs[0]
    assert q.nbh == {1, 2} and q.pack == {1, 2} and q.fun == [2] and not q.curlist


def test_lowering_thread(model2):
    st = fresh(model2)
    p = st.procs[0]
    p.fun = [2]
    st.sites[0] = {0: 2}
    st = apply(st, env31(0, [1]))
    assert st.procs[0].pcr == 32
    st = apply(st, lower(0, 32))
    assert st.procs[0].reglist == {0} and st.net.slot(LOWER, 0, 0) == 1
    assert not enabled(st, lower(0, 33))
    st = apply(st, site_step(0, 0, LOWER))
    st = apply(st, listen(0, 0, "done"))
    st = apply(st, lower(0, 33))
    assert st.procs[0].pcr == 31 and st.sites[0] == {0: 1}


def test_lower32_blocked_mid_registration(model2):
    st = fresh(model2)
    p = st.procs[0]
    p.pcr, p.news, p.fun = 32, [1], [2]
    p.pc, p.job = 23, J2
    assert not enabled(st, lower(0, 32))
    p.pc = 25
    assert not enabled(st, lower(0, 32))
    p.job = Job({0: 1})
    assert enabled(st, lower(0, 32))
    p.pc, p.job = 21, NONE
    assert enabled(st, lower(0, 32))


def test_forward22_waits_for_lowering(model1):
    st = fresh(model1)
    p = st.procs[0]
    p.pc, p.job, p.pcr = 22, J1, 33
    assert not enabled(st, forward(0, 22))
    p.pcr = 32
    assert enabled(st, forward(0, 22))


def test_step_str():
    assert str(forward(1, 25)) == "Forward(p1,25)"
    assert str(recv(0, 2, "gra")) == "Recv(p0<-p2,gra)"
    assert str(site_step(1, 0, "asklist")) == "Site(s1<-p0,asklist)"
    assert Step("Forward", 0, 22).process() == 0
    assert site_step(0, 1, "lower").process() is None
