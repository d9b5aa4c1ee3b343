import pytest

from conftest import J1, fresh
from resalloc.invariants import CATALOGUE, INVARIANT_IDS, check, check_all, disabled_after, disabled_prom
from resalloc.job_model import Job
from resalloc.simulator import ScenarioConfig, Simulator, explore

EXPECTED_IDS = (
    ["Rq0", "Rq1", "Rq2", "Rq1a", "Rq2a"]
    + [f"Iq{i}" for i in range(9)] + ["Iq2a", "Iq7a"]
    + [f"Jq{i}" for i in range(8)]
    + [f"Kq{i}" for i in range(8)] + ["Kq0a"]
    + [f"Lq{i}" for i in range(9)]
    + [f"Mq{i}" for i in range(4)] + ["Mq0a"]
    + [f"Nq{i}" for i in range(5)]
    + [f"Waq{i}" for i in range(4)]
)


def test_catalogue_is_complete():
    assert set(INVARIANT_IDS) == set(EXPECTED_IDS)
    assert len(INVARIANT_IDS) == len(EXPECTED_IDS)


@pytest.mark.parametrize("inv", EXPECTED_IDS)
def test_initial_state_satisfies(inv, model1):
    assert check(fresh(model1, 3), inv) is None


def test_rq0_counterexample(model1):
    st = fresh(model1)
    for p in st.procs:
        p.pc, p.job = 27, J1
    v = check(st, "Rq0", step=5)
    assert v is not None and v.witness == {"q": 0, "r": 1} and v.step == 5
    assert "Rq0" in str(v)


def test_disjoint_jobs_in_cs_are_fine(model1):
    m = type(model1)(K=1, resource_count=2, site_count=1, loc=(0, 0))
    st = fresh(m)
    st.procs[0].pc, st.procs[0].job = 27, Job({0: 1})
    st.procs[1].pc, st.procs[1].job = 27, Job({1: 1})
    assert check(st, "Rq0") is None


def test_long_seeded_run_is_clean():
    for cfg in (
        ScenarioConfig(process_count=2, K=1, arrival_prob=0.7, max_steps=10_000, seed=42),
        ScenarioConfig(process_count=4, site_count=2, resource_count=3, K=2, arrival_prob=0.4,
                       abort_prob={24: 0.05, 25: 0.05, 26: 0.05}, lowering="random",
                       lowering_prob=0.1, max_steps=10_000, seed=42, hash_every=0),
    ):
        trace = Simulator(cfg).run()
        assert trace.status == "completed"


def test_phantom_gra_breaks_accounting():
    cfg = ScenarioConfig(process_count=2, K=1, offers={0: [J1], 1: [J1]})
    states = []
    explore(cfg, visit=lambda s: states.append(s.clone()) if len(states) < 300 else None)
    hits = 0
    for st in states[::7]:
        st.net.send_void("gra", 1, 0)
        bad = {v.invariant for v in check_all(st)}
        assert "Jq2" in bad
        hits += 1
    assert hits > 10


def test_disabled_after_and_prom(model1):
    st = fresh(model1)
    for q in range(2):
        for r in range(2):
            assert disabled_after(st, q, r) and disabled_prom(st, q, r)
    p = st.procs[0]
    p.after, p.copy = {1}, {1: J1}
    assert not disabled_after(st, 0, 1)
    p.after, p.copy = {1}, {}
    assert disabled_after(st, 0, 1)
    p.pc, p.job, p.prom, p.copy = 27, J1, {1}, {1: J1}
    assert disabled_prom(st, 0, 1)
    p.pc = 26
    assert not disabled_prom(st, 0, 1)


def test_lq7_reads_the_request_channel(model1):
    # a pending asklist excuses a missing registration
    st = fresh(model1)
    p = st.procs[0]
    p.pc, p.job, p.curlist = 23, J1, {0}
    st.net.send_valued("asklist", 0, 0, 1)
    assert check(st, "Lq7") is None
    st.net.consume("asklist", 0, 0)
    assert check(st, "Lq7") is not None


def test_every_check_returns_witness_dict(model1):
    st = fresh(model1)
    st.procs[0].pc = 27            # job none at 27 breaks Iq5
    bad = check_all(st)
    assert "Iq5" in {v.invariant for v in bad}
    for v in bad:
        assert isinstance(v.witness, dict) and v.to_dict()["invariant"] in CATALOGUE
