import pytest

from conftest import fresh
from resalloc.job_model import NONE, Job, JobModel, compatible, conflict, level_fn_leq, level_requirement


def test_two_exclusive_users_conflict():
    assert not compatible(Job({0: 1}), Job({0: 1}), 1)


@pytest.mark.parametrize("u", [NONE, Job({0: 1}), Job({0: 2, 3: 1})])
def test_none_is_compatible_with_everything(u):
    assert compatible(u, NONE, 2)
    assert compatible(NONE, u, 2)


def test_two_readers_share():
    assert compatible(Job({0: 1}), Job({0: 1}), 2)


def test_writer_excludes_reader():
    assert not compatible(Job({0: 2}), Job({0: 1}), 2)
    assert not compatible(Job({0: 1}), Job({0: 2}), 2)


def test_disjoint_resources_compatible():
    assert compatible(Job({0: 1}), Job({1: 1}), 1)


def test_conflict_relation(model1):
    st = fresh(model1)
    assert not conflict(0, 1, st)
    st.procs[0].job = Job({0: 1})
    st.procs[1].job = Job({0: 1})
    assert conflict(0, 1, st)
    # self-conflict follows from the formula
    assert conflict(0, 0, st)


def test_level_requirement():
    loc = (0, 0, 0)
    assert level_requirement(Job({1: 2, 2: 1}), 0, loc) == 2
    assert level_requirement(NONE, 0, loc) == 0
    assert level_requirement(Job({1: 1}), 1, (0, 0)) == 0


def test_site_levels_matches_level_requirement():
    m = JobModel(K=3, resource_count=4, site_count=3, loc=(0, 1, 1, 0))
    u = Job({0: 1, 1: 3, 2: 2, 3: 2})
    assert m.site_levels(u) == tuple(level_requirement(u, s, m.loc) for s in range(3))
    assert m.site_levels(u) == (2, 3, 0)


def test_level_fn_leq():
    assert level_fn_leq([1, 2], [1, 2])
    assert level_fn_leq([0, 0], [3, 1])
    assert not level_fn_leq([2], [1])


def test_job_equality_is_extensional():
    assert Job({0: 1, 1: 0}) == Job([(0, 1)])
    assert Job({}) == NONE
    assert hash(Job({2: 1, 0: 1})) == hash(Job([(0, 1), (2, 1)]))
    assert repr(NONE) == "none"
    assert not NONE and Job({0: 1})


def test_job_rejects_bad_entries():
    with pytest.raises(ValueError):
        Job({0: -1})
    with pytest.raises(ValueError):
        Job([(0, 1), (0, 2)])


def test_model_validation():
    with pytest.raises(ValueError):
        JobModel(K=0, resource_count=1, site_count=1, loc=(0,))
    with pytest.raises(ValueError):
        JobModel(K=1, resource_count=2, site_count=1, loc=(0,))
    with pytest.raises(ValueError):
        JobModel(K=1, resource_count=1, site_count=1, loc=(1,))
    m = JobModel(K=1, resource_count=1, site_count=1, loc=(0,))
    with pytest.raises(ValueError):
        m.check_job(Job({0: 2}))
    with pytest.raises(ValueError):
        m.check_job(Job({3: 1}))
