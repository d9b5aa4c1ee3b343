import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from resalloc.job_model import Job, JobModel  # noqa: E402
from resalloc.protocol import initial_state  # noqa: E402

# filled by test_acceptance, printed at the end of the session
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=_criterion_key):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


def _criterion_key(name: str):
    head = name.split()[1] if name.startswith("criterion") else name
    digits = "".join(ch for ch in head if ch.isdigit())
    return (int(digits or 0), head)


@pytest.fixture
def model1():
    return JobModel(K=1, resource_count=1, site_count=1, loc=(0,))


@pytest.fixture
def model2():
    return JobModel(K=2, resource_count=2, site_count=1, loc=(0, 0))


def fresh(model, n=2):
    return initial_state(model, n)


J1 = Job({0: 1})
J2 = Job({0: 2})
