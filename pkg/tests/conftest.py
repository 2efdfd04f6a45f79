import pytest

from recurrence_ldp.acceptance import instance
from recurrence_ldp.dynamics import MarkovMapSpec, build_map
from recurrence_ldp.rates import rate_profile
from recurrence_ldp.thermo import Potential, gibbs_measure


@pytest.fixture(scope="session")
def i1():
    return instance("I1")


@pytest.fixture(scope="session")
def i2():
    return instance("I2")


@pytest.fixture(scope="session")
def i3():
    return instance("I3")


@pytest.fixture(scope="session")
def golden_map():
    spec = MarkovMapSpec(
        branches=((0, "3/5", "5/3", 0, 1), ("3/5", 1, "3/2", 0, "3/5")),
        transition=((1, 1), (1, 0)),
    )
    from recurrence_ldp.dynamics import Branch

    spec = MarkovMapSpec(tuple(Branch.make(*b) for b in spec.branches), spec.transition)
    return build_map(spec)


@pytest.fixture(scope="session")
def golden(golden_map):
    return gibbs_measure(golden_map, Potential([0.0, 0.0]))


@pytest.fixture(scope="session")
def p1(i1):
    return rate_profile(i1)


@pytest.fixture(scope="session")
def p2(i2):
    return rate_profile(i2)


@pytest.fixture(scope="session")
def p3(i3):
    return rate_profile(i3)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k].line())
