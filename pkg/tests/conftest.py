import pytest

from kellynet import builtin_policy, bundled_model, open_model

ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def record(number, title, passed, detail=""):
        ACCEPTANCE.append((number, title, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        mark = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{mark}] {number}. {title}  {detail}")


@pytest.fixture(scope="session")
def mm1():
    return bundled_model("mm1")


@pytest.fixture(scope="session")
def revisit():
    return bundled_model("revisit")


@pytest.fixture(scope="session")
def revisit_ps():
    return bundled_model("revisit_ps")


@pytest.fixture
def fcfs():
    return builtin_policy("fcfs")


@pytest.fixture
def tandem_route():
    """Type 1 visits node 1 then node 2."""
    return open_model([[1, 2]], [0.4])
