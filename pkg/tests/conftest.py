import pytest

from tunnelghost.harness.scenarios import curved_tunnel, straight_tunnel


@pytest.fixture(scope="session")
def straight():
    return straight_tunnel()


@pytest.fixture(scope="session")
def curved():
    return curved_tunnel()


_ACCEPTANCE: dict[str, object] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _ACCEPTANCE[report.nodeid] = report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, rep in sorted(_ACCEPTANCE.items()):
        name = nodeid.split("::", 1)[1]
        values = ", ".join(f"{k}={v}" for k, v in rep.user_properties)
        status = "PASS" if rep.passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {values}")
