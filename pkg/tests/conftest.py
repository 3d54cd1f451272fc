import pytest

from slelab.numerics import make_params


@pytest.fixture(params=[2.0, 8 / 3, 3.0, 4.0], ids=["k2", "k8_3", "k3", "k4"])
def params(request):
    return make_params(request.param)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs")

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
