import pytest

from modalsr import build_direction_grid, build_hybrid, build_sma


@pytest.fixture(scope="session")
def grid3():
    return build_direction_grid(3)


@pytest.fixture(scope="session")
def hybrid():
    return build_hybrid()


@pytest.fixture(scope="session")
def sma64():
    return build_sma(64, 0.10)


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    print(f"\n[acceptance] {name}: {report.outcome.upper()}", flush=True)
