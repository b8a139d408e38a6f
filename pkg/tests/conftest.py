import numpy as np
import pytest

from phlab import anosov, mane

ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def anosov_spec():
    return anosov()


@pytest.fixture(scope="session")
def mane_spec():
    return mane()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def root_oracle():
    """Eigenvalues of the default matrix by bisection on its characteristic cubic."""
    def p(t):
        return t ** 3 - 5 * t ** 2 + 6 * t - 1

    def bisect(lo, hi):
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if (p(lo) < 0) == (p(mid) < 0):
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    return np.array([bisect(0.0, 0.5), bisect(1.0, 2.0), bisect(3.0, 4.0)])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if report.when == "call":
        _record(key, report.passed, detail)
    elif report.failed:
        _record(key, False, f"{report.when} error")


def _record(key, ok, detail):
    # parametrized criteria pass only if every case passes
    if key in ACCEPTANCE_RESULTS:
        prev_ok, prev_detail = ACCEPTANCE_RESULTS[key]
        ok, detail = prev_ok and ok, f"{prev_detail} | {detail}"
    ACCEPTANCE_RESULTS[key] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
