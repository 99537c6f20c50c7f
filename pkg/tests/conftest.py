import numpy as np
import pytest

from rwb.measures import DiscreteMeasure, WeightedMeasureSet


def random_measure(rng, n, d=2, scale=3.0, integer=False):
    X = rng.integers(0, 6, size=(n, d)).astype(float) if integer else rng.uniform(0, scale, (n, d))
    w = rng.random(n) + 0.05
    return DiscreteMeasure.normalized(X, w)


def random_dataset(rng, m, n, d=2, scale=3.0):
    sizes = rng.integers(1, n + 1, size=m)
    measures = tuple(random_measure(rng, int(k), d, scale) for k in sizes)
    return WeightedMeasureSet(measures, rng.random(m) + 0.2)


def random_ot(rng, n, k):
    a = rng.random(n) + 0.05
    b = rng.random(k) + 0.05
    return a / a.sum(), b / b.sum(), rng.uniform(0, 5, (n, k))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    prev = _ACCEPTANCE.get(number)
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    if prev is None or prev[1] == "PASS":
        _ACCEPTANCE[number] = (title, status, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, secs = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}  {status}  {title}  ({secs:.1f} s)")
