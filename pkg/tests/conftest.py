import random

import pytest

from dimerlab.doubledimer import default_poles
from dimerlab.lattice import DomainError, build_rectangle, random_domain

SUITE_SEED = 20240501
N_RANDOM = 60

_criteria: dict = {}


def _suite():
    # stratified by size so that small dominoes do not crowd out larger shapes
    rng = random.Random(SUITE_SEED)
    doms, seen = [], set()
    sizes = (4, 6, 8, 10, 12)
    while len(doms) < N_RANDOM:
        s = sizes[len(doms) % len(sizes)]
        d = random_domain(rng, max_squares=s, min_squares=s, balanced=True, tileable=True)
        if d.squares not in seen:
            seen.add(d.squares)
            doms.append(d)
    rects = [build_rectangle(w, h) for w, h in ((2, 2), (2, 3), (2, 4), (4, 4))]
    return doms, rects


_DOMS, _RECTS = _suite()


@pytest.fixture(scope="session")
def random_suite():
    """Randomized tileable balanced domains of at most 12 squares (fixed seed)."""
    return list(_DOMS)


@pytest.fixture(scope="session")
def rect_suite():
    return list(_RECTS)


@pytest.fixture(scope="session")
def even_case_suite():
    """(domain, u0, v0) for every suite domain admitting a default pole pair."""
    out = []
    for d in _DOMS + _RECTS + [build_rectangle(4, 2), build_rectangle(6, 4), build_rectangle(4, 6)]:
        try:
            u0, v0 = default_poles(d)
        except DomainError:
            continue
        out.append((d, u0, v0))
    return out


# -- acceptance summary -------------------------------------------------------

def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    num = int(name.split("_")[2])
    prev = _criteria.get(num, True)
    _criteria[num] = prev and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if _criteria[num] else 'FAIL'}")
