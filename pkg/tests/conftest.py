import sys
from pathlib import Path

import numpy as np
import pytest

from anisostokes.mesh import build_composite
from anisostokes.potentials import PotentialContext
from anisostokes.tensor import INNER, OUTER, from_regions, make_isotropic, random_symmetric_tensor

sys.path.insert(0, str(Path(__file__).parent))


def coarse_mesh(h=0.25):
    return build_composite(2, "square", 2.0, h, 0.5, outer_shape="ball")


def nonsymmetric_tensor(seed=3):
    rng = np.random.default_rng(seed)
    return from_regions(random_symmetric_tensor(2, rng), random_symmetric_tensor(2, rng), "random")


@pytest.fixture(scope="session")
def mesh2():
    return coarse_mesh()


@pytest.fixture(scope="session")
def iso():
    return make_isotropic(2, {INNER: 1.0 / 3.0, OUTER: 1.0})


@pytest.fixture(scope="session")
def nsa():
    return nonsymmetric_tensor()


@pytest.fixture(scope="session")
def ctx_cont(iso, mesh2):
    return PotentialContext(iso, mesh2, "continuous")


@pytest.fixture(scope="session")
def ctx_broken(iso, mesh2):
    return PotentialContext(iso, mesh2, "broken")


@pytest.fixture(scope="session")
def ctx_nsa(nsa, mesh2):
    return PotentialContext(nsa, mesh2, "broken")


# ------------------------------------------------------- acceptance report
_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    _CRITERIA[number] = (title, rep.passed, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, secs = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title} ({secs:.1f} s)")
