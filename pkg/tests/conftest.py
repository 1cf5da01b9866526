import math
import time
from pathlib import Path

import numpy as np
import pytest

from heatfb.continuation import anneal, default_schedule
from heatfb.scene import Bump, Disk, Interval, SceneSpec, build_scene

GOLDEN = Path(__file__).parent / "golden"

# closed-form tangent-line minimisation (mpmath, 30 digits)
GOLDEN_1D_T = 0.33568721568989943
GOLDEN_1D_E = 0.66979071938606827
GOLDEN_1D_A = 0.021092863520026778
RADIAL_T = 0.58956098215782874
RADIAL_E = 7.4249580780914812
RADIAL_Q = 0.42527835263036308


def golden_1d_spec(nodes=513):
    return SceneSpec((-2.0,), (2.0,), (nodes,), Interval(0.0, 1.0), (Bump((0.0,), 0.5, 1.0),), 1.0)


def radial_spec(nodes=256, half=4.0):
    return SceneSpec((-half, -half), (half, half), (nodes, nodes), Disk((0.0, 0.0), 1.0),
                     (Bump((0.0, 0.0), 0.5, 3.0),), 3.0 * math.pi)


def trivial_spec(dim=2, nodes=33):
    if dim == 1:
        return SceneSpec((-2.0,), (2.0,), (nodes,), Interval(0.0, 1.0), (), 1.0)
    return SceneSpec((-2.0, -2.0), (2.0, 2.0), (nodes, nodes), Disk((0.0, 0.0), 1.0), (), 1.0)


class Timed:
    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


def _anneal(spec, epsilon):
    t0 = time.perf_counter()
    s = build_scene(spec)
    res = anneal(s, default_schedule(s, epsilon))
    return s, Timed(res, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def golden_scene():
    return build_scene(golden_1d_spec())


@pytest.fixture(scope="session")
def golden_anneal():
    return _anneal(golden_1d_spec(), 0.1)


@pytest.fixture(scope="session")
def radial_anneal():
    return _anneal(radial_spec(), 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# ---------------------------------------------------------------- acceptance summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and rep.when != "call":
        detail = f"{rep.when} error"
    _CRITERIA[mark.args[0]] = (mark.args[1], rep.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}  {detail}")
