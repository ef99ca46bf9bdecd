import os

import numpy as np
import pytest

from tonelli_gl.finsler import FinslerSpec
from tonelli_gl.green import solve_green_base
from tonelli_gl.torus import TorusGrid

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def _isolated_output(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    old = {k: os.environ.get(k) for k in ("TONELLI_GL_OUT", "TONELLI_GL_CACHE")}
    os.environ["TONELLI_GL_OUT"] = str(root)
    os.environ["TONELLI_GL_CACHE"] = str(root / "cache")
    yield root
    for k, v in old.items():
        if v is None:
            os.environ.pop(k, None)
        else:
            os.environ[k] = v


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(1.0, 32)


@pytest.fixture(scope="session")
def table64():
    return solve_green_base(TorusGrid(1.0, 64), FinslerSpec.quadratic())


@pytest.fixture(scope="session")
def table32():
    return solve_green_base(TorusGrid(1.0, 32), FinslerSpec.quadratic())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
