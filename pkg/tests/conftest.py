import sys

import numpy as np
import pytest

from hodgeheat.mesh import build_circle_mesh, build_icosphere, build_square_mesh


@pytest.fixture(scope="session")
def three_meshes():
    return {"square": build_square_mesh(8, 8), "circle": build_circle_mesh(64),
            "sphere": build_icosphere(2)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
