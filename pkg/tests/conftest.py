import numpy as np
import pytest

from lwelasto.mesh import BoxDomain, build_box_mesh
from lwelasto.space import build_space


@pytest.fixture(scope="session")
def cube3():
    return build_box_mesh(BoxDomain((0, 0, 0), (1, 1, 1), (3, 3, 3)))


@pytest.fixture(scope="session")
def cube2():
    return build_box_mesh(BoxDomain((0, 0, 0), (1, 1, 1), (2, 2, 2)))


@pytest.fixture(scope="session", params=[1, 2, 3, 4])
def space_any_degree(request, cube2):
    return build_space(cube2, request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        lines.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
