import numpy as np
import pytest

from mrcfie.mesh import TriMesh, build_connectivity, generate_primitive, icosphere
from mrcfie.operators import RwgSpace


def space_of(mesh: TriMesh) -> RwgSpace:
    return RwgSpace(mesh, build_connectivity(mesh))


@pytest.fixture(scope="session")
def cube1():
    return generate_primitive("cube", 1.0, 1.0)


@pytest.fixture(scope="session")
def cube4():
    return generate_primitive("cube", 1.0, 0.25)


@pytest.fixture(scope="session")
def sphere2():
    return icosphere(0.5, 2)


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(0.5, 3)


@pytest.fixture(scope="session")
def rhombus():
    """Two triangles sharing the edge (0,0,0)-(1,0,0): one RWG."""
    v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.4, 0.8, 0], [0.6, -0.7, 0]])
    return TriMesh(v, np.array([[0, 1, 2], [1, 0, 3]]))


ACCEPTANCE: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Store and print one acceptance verdict."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
