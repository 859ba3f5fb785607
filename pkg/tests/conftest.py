import numpy as np
import pytest

from mhdcavity.assembly import DimensionlessGroups, cavity_conditions
from mhdcavity.geometry import CavityGeometry, rectangle_domain
from mhdcavity.mesh import generate_mesh, structured_rectangle_mesh
from mhdcavity.solver import SolverOptions, solve_steady


@pytest.fixture(scope="session")
def cavity():
    return CavityGeometry()


@pytest.fixture(scope="session")
def cavity_mesh(cavity):
    return generate_mesh(cavity, 0.15, 0.06)


@pytest.fixture(scope="session")
def square_mesh():
    return structured_rectangle_mesh(6, 6)


@pytest.fixture(scope="session")
def mild_groups():
    return DimensionlessGroups(Re=100.0, Pr=1.0, Ri=0.5, Ha=10.0, Br=0.5, Le=1.0)


@pytest.fixture(scope="session")
def cavity_solution(cavity_mesh, mild_groups):
    return solve_steady(cavity_mesh, mild_groups, SolverOptions(), cavity_conditions())


@pytest.fixture(scope="session")
def lid_mesh():
    return generate_mesh(rectangle_domain(), 0.1, 0.04)


@pytest.fixture(scope="session")
def lid_solution(lid_mesh):
    g = DimensionlessGroups(Re=100.0, Pr=0.71, Ri=0.0, Ha=0.0, Br=0.0, Le=1.0)
    return solve_steady(lid_mesh, g, SolverOptions(), cavity_conditions())


def edge_use_counts(tris):
    e = np.sort(np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
