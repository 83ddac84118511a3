import numpy as np
import pytest

from kinemix.collision import CollisionTensor, build_linearized
from kinemix.mixture import MixtureParams, VelocityGrid, build_basis
from kinemix.transport import Operators


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("tensor-cache")


@pytest.fixture(scope="session")
def params2():
    return MixtureParams(np.array([1.0, 2.0]), np.array([1.0, 0.5]), 1.0)


@pytest.fixture(scope="session")
def grid8():
    return VelocityGrid(8, 5.0)


@pytest.fixture(scope="session")
def tensor8(params2, grid8, cache_dir):
    return CollisionTensor.build(params2, grid8, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def basis8(params2, grid8):
    return build_basis(params2, grid8)


@pytest.fixture(scope="session")
def linear8(params2, grid8, tensor8, basis8):
    L = build_linearized(params2, grid8, tensor8)
    L.set_kernel(basis8)
    return L


@pytest.fixture(scope="session")
def ops8(params2, grid8, cache_dir):
    return Operators.build(params2, grid8, cache_dir=cache_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines collected during the run and repeated in the terminal summary
ACCEPTANCE = {}


@pytest.fixture
def accept():
    def record(n: int, title: str, passed: bool, detail: str = ""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {n}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE[n] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
