"""Expensive solves shared by the module tests and the acceptance suite."""

import pytest

from gmol.hyperfd import DecompositionSpec, hyper_solve
from gmol.operator import ProblemSpec, ProximalConfig
from gmol.oracle import fd2d_solve
from gmol.proximal import proximal_solve

SMALL_EPS = ProblemSpec(0.01)


@pytest.fixture(scope="session")
def compat_proximal():
    return proximal_solve(SMALL_EPS, 10, ProximalConfig(K=70), compat=True)


@pytest.fixture(scope="session")
def default_proximal():
    return proximal_solve(SMALL_EPS, 10, ProximalConfig(K=70), strict=True)


@pytest.fixture(scope="session")
def proximal_eps01_K30():
    return proximal_solve(ProblemSpec(0.1), 10, ProximalConfig(K=30), strict=True)


@pytest.fixture(scope="session")
def compat_hyper():
    return hyper_solve(SMALL_EPS, DecompositionSpec.listing(10, 30), compat=True)


@pytest.fixture(scope="session")
def default_hyper():
    return hyper_solve(SMALL_EPS, DecompositionSpec(10, 30))


@pytest.fixture(scope="session")
def oracle_small_eps():
    return fd2d_solve(SMALL_EPS, 300, 16, 0.0, 0.0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
