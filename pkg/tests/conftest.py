import sys

import numpy as np
import pytest

from jacobipga import geodesic
from jacobipga import manifold as mf

P3 = np.array([0.0, 0.0, 1.0])
P5 = np.array([0.0, 0.0, 0.0, 0.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_tangent(M, q, rng, norm=1.0):
    """Tangent vector at ``q`` with metric norm ``norm``."""
    v = M.tangent_project(q, rng.standard_normal(M.coord_dim))
    return norm * v / M.norm(q, v)


def random_point(M, q, rng, radius=0.5):
    return geodesic.exp(M, q, random_tangent(M, q, rng, radius * rng.uniform(0.2, 1.0)))


def base_point(M):
    if M.coord_dim == 3:
        return P3
    if M.coord_dim == 5:
        return P5
    if M.name == "sphere_param":
        return np.array([1.1, 0.4])
    return np.zeros(M.coord_dim)


def builtins():
    return [mf.surface_sc(1.0), mf.surface_sc(-1.0), mf.surface_sc(0.0), mf.m4(),
            mf.builtin("sphere_param"), mf.builtin("flat", [2])]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
