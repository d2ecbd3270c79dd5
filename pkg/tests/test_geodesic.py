import math

import numpy as np
import pytest

from jacobipga import geodesic
from jacobipga import manifold as mf
from jacobipga.errors import ChartExitError, InvalidInputError, NoConvergenceError

from conftest import P3, base_point, builtins, random_point, random_tangent


def test_exp_great_circle():
    x = geodesic.exp(mf.surface_sc(1.0), P3, [math.pi / 2, 0.0, 0.0])
    assert np.abs(x - [1.0, 0.0, 0.0]).max() < 1e-8


def test_exp_zero_vector():
    for M in builtins():
        q = base_point(M)
        assert np.array_equal(geodesic.exp(M, q, np.zeros(M.coord_dim)), q)


def test_exp_cylinder_unrolls():
    M = mf.surface_sc(0.0)
    a, b = 0.7, -1.3
    for t in (0.5, 1.0, 2.0):
        x = geodesic.exp(M, P3, [a, b, 0.0], t=t)
        assert np.abs(x - [a * t, math.sin(b * t), math.cos(b * t)]).max() < 1e-8


def test_exp_flat_is_straight():
    M = mf.builtin("flat", [3])
    q, v = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -0.7])
    tr = geodesic.exp_trajectory(M, q, v, 2.0)
    X = tr.states[:, :3]
    assert np.abs(X - (q + tr.times[:, None] * v)).max() < 1e-12


def test_trajectory_conservation(rng):
    M = mf.surface_sc(1.0)
    tr = geodesic.exp_trajectory(M, P3, [0.0, 2.0, 0.0], 2.5)
    assert np.abs(np.linalg.norm(tr.states[:, :3], axis=1) - 1).max() < 1e-9
    M = mf.surface_sc(-1.0)
    for _ in range(3):
        v = random_tangent(M, P3, rng, 1.5)
        tr = geodesic.exp_trajectory(M, P3, v, 5.0 / 1.5)
        X = tr.states[:, :3]
        assert max(abs(M.F(x)[0]) for x in X) < 1e-8
        # the x-equation gives the velocity as the tangent projection of p
        speed = [np.linalg.norm(M.tangent_project(x, p)) for x, p in zip(X, tr.states[:, 3:6])]
        assert np.abs(np.array(speed) - 1.5).max() < 1e-8


def test_chart_speed_conservation():
    M = mf.builtin("sphere_param")
    q, v = np.array([1.0, 0.2]), np.array([0.3, 0.8])
    tr = geodesic.exp_trajectory(M, q, v, 1.5)
    speeds = [M.norm(s[:2], s[2:4]) for s in tr.states]
    assert np.abs(np.array(speeds) - M.norm(q, v)).max() < 1e-8


def test_chart_exit():
    M = mf.builtin("sphere_param")
    with pytest.raises(ChartExitError):
        geodesic.exp(M, np.array([0.5, 0.0]), np.array([-1.0, 0.0]))


def test_exp_rejects_normal_vector():
    with pytest.raises(InvalidInputError):
        geodesic.exp(mf.surface_sc(1.0), P3, [0.0, 0.0, 1.0])


def test_log_of_base_point():
    for M in builtins():
        q = base_point(M)
        assert np.array_equal(geodesic.log(M, q, q), np.zeros(M.coord_dim))


def test_log_great_circle():
    v = geodesic.log(mf.surface_sc(1.0), P3, np.array([1.0, 0.0, 0.0]))
    assert np.abs(v - [math.pi / 2, 0, 0]).max() < 1e-7


@pytest.mark.parametrize("k", range(len(builtins())))
def test_exp_log_round_trip(rng, k):
    M = builtins()[k]
    q = base_point(M)
    for _ in range(5):
        v = random_tangent(M, q, rng, rng.uniform(0.1, 1.0))
        x = geodesic.exp(M, q, v)
        assert np.abs(geodesic.log(M, q, x) - v).max() < 1e-6
        assert abs(geodesic.distance(M, q, x) - M.norm(q, v)) < 1e-7


def test_log_then_exp(rng):
    M = mf.surface_sc(-1.0)
    q = random_point(M, P3, rng)
    x = random_point(M, q, rng, 0.9)
    assert np.abs(geodesic.exp(M, q, geodesic.log(M, q, x)) - x).max() < 1e-8


def test_parametric_and_implicit_sphere_agree(rng):
    Mi, Mp = mf.surface_sc(1.0), mf.builtin("sphere_param")
    for _ in range(10):
        a = np.array([rng.uniform(0.6, 2.5), rng.uniform(-1.0, 1.0)])
        b = a + rng.uniform(-0.5, 0.5, 2)
        dp = geodesic.distance(Mp, a, b)
        di = geodesic.distance(Mi, Mp.embed(a), Mp.embed(b))
        chord = np.linalg.norm(Mp.embed(a) - Mp.embed(b))
        assert abs(dp - di) < 1e-7
        assert abs(di - 2 * math.asin(chord / 2)) < 1e-7


def test_log_antipode_fails():
    with pytest.raises(NoConvergenceError) as err:
        geodesic.log(mf.surface_sc(1.0), P3, np.array([0.0, 0.0, -1.0]))
    assert err.value.residual is not None and err.value.detail
