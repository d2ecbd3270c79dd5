import math

import numpy as np
import pytest

from jacobipga import ode
from jacobipga.errors import IntegrationError, InvalidInputError

TIGHT = ode.IntegratorOptions(rel_tol=1e-10, abs_tol=1e-12)


def test_exponential():
    tr = ode.integrate(ode.IvpSpec(lambda t, y: y, 0.0, 1.0, [1.0]), TIGHT)
    assert abs(tr.y_final[0] - math.e) < 1e-9


def test_harmonic_oscillator():
    f = lambda t, y: np.array([y[1], -y[0]])
    tr = ode.integrate(ode.IvpSpec(f, 0.0, math.pi, [0.0, 1.0]), TIGHT)
    assert np.abs(tr.y_final - [0.0, -1.0]).max() < 1e-8


def test_non_autonomous():
    tr = ode.integrate(ode.IvpSpec(lambda t, y: t * y, 0.0, 1.0, [1.0]), TIGHT)
    assert abs(tr.y_final[0] - math.exp(0.5)) < 1e-9


def test_rk4_order():
    errs = []
    for h in (1e-1, 5e-2, 2.5e-2):
        opts = ode.IntegratorOptions(method="rk4_fixed", step=h)
        tr = ode.integrate(ode.IvpSpec(lambda t, y: y, 0.0, 1.0, [1.0]), opts)
        errs.append(abs(tr.y_final[0] - math.e))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 3.8


def test_reversibility():
    f = lambda t, y: np.array([y[1], -np.sin(y[0])])
    y0 = np.array([0.4, 0.1])
    fwd = ode.integrate(ode.IvpSpec(f, 0.0, 3.0, y0), TIGHT)
    back = ode.integrate(ode.IvpSpec(f, 3.0, 0.0, fwd.y_final), TIGHT)
    assert np.abs(back.y_final - y0).max() < 10 * 1e-10


def test_dense_output_interpolates():
    opts = ode.IntegratorOptions(dense_output=True)
    tr = ode.integrate(ode.IvpSpec(lambda t, y: np.array([y[1], -y[0]]), 0.0, 6.0,
                                   [0.0, 1.0]), opts)
    ts = np.linspace(0.0, 6.0, 97)
    assert np.abs(tr(ts)[:, 0] - np.sin(ts)).max() < 1e-7
    assert np.all(np.diff(tr.times) > 0)
    with pytest.raises(InvalidInputError):
        tr(6.5)


def test_max_steps_reports_last_state():
    opts = ode.IntegratorOptions(max_steps=5)
    with pytest.raises(IntegrationError) as err:
        ode.integrate(ode.IvpSpec(lambda t, y: np.array([y[1], -y[0]]), 0.0, 50.0,
                                  [0.0, 1.0]), opts)
    assert err.value.state is not None and np.all(np.isfinite(err.value.state))


def test_blow_up_fails():
    with pytest.raises(IntegrationError):
        ode.integrate(ode.IvpSpec(lambda t, y: y * y, 0.0, 2.0, [1.0]))


def test_invalid_options():
    with pytest.raises(InvalidInputError):
        ode.IntegratorOptions(rel_tol=0.0)
    with pytest.raises(InvalidInputError):
        ode.IntegratorOptions(method="euler")
    with pytest.raises(InvalidInputError):
        ode.integrate(ode.IvpSpec(lambda t, y: np.zeros(3), 0.0, 1.0, [1.0, 2.0]))
