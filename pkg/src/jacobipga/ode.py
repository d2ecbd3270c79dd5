"""Initial value problem integration.

Two methods are provided: classical fixed-step RK4 and the adaptive
Dormand-Prince 5(4) pair. Accepted steps can be kept for dense output by
cubic Hermite interpolation.

The stepping loops take the right-hand side as an argument ``rhs(t, y, args)``.
Compiled right-hand sides are paired with the compiled loops; arbitrary Python
callables go through the uncompiled copies of the same loops.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _accel
from .errors import IntegrationError, InvalidInputError

# status codes returned by the kernels
OK, MAX_STEPS, UNDERFLOW, NONFINITE = 0, 1, 2, 3

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# 5th order solution minus embedded 4th order solution
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)


def _grow(ts, ys, fs):
    cap = ts.shape[0] * 2
    n = ys.shape[1]
    nts = np.empty(cap)
    nys = np.empty((cap, n))
    nfs = np.empty((cap, n))
    k = ts.shape[0]
    nts[:k] = ts
    nys[:k] = ys
    nfs[:k] = fs
    return nts, nys, nfs


def _err_norm(err, y, ynew, rtol, atol):
    acc = 0.0
    for i in range(err.shape[0]):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        r = err[i] / sc
        acc += r * r
    return np.sqrt(acc / err.shape[0])


def _dopri5(rhs, args, t0, t1, y0, rtol, atol, max_steps, h0, dense):
    """Adaptive Dormand-Prince integration of ``y' = rhs(t, y, args)``.

    Returns ``(status, ts, ys, fs, count)``. With ``dense`` every accepted
    step is recorded, otherwise only the endpoints.
    """
    n = y0.shape[0]
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    cap = 64 if dense else 2
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    fs = np.empty((cap, n))
    y = y0.copy()
    t = t0
    f = rhs(t, y, args)
    ts[0] = t
    ys[0] = y
    fs[0] = f
    count = 1
    if span == 0.0:
        return OK, ts[:1], ys[:1], fs[:1], 1
    for i in range(n):
        if not np.isfinite(f[i]):
            return NONFINITE, ts[:1], ys[:1], fs[:1], 1

    if h0 > 0.0:
        h = min(h0, span)
    else:
        # Hairer-Norsett-Wanner starting step heuristic
        d0 = 0.0
        d1 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y[i])
            d0 += (y[i] / sc) ** 2
            d1 += (f[i] / sc) ** 2
        d0 = np.sqrt(d0 / n)
        d1 = np.sqrt(d1 / n)
        if d0 < 1e-5 or d1 < 1e-5:
            h = 1e-6
        else:
            h = 0.01 * d0 / d1
        h = min(h, span)
        y1 = y + direction * h * f
        f1 = rhs(t + direction * h, y1, args)
        d2 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y[i])
            d2 += ((f1[i] - f[i]) / sc) ** 2
        d2 = np.sqrt(d2 / n) / h
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        h = min(100 * h, h1, span)

    steps = 0
    done = False
    while not done:
        if steps >= max_steps:
            return MAX_STEPS, ts[:count], ys[:count], fs[:count], count
        remaining = abs(t1 - t)
        last = False
        if h >= remaining:
            h = remaining
            last = True
        if h < 1e-14 * max(1.0, abs(t)):
            return UNDERFLOW, ts[:count], ys[:count], fs[:count], count
        hs = direction * h
        k1 = f
        k2 = rhs(t + _C2 * hs, y + hs * (_A21 * k1), args)
        k3 = rhs(t + _C3 * hs, y + hs * (_A31 * k1 + _A32 * k2), args)
        k4 = rhs(t + _C4 * hs, y + hs * (_A41 * k1 + _A42 * k2 + _A43 * k3), args)
        k5 = rhs(t + _C5 * hs, y + hs * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4), args)
        k6 = rhs(t + hs, y + hs * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5), args)
        ynew = y + hs * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        fnew = rhs(t + hs, ynew, args)
        steps += 1
        err = hs * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * fnew)
        en = _err_norm(err, y, ynew, rtol, atol)
        if not np.isfinite(en):
            h *= 0.25
            continue
        if en <= 1.0:
            t = t1 if last else t + hs
            y = ynew
            f = fnew
            if dense or last:
                if count == ts.shape[0]:
                    ts, ys, fs = _grow(ts, ys, fs)
                ts[count] = t
                ys[count] = y
                fs[count] = f
                count += 1
            if last:
                done = True
            fac = 5.0 if en == 0.0 else min(5.0, 0.9 * en ** -0.2)
            h = h * fac
        else:
            h = h * max(0.2, 0.9 * en ** -0.2)
    return OK, ts[:count], ys[:count], fs[:count], count


def _rk4(rhs, args, t0, t1, y0, nsteps, dense):
    """Classical fixed-step RK4 with ``nsteps`` equal steps."""
    n = y0.shape[0]
    cap = nsteps + 1 if dense else 2
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    fs = np.empty((cap, n))
    h = (t1 - t0) / nsteps
    y = y0.copy()
    t = t0
    f = rhs(t, y, args)
    ts[0] = t
    ys[0] = y
    fs[0] = f
    count = 1
    for i in range(nsteps):
        k1 = f
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, args)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, args)
        k4 = rhs(t + h, y + h * k3, args)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (i + 1) * h
        f = rhs(t, y, args)
        if dense or i == nsteps - 1:
            ts[count] = t
            ys[count] = y
            fs[count] = f
            count += 1
    return OK, ts[:count], ys[:count], fs[:count], count


_grow = _accel.njit(_grow)
_err_norm = _accel.njit(_err_norm)
dopri5_py = _dopri5
rk4_py = _rk4
dopri5_jit = _accel.njit(_dopri5)
rk4_jit = _accel.njit(_rk4)
# inlined at IR level into callers that bind a fixed right-hand side, which
# keeps those callers cacheable
dopri5_inline = _accel.njit(_dopri5, inline="always")
rk4_inline = _accel.njit(_rk4, inline="always")


@dataclass(frozen=True)
class IntegratorOptions:
    method: str = "rk45_adaptive"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    step: float = 1e-2
    max_steps: int = 100_000
    dense_output: bool = False

    def __post_init__(self):
        if self.method not in ("rk45_adaptive", "rk4_fixed"):
            raise InvalidInputError(f"unknown method {self.method!r}")
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.step <= 0:
            raise InvalidInputError("tolerances and step must be positive")
        if self.max_steps <= 0:
            raise InvalidInputError("max_steps must be positive")


DEFAULT_OPTIONS = IntegratorOptions()


@dataclass(frozen=True)
class IvpSpec:
    rhs: Callable
    t0: float
    t1: float
    y0: np.ndarray


class Trajectory:
    """Sampled solution with cubic Hermite interpolation between samples."""

    def __init__(self, times, states, derivs=None):
        self.times = np.asarray(times, float)
        self.states = np.asarray(states, float)
        self.derivs = None if derivs is None else np.asarray(derivs, float)
        if self.times.shape[0] != self.states.shape[0]:
            raise InvalidInputError("times and states differ in length")

    def __len__(self):
        return self.times.shape[0]

    @property
    def t_final(self):
        return self.times[-1]

    @property
    def y_final(self):
        return self.states[-1]

    def __call__(self, t):
        """State at time(s) ``t`` inside the integrated interval."""
        ts = self.times
        scalar = np.ndim(t) == 0
        tq = np.atleast_1d(np.asarray(t, float))
        flip = ts[-1] < ts[0]
        tt = -ts if flip else ts
        tqq = -tq if flip else tq
        lo, hi = tt[0], tt[-1]
        if np.any(tqq < lo - 1e-12) or np.any(tqq > hi + 1e-12):
            raise InvalidInputError("interpolation time outside the trajectory")
        idx = np.clip(np.searchsorted(tt, tqq, side="right") - 1, 0, len(ts) - 2)
        out = np.empty((tq.size, self.states.shape[1]))
        for j, i in enumerate(idx):
            t0, t1 = ts[i], ts[i + 1]
            h = t1 - t0
            s = (tq[j] - t0) / h
            y0, y1 = self.states[i], self.states[i + 1]
            if self.derivs is None:
                out[j] = (1 - s) * y0 + s * y1
                continue
            f0, f1 = self.derivs[i], self.derivs[i + 1]
            h00 = 2 * s**3 - 3 * s**2 + 1
            h10 = s**3 - 2 * s**2 + s
            h01 = -2 * s**3 + 3 * s**2
            h11 = s**3 - s**2
            out[j] = h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
        return out[0] if scalar else out


_MESSAGES = {
    MAX_STEPS: "maximum number of steps exceeded",
    UNDERFLOW: "step size underflow",
    NONFINITE: "right-hand side returned non-finite values",
}


def run(rhs, args, t0, t1, y0, opts=DEFAULT_OPTIONS, compiled=False, loops=None):
    """Integrate with a kernel-style ``rhs(t, y, args)``; returns a Trajectory.

    ``compiled`` selects the numba loops and requires a compiled ``rhs``.
    ``loops`` is an optional ``(dopri5, rk4)`` pair with the right-hand side
    already bound; ``rhs`` is then ignored.
    """
    y0 = np.ascontiguousarray(y0, dtype=float)
    if opts.method == "rk4_fixed":
        nsteps = max(1, int(np.ceil(abs(t1 - t0) / opts.step - 1e-12)))
        if loops is not None:
            status, ts, ys, fs, _ = loops[1](args, float(t0), float(t1), y0, nsteps,
                                             opts.dense_output)
        else:
            loop = rk4_jit if compiled else rk4_py
            status, ts, ys, fs, _ = loop(rhs, args, float(t0), float(t1), y0, nsteps,
                                         opts.dense_output)
    else:
        tail = (float(t0), float(t1), y0, opts.rel_tol, opts.abs_tol, opts.max_steps, 0.0,
                opts.dense_output)
        if loops is not None:
            status, ts, ys, fs, _ = loops[0](args, *tail)
        else:
            loop = dopri5_jit if compiled else dopri5_py
            status, ts, ys, fs, _ = loop(rhs, args, *tail)
    if status != OK or not np.all(np.isfinite(ys[-1])):
        msg = _MESSAGES.get(status, "non-finite state")
        raise IntegrationError(f"integration failed: {msg} at t={ts[-1]:.6g}",
                               t=float(ts[-1]), state=ys[-1].copy())
    return Trajectory(ts, ys, fs)


def integrate(spec: IvpSpec, opts: IntegratorOptions = DEFAULT_OPTIONS) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from ``spec.t0`` to ``spec.t1``."""
    y0 = np.atleast_1d(np.asarray(spec.y0, dtype=float))
    user = spec.rhs

    def rhs(t, y, args):
        out = np.asarray(user(t, y), dtype=float)
        if out.shape != y.shape:
            raise InvalidInputError(f"rhs returned shape {out.shape}, expected {y.shape}")
        return out

    return run(rhs, (), spec.t0, spec.t1, y0, opts, compiled=False)
