"""Augmented geodesic flows: base geodesic plus first and second variations
integrated as one IVP."""
import numpy as np

from . import manifold as mf
from . import ode
from .errors import ChartExitError, ConstraintViolationError, IntegrationError, InvalidInputError

DRIFT_TOL = 1e-8

GEODESIC_OPTIONS = ode.IntegratorOptions()


def _pairs(pairs):
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.ascontiguousarray(np.asarray(pairs, dtype=np.int64).reshape(-1, 2))


def initial_first(M, q, v, u, w):
    """Initial ``(y, z)`` of the first variation with ``J_0 = u`` and ``J'_0 = w``."""
    if isinstance(M, mf.ParametricManifold):
        G = M.christoffel(q)
        # y = dz/dt, so remove the connection term of the covariant derivative
        w = w - np.einsum("kij,i,j->k", G, v, u)
    return w, u


class Flow:
    """Result of an augmented integration.

    ``x(t)``/``p(t)`` give the base geodesic, ``z(j, t)`` the Jacobi field j
    and ``r(s, t)`` the second variation s. ``t`` defaults to the endpoint.
    """

    def __init__(self, M, traj, nj, ns):
        self.M = M
        self.traj = traj
        self.d = M.coord_dim
        self.nj = nj
        self.ns = ns

    def _state(self, t):
        return self.traj.y_final if t is None else self.traj(t)

    def _block(self, start, t):
        Y = self._state(t)
        return Y[..., start:start + self.d]

    def x(self, t=None):
        return self._block(0, t)

    def p(self, t=None):
        return self._block(self.d, t)

    def y(self, j, t=None):
        return self._block(2 * self.d * (j + 1), t)

    def z(self, j, t=None):
        return self._block(2 * self.d * (j + 1) + self.d, t)

    def r(self, s, t=None):
        return self._block(2 * self.d * (1 + self.nj + s) + self.d, t)

    def velocity(self, t=None):
        """Geodesic velocity ``(I - A^+ A) p`` (implicit) or ``p`` (chart)."""
        if isinstance(self.M, mf.ImplicitManifold):
            x = self.x(t)
            return self.M.tangent_project(x, self.p(t)) if x.ndim == 1 else np.array(
                [self.M.tangent_project(a, b) for a, b in zip(x, self.p(t))])
        return self.p(t)

    def Z(self, t=None):
        """Jacobi fields stacked as columns."""
        return np.stack([self.z(j, t) for j in range(self.nj)], axis=-1)


def flow(M, q, v, firsts=(), pairs=(), t1=1.0, opts=None, dense=False):
    """Integrate the augmented system on ``[0, t1]``.

    Parameters
    ----------
    firsts : sequence of (u, w)
        Initial field value and covariant derivative of each first variation.
    pairs : sequence of (iw, iu)
        Second variations; field ``iw`` differentiated along field ``iu``.
    """
    opts = opts or GEODESIC_OPTIONS
    if dense != opts.dense_output:
        opts = ode.IntegratorOptions(opts.method, opts.rel_tol, opts.abs_tol, opts.step,
                                     opts.max_steps, dense)
    d = M.coord_dim
    q = np.asarray(q, float)
    v = np.asarray(v, float)
    nj = len(firsts)
    pr = _pairs(pairs)
    if pr.size and (pr.min() < 0 or pr.max() >= nj):
        raise InvalidInputError("second-variation pair refers to a missing field")
    blocks = [q, v]
    for u, w in firsts:
        y0, z0 = initial_first(M, q, v, np.asarray(u, float), np.asarray(w, float))
        blocks += [y0, z0]
    blocks.append(np.zeros(2 * d * pr.shape[0]))
    y0 = np.concatenate(blocks)
    rhs, args, loops = mf.flow_functions(M, nj, pr)
    try:
        traj = ode.run(rhs, args, 0.0, float(t1), y0, opts, loops=loops)
    except IntegrationError as exc:
        if isinstance(M, mf.ParametricManifold) and M.domain is not None \
                and exc.state is not None and not M.domain(exc.state[:d]):
            raise ChartExitError(f"geodesic left the chart near t={exc.t:.6g}",
                                 t=exc.t, state=exc.state) from exc
        raise
    out = Flow(M, traj, nj, pr.shape[0])
    _check(M, out)
    return out


def _check(M, fl):
    X = fl.traj.states[:, :M.coord_dim]
    if isinstance(M, mf.ImplicitManifold):
        drift = max(float(np.linalg.norm(M.F(x))) for x in X)
        if drift > DRIFT_TOL:
            raise ConstraintViolationError(
                f"geodesic drifted off the manifold: |F| = {drift:.2e}", residual=drift)
    elif M.domain is not None:
        for t, x in zip(fl.traj.times, X):
            if not M.domain(x):
                raise ChartExitError(f"geodesic left the chart at t={t:.6g}", t=float(t), state=x)
