"""Jacobi fields, differentials of the exponential map, curvature estimates
and conjugate points.

All quantities come from one augmented integration of the geodesic together
with its first (and, when needed, second) variations.
"""
from dataclasses import dataclass

import numpy as np

from . import _flow, geodesic
from . import manifold as mf
from . import ode
from .errors import DegenerateError, InvalidInputError, SingularityError

# curvature estimates divide by t^3, so the field length must be accurate to
# roughly 1e-11 at t = 0.1
CURVATURE_OPTIONS = ode.IntegratorOptions(rel_tol=1e-13, abs_tol=1e-15)

CONJ_GRID = 200
CONJ_WIDTH = 1e-6
CONJ_FLOOR = 1e-5
DLOG_COND = 1e12


def _prep(M, q, *vecs):
    q = M.check_point(q)
    return (q,) + tuple(geodesic.check_tangent(M, q, a) for a in vecs)


def jacobi_field(M, q, v, u, w, t=1.0, opts=None):
    """Jacobi field ``J_t`` along ``Exp_q(s v)`` with ``J_0 = u`` and ``J'_0 = w``.

    ``w`` is the covariant derivative at ``t = 0``. For a level set the
    returned vector is in embedding coordinates.
    """
    q, v, u, w = _prep(M, q, v, u, w)
    if not np.any(u) and not np.any(w):
        return np.zeros(M.coord_dim)
    return _flow.flow(M, q, v, firsts=[(u, w)], t1=t, opts=opts).z(0)


def jacobi_trajectory(M, q, v, u, w, t1, opts=None):
    """Dense :class:`~jacobipga._flow.Flow` carrying the geodesic and one Jacobi field."""
    q, v, u, w = _prep(M, q, v, u, w)
    return _flow.flow(M, q, v, firsts=[(u, w)], t1=t1, opts=opts, dense=True)


def dexp(M, q, v, w, opts=None):
    """``d_v Exp_q (w)``."""
    q, v, w = _prep(M, q, v, w)
    if not np.any(v):
        return w.copy()
    return _flow.flow(M, q, v, firsts=[(np.zeros_like(w), w)], opts=opts).z(0)


def dexp_columns(M, q, v, W, opts=None, second=False):
    """Apply ``d_v Exp_q`` to every column of ``W`` in one integration.

    Returns ``(x, Z)`` with ``x = Exp_q v`` and ``Z`` of shape
    ``(coord_dim, k)``. With ``second=True`` also returns the tensor
    ``S[:, i, j] = d/ds d_{v + s W_j} Exp_q (W_i)`` as a third element.
    """
    q = np.asarray(q, float)
    W = np.asarray(W, float)
    k = W.shape[1]
    zero = np.zeros(M.coord_dim)
    firsts = [(zero, W[:, i]) for i in range(k)]
    pairs = [(i, j) for i in range(k) for j in range(i, k)] if second else []
    fl = _flow.flow(M, q, v, firsts=firsts, pairs=pairs, opts=opts)
    if not second:
        return fl.x(), fl.Z()
    S = np.empty((M.coord_dim, k, k))
    for s, (i, j) in enumerate(pairs):
        S[:, i, j] = S[:, j, i] = fl.r(s)
    return fl.x(), fl.Z(), S


def dexp_matrix(M, q, v, opts=None):
    """``d_v Exp_q`` as an ``eta x eta`` matrix.

    Input coordinates use the orthonormal tangent basis at ``q``, output
    coordinates the one at ``Exp_q v``.
    """
    q, v = _prep(M, q, v)
    Eq = mf.orthonormal_tangent_basis(M, q)
    x, Z = dexp_columns(M, q, v, Eq, opts=opts)
    Ex = mf.orthonormal_tangent_basis(M, x)
    return Ex.T @ M.metric(x) @ Z


def dlog(M, q, y, opts=None):
    """``d_y Log_q = (d_{Log_q y} Exp_q)^{-1}`` in orthonormal tangent coordinates.

    Raises
    ------
    SingularityError
        If the differential of the exponential is numerically singular,
        i.e. ``y`` is (close to) conjugate to ``q``.
    """
    q = M.check_point(q)
    v = geodesic.log(M, q, y, opts=opts)
    D = dexp_matrix(M, q, v, opts=opts)
    if np.linalg.cond(D) > DLOG_COND:
        raise SingularityError("differential of Exp is singular (conjugate point)")
    return np.linalg.inv(D)


def dexp_second(M, q, v, w, u, opts=None):
    """Derivative of ``d_{v_s} Exp_q (w)`` along ``v_s = v + s u`` at ``s = 0``."""
    q, v, w, u = _prep(M, q, v, w, u)
    zero = np.zeros(M.coord_dim)
    fl = _flow.flow(M, q, v, firsts=[(zero, w), (zero, u)], pairs=[(0, 1)], opts=opts)
    return fl.r(0)


@dataclass(frozen=True)
class CurvatureEstimate:
    value: float
    t_used: float
    plane: tuple


def orthonormal_plane(M, q, v, w, tol=1e-10):
    """Gram-Schmidt on ``(v, w)`` in the metric at ``q``."""
    nv = M.norm(q, v)
    nw = M.norm(q, w)
    if nv == 0 or nw == 0:
        raise DegenerateError("plane spanned by a zero vector")
    e1 = v / nv
    w = w / nw
    w2 = w - M.inner(q, w, e1) * e1
    n2 = M.norm(q, w2)
    if n2 < tol:
        raise DegenerateError("v and w do not span a plane")
    return e1, w2 / n2


def sectional_curvature(M, q, v, w, t=0.01, opts=None):
    """Estimate ``K(v, w)`` from the Jacobi field with ``J_0 = 0`` and ``J'_0 = w``.

    Uses ``K ~ 6 (t - |J_t|) / t^3`` after orthonormalising the plane.
    """
    q, v, w = _prep(M, q, v, w)
    if t <= 0:
        raise InvalidInputError("t must be positive")
    e1, e2 = orthonormal_plane(M, q, v, w)
    fl = _flow.flow(M, q, e1, firsts=[(np.zeros_like(e2), e2)], t1=t,
                    opts=opts or CURVATURE_OPTIONS)
    nJ = M.norm(fl.x(), fl.z(0))
    return CurvatureEstimate(6.0 * (t - nJ) / t ** 3, float(t), (e1, e2))


def conjugate_scan(M, q, v, w, t_max, opts=None, n_grid=CONJ_GRID, width=CONJ_WIDTH,
                   floor=CONJ_FLOOR):
    """First conjugate point along ``Exp_q(t v)`` in ``(0, t_max]`` seen by ``J``.

    ``J_0 = 0`` and ``J'_0 = w`` (``w`` orthogonal to ``v``). The field is
    sampled on a uniform grid; a sign change of ``<J(t_i), J(t_{i+1})>``
    brackets a zero, which is refined by bisection to ``width``. The zero is
    accepted when ``|J| < floor * max |J|``.

    Returns
    -------
    float or None
    """
    q, v, w = _prep(M, q, v, w)
    if not np.any(v) or not np.any(w):
        raise InvalidInputError("v and w must be nonzero")
    if abs(M.inner(q, v, w)) > 1e-8 * M.norm(q, v) * M.norm(q, w):
        raise InvalidInputError("w must be orthogonal to v")
    fl = _flow.flow(M, q, v, firsts=[(np.zeros_like(w), w)], t1=t_max, opts=opts, dense=True)
    ts = t_max * np.arange(1, n_grid + 1) / n_grid
    X = fl.x(ts)
    J = fl.z(0, ts)
    norms = np.array([M.norm(x, j) for x, j in zip(X, J)])
    jmax = norms.max()

    def along(t, ref, x):
        return M.inner(x, fl.z(0, t), ref)

    for i in range(n_grid - 1):
        if norms[i] < floor * jmax:
            return float(ts[i])
        if M.inner(X[i], J[i], J[i + 1]) > 0:
            continue
        lo, hi = ts[i], ts[i + 1]
        ref = J[i]
        while hi - lo > width:
            mid = 0.5 * (lo + hi)
            if along(mid, ref, X[i]) > 0:
                lo = mid
            else:
                hi = mid
        tc = 0.5 * (lo + hi)
        if M.norm(fl.x(tc), fl.z(0, tc)) < floor * jmax:
            return float(tc)
    if norms[-1] < floor * jmax:
        return float(ts[-1])
    return None
