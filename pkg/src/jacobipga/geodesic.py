"""Exponential and logarithm maps."""
import numpy as np

from . import _flow
from . import manifold as mf
from .errors import GeometryError, InvalidInputError, NoConvergenceError

LOG_TOL = 1e-9
LOG_MAX_ITER = 100


def check_tangent(M, q, v, tol=mf.TANGENCY_TOL):
    v = np.asarray(v, float)
    if v.shape != (M.coord_dim,):
        raise InvalidInputError(f"tangent vector must have shape ({M.coord_dim},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("tangent vector has non-finite entries")
    if isinstance(M, mf.ImplicitManifold):
        res = float(np.linalg.norm(M.jacobian(q) @ v))
        if res > tol * max(1.0, float(np.linalg.norm(v))):
            raise InvalidInputError(f"vector is not tangent: |dF v| = {res:.2e}")
    return v


def exp(M, q, v, t=1.0, opts=None):
    """``Exp_q(t v)``, the geodesic from ``q`` with initial velocity ``v`` at time ``t``.

    Parameters
    ----------
    M : Manifold
    q : array_like
        Base point (embedding or chart coordinates).
    v : array_like
        Tangent vector at ``q``.
    t : float, optional
    opts : IntegratorOptions, optional

    Returns
    -------
    numpy.ndarray
    """
    q = M.check_point(q)
    v = check_tangent(M, q, v)
    if t == 0 or not np.any(v):
        return q.copy()
    return _flow.flow(M, q, v, t1=t, opts=opts).x()


def exp_trajectory(M, q, v, t1, opts=None):
    """Dense trajectory of the geodesic system on ``[0, t1]``.

    States are ``[x, p]``; ``p`` is the momentum for level sets and the
    velocity in a chart.
    """
    q = M.check_point(q)
    v = check_tangent(M, q, v)
    return _flow.flow(M, q, v, t1=t1, opts=opts, dense=True).traj


def _initial_guess(M, q, x):
    if isinstance(M, mf.ImplicitManifold):
        return M.tangent_project(q, x - q)
    return x - q


def shoot(M, q, x, tol=LOG_TOL, max_iter=LOG_MAX_ITER, v0=None, opts=None, stall_tol=None):
    """Shooting solver behind :func:`log`.

    Gauss-Newton on ``r(a) = Exp_q(W a) - x`` with ``W`` the orthonormal
    tangent basis at ``q`` and the Jacobian taken from the Jacobi fields of
    the current geodesic. A step that does not reduce ``|r|`` is halved (up to
    30 times). When no step helps any more (integration noise) the iterate is
    still accepted if ``|r| < stall_tol``.

    Returns
    -------
    v : numpy.ndarray
        ``Log_q x``.
    a : numpy.ndarray
        Coordinates of ``v`` in ``W``.
    W : numpy.ndarray
        Orthonormal basis of ``T_q M`` (columns).
    Z : numpy.ndarray
        ``d_v Exp_q W`` at the solution.
    """
    q = M.check_point(q)
    x = M.check_point(x)
    W = mf.orthonormal_tangent_basis(M, q)
    if np.array_equal(q, x):
        return np.zeros(M.coord_dim), np.zeros(M.dim), W, W.copy()
    g = M.metric(q)
    guess = _initial_guess(M, q, x) if v0 is None else np.asarray(v0, float)
    a = W.T @ g @ guess
    firsts = [(np.zeros(M.coord_dim), W[:, i]) for i in range(M.dim)]

    def evaluate(a):
        fl = _flow.flow(M, q, W @ a, firsts=firsts, opts=opts)
        return fl.x() - x, fl.Z()

    r, J = evaluate(a)
    res = float(np.linalg.norm(r))
    stall_tol = tol if stall_tol is None else max(tol, stall_tol)
    for _ in range(max_iter):
        if res < tol:
            break
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        for _ in range(31):
            try:
                r_new, J_new = evaluate(a + lam * step)
                res_new = float(np.linalg.norm(r_new))
            except GeometryError:
                res_new = np.inf
            if res_new < res:
                break
            lam *= 0.5
        else:
            if res < stall_tol:
                return W @ a, a, W, J
            break
        a = a + lam * step
        r, J, res = r_new, J_new, res_new
    if res < tol:
        return W @ a, a, W, J
    sv = np.linalg.svd(J, compute_uv=False)
    detail = "possible cut-locus proximity" if sv[-1] < 1e-6 * sv[0] else "shooting stalled"
    raise NoConvergenceError(f"log did not converge: |r| = {res:.2e} ({detail})",
                             best=W @ a, residual=res, detail=detail)


def log(M, q, x, tol=LOG_TOL, max_iter=LOG_MAX_ITER, v0=None, opts=None):
    """``Log_q x`` by geodesic shooting (see :func:`shoot`).

    The initial guess is the tangent projection of ``x - q`` for level sets
    and the coordinate difference in a chart, unless ``v0`` is given.

    Raises
    ------
    NoConvergenceError
        If ``|Exp_q v - x| < tol`` is not reached; ``best`` holds the best
        velocity and ``detail`` flags a near-singular differential.
    """
    return shoot(M, q, x, tol, max_iter, v0, opts)[0]


def distance(M, q, x, **kw):
    """Geodesic distance ``|Log_q x|``."""
    q = np.asarray(q, float)
    return M.norm(q, log(M, q, x, **kw))
