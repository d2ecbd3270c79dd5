"""Intrinsic statistics: Karcher mean, projection onto geodesic subspaces and
principal geodesic analysis.

Tangent vectors at the mean are handled in coordinates of an orthonormal
basis of ``T_mu M``; :class:`GeodesicSubspace` keeps both the ambient basis
vectors and these coordinates.

The squared distance from ``x`` to ``y = Exp_mu(B w)`` is evaluated as
``|Log_x y|^2``. With ``Z_x = d_a Exp_x`` at ``a = Log_x y`` and
``Z_mu = d_{Bw} Exp_mu B``, the coordinate map ``w -> a`` has differential
``C = Z_x^{-1} Z_mu``; the gradient is ``2 C^T a`` and the Hessian adds the
derivative of ``C`` obtained from the second differentials of both
exponentials.
"""
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import geodesic, jacobi
from . import manifold as mf
from .errors import (DegenerateError, GeometryError, InvalidInputError, NoConvergenceError)

log = logging.getLogger(__name__)

KARCHER_TOL = 1e-8
KARCHER_MAX_ITER = 1000
PROJ_GRAD_TOL = 1e-9
# a projection whose line search stalls at the noise floor is still accepted
# when its gradient is below this
PROJ_STALL_TOL = 1e-7
PROJ_MAX_ITER = 500
# log accuracy used inside projections; the gradient is only as good as a
PROJ_LOG_TOL = 1e-11
MAX_HALVINGS = 30
ARMIJO = 0.25
# residual values carry integration noise of this (relative) size since the
# adaptive step sequence changes with w; inside the band a step is accepted
# when it shrinks the gradient, which stays accurate, by this factor
VALUE_NOISE = 1e-10
NOISE_CONTRACTION = 0.9
PGA_TOL = 1e-7
# stop when the tangential gradient of the objective is below this (relative)
PGA_GRAD_TOL = 1e-7
PGA_MAX_ITER = 500
# relative noise floor of the PGA objective (projections are converged to a
# gradient of 1e-9); changes below it are accepted as non-decreasing
PGA_NOISE = 1e-9
# iterations in a row with gains below the noise floor before giving up
PGA_STALL = 3
RANK_TOL = 1e-10


# --- data types -------------------------------------------------------------

@dataclass
class GeodesicSubspace:
    """``Exp_mu(span V)``.

    Parameters
    ----------
    center : numpy.ndarray
        The point ``mu``.
    basis : numpy.ndarray
        ``(coord_dim, k)`` tangent vectors at ``mu``, orthonormal in the metric.
    """

    center: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        self.basis = np.asarray(self.basis, float).reshape(self.center.size, -1)

    @property
    def k(self):
        return self.basis.shape[1]

    def check(self, M, tol=RANK_TOL):
        G = self.basis.T @ M.metric(self.center) @ self.basis
        if np.abs(G - np.eye(self.k)).max() > tol:
            raise InvalidInputError("subspace basis is not orthonormal")
        return self


@dataclass
class ResidualEval:
    w: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray = None
    point: np.ndarray = None


@dataclass
class PgaModel:
    mean: np.ndarray
    directions: np.ndarray
    variances: list
    mode: str
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, **kw):
        return json.dumps({
            "mean": self.mean.tolist(),
            "directions": self.directions.T.tolist(),
            "variances": [float(s) for s in self.variances],
            "mode": self.mode,
            "diagnostics": self.diagnostics,
        }, **kw)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.array(d["mean"]), np.array(d["directions"]).T, d["variances"], d["mode"],
                   d.get("diagnostics", {}))


# --- helpers --------------------------------------------------------------------

def complete_basis(M, mu, V):
    """Orthonormal basis of ``T_mu M`` whose first columns are ``V``.

    The remaining columns come from Gram-Schmidt over the projected canonical
    vectors in index order (norm threshold 1e-8).
    """
    mu = np.asarray(mu, float)
    g = M.metric(mu)
    V = np.asarray(V, float).reshape(M.coord_dim, -1)
    cols = [V[:, i] for i in range(V.shape[1])]
    for i in range(M.coord_dim):
        if len(cols) == M.dim:
            break
        e = np.zeros(M.coord_dim)
        e[i] = 1.0
        u = M.tangent_project(mu, e)
        for _ in range(2):
            for b in cols:
                u = u - (b @ g @ u) * b
        nu = np.sqrt(max(u @ g @ u, 0.0))
        if nu >= mf.GS_SKIP:
            cols.append(u / nu)
    if len(cols) < M.dim:
        raise DegenerateError("could not complete the tangent basis")
    return np.stack(cols, axis=1)


def _coords(M, x, B, v):
    return B.T @ M.metric(x) @ v


# --- Karcher mean -----------------------------------------------------------------

def karcher_mean(M, data, tol=KARCHER_TOL, max_iter=KARCHER_MAX_ITER, step=1.0, init=None):
    """Intrinsic mean by the fixed-point iteration ``mu <- Exp_mu(step * mean Log_mu x_j)``.

    The start is the ambient mean pulled back onto the level set, or the
    coordinate mean in a chart.
    """
    X = [M.check_point(x) for x in data]
    if not X:
        raise InvalidInputError("empty dataset")
    if init is not None:
        mu = M.check_point(init)
    else:
        mu = np.mean(X, axis=0)
        if isinstance(M, mf.ImplicitManifold):
            mu = M.project_to_manifold(mu)
    logs = [None] * len(X)
    gnorm = np.inf
    for it in range(max_iter):
        for j, x in enumerate(X):
            logs[j] = geodesic.log(M, mu, x)
        m = np.mean(logs, axis=0)
        gnorm = M.norm(mu, m)
        if gnorm < tol:
            return mu
        mu = geodesic.exp(M, mu, step * m)
    raise NoConvergenceError(f"Karcher mean did not converge: |grad| = {gnorm:.2e}",
                             best=mu, residual=gnorm)


# --- residual -------------------------------------------------------------------------

class _Residual:
    """Evaluator of ``R(w) = |Log_x Exp_mu(B w)|^2`` with warm-started logs."""

    def __init__(self, M, x, mu, B):
        self.M = M
        self.x = M.check_point(x)
        self.mu = M.check_point(mu)
        self.B = np.asarray(B, float)
        self.a_prev = None

    def evaluate(self, w, hessian=False):
        M, B = self.M, self.B
        w = np.asarray(w, float)
        if hessian:
            y, ZE, SE = jacobi.dexp_columns(M, self.mu, B @ w, B, second=True)
        else:
            y, ZE = jacobi.dexp_columns(M, self.mu, B @ w, B)
        v0 = None if self.a_prev is None else self.a_prev
        a_vec, a, Ex, Zx = geodesic.shoot(M, self.x, y, tol=PROJ_LOG_TOL, v0=v0,
                                           stall_tol=geodesic.LOG_TOL)
        self.a_prev = a_vec
        C = np.linalg.lstsq(Zx, ZE, rcond=None)[0]
        value = float(a @ a)
        grad = 2.0 * C.T @ a
        H = None
        if hessian:
            _, Zx2, Sx = jacobi.dexp_columns(M, self.x, a_vec, Ex, second=True)
            H = 2.0 * C.T @ C
            for l in range(B.shape[1]):
                dZ = Sx @ C[:, l]
                dC = np.linalg.lstsq(Zx2, SE[:, :, l] - dZ @ C, rcond=None)[0]
                H[:, l] += 2.0 * dC.T @ a
            H = 0.5 * (H + H.T)
        ev = ResidualEval(w, value, grad, H, y)
        ev.C = C
        ev.a = a
        ev.ZE = ZE
        return ev


def residual(M, x, mu, S, w, hessian=False):
    """Residual ``|Log_{Exp_mu(V w)} x|^2`` with its gradient (and Hessian) in ``w``."""
    S = S if isinstance(S, GeodesicSubspace) else GeodesicSubspace(mu, S)
    return _Residual(M, x, mu, S.basis).evaluate(w, hessian)


def residual_gradient(M, x, mu, S, w):
    """Gradient of ``w -> |Log_{Exp_mu(V w)} x|^2`` in the coordinates of ``S.basis``."""
    return residual(M, x, mu, S, w).gradient


def residual_hessian(M, x, mu, w, basis=None):
    """Hessian of the unrestricted residual in an orthonormal basis of ``T_mu M``.

    ``basis`` defaults to :func:`jacobipga.manifold.orthonormal_tangent_basis`.
    The derivative of the inverse differential of ``Exp_x`` enters with the
    usual minus sign, ``d(Z^{-1}) = -Z^{-1} dZ Z^{-1}``.
    """
    B = mf.orthonormal_tangent_basis(M, mu) if basis is None else np.asarray(basis, float)
    return _Residual(M, x, mu, B).evaluate(w, hessian=True).hessian


# --- projection -------------------------------------------------------------------------

@dataclass
class Projection:
    point: np.ndarray
    w: np.ndarray
    value: float
    gradient: np.ndarray
    iterations: int
    step: float
    stalled: bool = False


def project(M, x, S, w0=None, tol=PROJ_GRAD_TOL, max_iter=PROJ_MAX_ITER, full=False):
    """Closest point to ``x`` on the geodesic subspace ``S``.

    Gradient descent on the residual with Barzilai-Borwein step lengths and
    backtracking: a step is halved (at most 30 times) until the residual
    decreases sufficiently (Armijo constant 0.25). When the change is within
    the integration noise the step must shrink the gradient by 10% instead. If the
    line search stalls there, the result is accepted (and flagged) as long as
    the gradient is below ``PROJ_STALL_TOL``. The default start is the
    orthogonal projection of ``Log_mu x`` onto ``span V``.

    Raises
    ------
    NoConvergenceError
        If the gradient is still above ``max(tol, PROJ_STALL_TOL)``.

    Returns
    -------
    (point, w), or a :class:`Projection` when ``full`` is set.
    """
    mu = S.center
    V = S.basis
    res = _Residual(M, x, mu, V)
    if w0 is None:
        w0 = _coords(M, mu, V, geodesic.log(M, mu, x))
    w = np.asarray(w0, float).copy()
    ev = res.evaluate(w)
    alpha = 1.0
    it = 0
    prev = None
    for it in range(1, max_iter + 1):
        gnorm = np.linalg.norm(ev.gradient)
        if gnorm < tol:
            break
        if prev is not None:
            # Barzilai-Borwein length, roughly the inverse curvature
            ds, dg = w - prev[0], ev.gradient - prev[1]
            sy = float(ds @ dg)
            alpha = float(np.clip(ds @ ds / sy, 1e-3, 1e3)) if sy > 0 else 1.0
        g2 = float(ev.gradient @ ev.gradient)
        for _ in range(MAX_HALVINGS + 1):
            trial = w - alpha * ev.gradient
            try:
                ev_new = res.evaluate(trial)
            except GeometryError:
                ev_new = None
            if ev_new is not None and (
                    ev_new.value <= ev.value - ARMIJO * alpha * g2
                    or (abs(ev_new.value - ev.value) <= VALUE_NOISE * max(1.0, ev.value)
                        and np.linalg.norm(ev_new.gradient) < NOISE_CONTRACTION * gnorm)):
                break
            alpha *= 0.5
        else:
            break
        prev = (w, ev.gradient)
        w, ev = trial, ev_new
    gnorm = float(np.linalg.norm(ev.gradient))
    stalled = gnorm >= tol
    if gnorm >= max(tol, PROJ_STALL_TOL):
        raise NoConvergenceError(f"projection did not converge: |grad| = {gnorm:.2e}",
                                 best=(ev.point, w), residual=gnorm)
    out = Projection(ev.point, w, ev.value, ev.gradient, it, alpha, stalled)
    return out if full else (out.point, out.w)


# --- projection differential -------------------------------------------------------

@dataclass
class ProjectionDifferential:
    """Derivative of the projection onto ``Exp_mu span(V, v)`` at ``v = v0``.

    ``matrix`` maps coordinates along ``U`` (an orthonormal basis of the
    complement of ``span(V, v0)``) to tangent vectors at the projection;
    ``dpsi`` does the same for the coordinates of ``Log_mu`` of the
    projection in the basis ``B = [V, v0 / |v0|, U]``.
    """

    matrix: np.ndarray
    dpsi: np.ndarray
    U: np.ndarray
    B: np.ndarray
    omega: np.ndarray
    point: np.ndarray
    value: float
    C: np.ndarray
    a: np.ndarray


def projection_differential(M, x, mu, V, v0, w0=None, full=False):
    """Differential of ``v -> pi_{S_v}(x)`` for ``v`` orthogonal to ``span(V, v0)``.

    ``S_v = Exp_mu span(V, v)``. With ``H`` the full residual Hessian at
    the projection in the basis ``B = [V, v0hat, U]``, ``A_r`` its leading
    ``(k+1)``-block, ``vbar`` the last column of ``A_r^{-1}`` and ``Bm`` the
    off-diagonal block,

        dPsi = (-vbar grad_U R^T + omega_{k+1} [-A_r^{-1} Bm; I]) / |v0|,

    and the differential is ``d_{B omega} Exp_mu B dPsi``.

    Raises
    ------
    DegenerateError
        If ``A_r`` is singular or ``v0`` lies in ``span V``.
    """
    mu = M.check_point(mu)
    V = np.asarray(V, float).reshape(M.coord_dim, -1)
    v0 = np.asarray(v0, float)
    k = V.shape[1]
    g = M.metric(mu)
    nv = M.norm(mu, v0)
    vh = v0 - V @ (V.T @ g @ v0)
    if nv == 0 or M.norm(mu, vh) < 1e-10 * nv:
        raise DegenerateError("v0 lies in span V")
    if M.norm(mu, vh - v0) > 1e-8 * nv:
        raise InvalidInputError("v0 must be orthogonal to V")
    vh = v0 / nv
    B = complete_basis(M, mu, np.column_stack([V, vh]))
    U = B[:, k + 1:]
    S = GeodesicSubspace(mu, B[:, :k + 1])
    proj = project(M, x, S, w0=w0, full=True)
    omega = np.concatenate([proj.w, np.zeros(M.dim - k - 1)])
    ev = _Residual(M, x, mu, B).evaluate(omega, hessian=True)
    H = ev.hessian
    Ar = H[:k + 1, :k + 1]
    if np.linalg.matrix_rank(Ar, tol=RANK_TOL * max(1.0, np.abs(Ar).max())) < k + 1:
        raise DegenerateError("restricted residual Hessian is singular")
    Ainv = np.linalg.inv(Ar)
    vbar = Ainv[:, k]
    Bm = H[:k + 1, k + 1:]
    gperp = ev.gradient[k + 1:]
    E = np.vstack([-Ainv @ Bm, np.eye(M.dim - k - 1)])
    dpsi = (-np.outer(np.concatenate([vbar, np.zeros(M.dim - k - 1)]), gperp)
            + omega[k] * E) / nv
    D = ev.ZE @ dpsi
    out = ProjectionDifferential(D, dpsi, U, B, omega, ev.point, ev.value, ev.C, ev.a)
    return out if full else D


def variance_gradient(M, y, x, mu, V, v0, mode=None, w0=None, full=False):
    """Gradient of ``d(y, pi_{S_v}(x))^2`` in ``v`` over the complement of ``span(V, v0)``.

    ``y = mu`` gives the variance term, ``y = x`` the reconstruction error.
    The gradient is returned as a tangent vector at ``mu``.
    """
    if mode is None:
        if np.array_equal(np.asarray(y, float), np.asarray(mu, float)):
            mode = "variance"
        elif np.array_equal(np.asarray(y, float), np.asarray(x, float)):
            mode = "reconstruction"
        else:
            raise InvalidInputError("y must be the center mu or the data point x")
    pd = projection_differential(M, x, mu, V, v0, w0=w0, full=True)
    if mode == "variance":
        value = float(pd.omega @ pd.omega)
        gc = 2.0 * pd.dpsi.T @ pd.omega
    elif mode == "reconstruction":
        value = pd.value
        gc = 2.0 * (pd.C @ pd.dpsi).T @ pd.a
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")
    grad = pd.U @ gc
    if full:
        return grad, value, pd
    return grad


# --- PGA ----------------------------------------------------------------------------------

MODES = ("variance", "reconstruction", "linearized")


def _sign_fix(c):
    i = int(np.argmax(np.abs(c)))
    return c if c[i] >= 0 else -c


def tangent_pca(L):
    """Eigen-decomposition of ``mean(l l^T)`` for rows ``l`` of ``L``.

    Eigenvectors are sorted by descending eigenvalue and oriented so that
    their largest-magnitude coordinate is positive.
    """
    L = np.atleast_2d(np.asarray(L, float))
    Cov = L.T @ L / L.shape[0]
    lam, Q = np.linalg.eigh(Cov)
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    Q = np.column_stack([_sign_fix(Q[:, i]) for i in order])
    return lam, Q


@contextmanager
def _datum(j):
    """Prefix geometry errors with the index of the datum being processed."""
    try:
        yield
    except GeometryError as exc:
        if getattr(exc, "index", None) is None:
            exc.index = j
            exc.args = (f"datum {j}: {exc}",) + exc.args[1:]
        raise


class _Fitter:
    """Greedy PGA in coordinates of an orthonormal basis ``E`` of ``T_mu M``."""

    def __init__(self, M, X, mu, E, mode, workers=None):
        self.M, self.X, self.mu, self.E = M, X, mu, E
        self.mode = mode
        self.warm = {}
        self.workers = workers

    def _map(self, fn, items):
        if self.workers and self.workers > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(self.workers) as ex:
                return list(ex.map(fn, items))
        return [fn(it) for it in items]

    def objective(self, Vc, c, grad=False):
        """Mean of the per-point terms (and gradient) for direction ``c``."""
        M, E, mu = self.M, self.E, self.mu
        V = E @ Vc if Vc.shape[1] else np.zeros((M.coord_dim, 0))
        v0 = E @ c
        key = Vc.shape[1]

        def term(j):
            with _datum(j):
                return one(j)

        def one(j):
            x = self.X[j]
            w0 = self.warm.get((key, j))
            if grad:
                gv, val, pd = variance_gradient(M, mu if self.mode == "variance" else x, x, mu, V,
                                                v0, mode=self.mode, w0=w0, full=True)
                return val, _coords(M, mu, E, gv), pd.omega[:key + 1]
            S = GeodesicSubspace(mu, np.column_stack([V, v0]))
            pr = project(M, x, S, w0=w0, full=True)
            val = float(pr.w @ pr.w) if self.mode == "variance" else pr.value
            return val, None, pr.w

        terms = self._map(term, range(len(self.X)))
        total = 0.0
        gsum = np.zeros(M.dim)
        for j, (val, gc, w) in enumerate(terms):
            total += val
            if gc is not None:
                gsum += gc
        return total / len(self.X), gsum / len(self.X), terms

    def accept(self, key, terms):
        for j, (_, _, w) in enumerate(terms):
            self.warm[(key, j)] = w

    def direction(self, Vc, tol=PGA_TOL, max_iter=PGA_MAX_ITER):
        M = self.M
        k = Vc.shape[1]
        P = np.eye(M.dim) - Vc @ Vc.T
        if M.dim - k == 1:
            c = P @ np.eye(M.dim)[:, int(np.argmax(np.diag(P)))]
            return _sign_fix(c / np.linalg.norm(c)), {"iterations": 0, "fixed": True}
        _, Q = tangent_pca(self.logs() @ P)
        c = P @ Q[:, 0]
        c /= np.linalg.norm(c)
        sign = 1.0 if self.mode == "variance" else -1.0
        f, gfull, terms = self.objective(Vc, c, grad=True)
        self.accept(k, terms)
        alpha = 1.0
        it = 0
        step = np.inf
        prev = None
        flat = 0
        for it in range(1, max_iter + 1):
            gfull = P @ gfull
            gfull -= (gfull @ c) * c
            gnorm = float(np.linalg.norm(gfull))
            if gnorm < PGA_GRAD_TOL * max(1.0, abs(f)):
                break
            if prev is not None:
                # Barzilai-Borwein length from the last step
                ds, dg = c - prev[0], gfull - prev[1]
                sy = abs(float(ds @ dg))
                alpha = float(np.clip(ds @ ds / sy, 1e-6, 1e6)) if sy > 0 else 2.0 * alpha
            noise = PGA_NOISE * max(1.0, abs(f))
            for _ in range(MAX_HALVINGS + 1):
                cn = P @ (c + sign * alpha * gfull)
                cn /= np.linalg.norm(cn)
                try:
                    fn, _, tn = self.objective(Vc, cn)
                except GeometryError:
                    fn = None
                if fn is not None and sign * (fn - f) > -noise:
                    break
                alpha *= 0.5
            else:
                step = 0.0
                break
            step = float(np.linalg.norm(cn - c))
            log.debug("direction %d it %d: f=%.12g |g|=%.3e step=%.3e alpha=%.3g",
                      k + 1, it, fn, gnorm, step, alpha)
            prev = (c, gfull)
            flat = flat + 1 if sign * (fn - f) <= noise else 0
            c, f = cn, fn
            self.accept(k, tn)
            if step < tol or flat >= PGA_STALL:
                break
            f, gfull, terms = self.objective(Vc, c, grad=True)
            self.accept(k, terms)
        else:
            raise NoConvergenceError(f"PGA direction {k + 1} did not converge",
                                     best=c, residual=step)
        return _sign_fix(c), {"iterations": it, "objective": f, "last_step": step,
                              "gradient_norm": gnorm, "stalled": flat >= PGA_STALL}

    def logs(self):
        out = []
        for j, x in enumerate(self.X):
            with _datum(j):
                out.append(_coords(self.M, self.mu, self.E, geodesic.log(self.M, self.mu, x)))
        return np.array(out)

    def variance(self, Vc):
        """Mean squared distance from ``mu`` of the projections onto ``Exp_mu span(E Vc)``."""
        M = self.M
        S = GeodesicSubspace(self.mu, self.E @ Vc)
        key = ("var", Vc.shape[1])
        out = []
        for j, x in enumerate(self.X):
            w0 = self.warm.get((Vc.shape[1] - 1, j))
            with _datum(j):
                pr = project(M, x, S, w0=w0, full=True)
            out.append(float(pr.w @ pr.w))
            self.warm[key + (j,)] = pr.w
        return float(np.mean(out))


def pga(M, data, mode="variance", k=None, mu=None, workers=None):
    """Principal geodesic analysis.

    Parameters
    ----------
    mode : {'variance', 'reconstruction', 'linearized'}
        ``variance`` maximises projected variance, ``reconstruction``
        minimises the sum of squared distances to the projections, and
        ``linearized`` runs PCA on the logs at the mean.
    k : int, optional
        Number of directions (default: the dimension).
    workers : int, optional
        Threads for the per-point terms; sums are reduced in data order.

    Returns
    -------
    PgaModel
        ``variances[i]`` is the mean squared distance from the mean of the
        data projected onto the span of the first ``i + 1`` directions; it is
        computed with the exact projection for every mode.
    """
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}")
    X = [M.check_point(x) for x in data]
    if not X:
        raise InvalidInputError("empty dataset")
    k = M.dim if k is None else int(k)
    if not 1 <= k <= M.dim:
        raise InvalidInputError(f"k must be in [1, {M.dim}]")
    mu = karcher_mean(M, X) if mu is None else M.check_point(mu)
    E = mf.orthonormal_tangent_basis(M, mu)
    fit = _Fitter(M, X, mu, E, mode, workers)
    diag = {"directions": []}
    if mode == "linearized":
        lam, Q = tangent_pca(fit.logs())
        Vc = Q[:, :k]
        diag["tangent_eigenvalues"] = lam[:k].tolist()
    else:
        Vc = np.zeros((M.dim, 0))
        for i in range(k):
            c, info = fit.direction(Vc)
            Vc = np.column_stack([Vc, c])
            diag["directions"].append(info)
    variances = [fit.variance(Vc[:, :i + 1]) for i in range(k)]
    return PgaModel(mu, E @ Vc, variances, mode, diag)


def principal_angle(M, mu, a, b):
    """Angle in degrees between the lines spanned by tangent vectors ``a`` and ``b``."""
    c = abs(M.inner(mu, a, b)) / (M.norm(mu, a) * M.norm(mu, b))
    return float(np.degrees(np.arccos(min(1.0, c))))
