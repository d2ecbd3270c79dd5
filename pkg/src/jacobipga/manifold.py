"""Manifold representations.

Two kinds are supported:

* :class:`ImplicitManifold` - a regular level set ``F(x) = 0`` of a map
  ``R^m -> R^n``. Points and tangent vectors live in ``R^m`` and the metric
  is the restriction of the Euclidean one.
* :class:`ParametricManifold` - a single chart with metric ``g(x)`` and
  Christoffel symbols ``Gamma[k, i, j]``. Points and vectors are chart
  coordinates.

Both expose the derivative data the geodesic and variation systems need.
Builtins supply it analytically and carry compiled right-hand sides; user
manifolds may omit higher derivatives, which then fall back to nested central
differences (each nesting level costs roughly three digits of accuracy).
"""
import configparser
from pathlib import Path

import numpy as np

from . import _accel, _kernels
from .errors import (CapabilityError, ConfigurationError, ConstraintViolationError,
                     DegenerateError, InvalidInputError)
from .linalg_core import pinv_k

CONSTRAINT_TOL = 1e-9
TANGENCY_TOL = 1e-9
GS_SKIP = 1e-8


def _fd_stack(f, x, h):
    """Central differences of an array-valued ``f``; new axis appended last."""
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


class Manifold:
    kind = "abstract"
    name = "manifold"

    dim: int
    coord_dim: int

    def metric(self, x):
        raise NotImplementedError

    def inner(self, x, a, b):
        return float(np.asarray(a) @ self.metric(x) @ np.asarray(b))

    def norm(self, x, a):
        return float(np.sqrt(max(self.inner(x, a, a), 0.0)))

    def check_point(self, x, tol=CONSTRAINT_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.coord_dim,):
            raise InvalidInputError(f"point must have shape ({self.coord_dim},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("point has non-finite coordinates")
        return x

    def tangent_project(self, x, v):
        return np.asarray(v, dtype=float)

    def flow_kernel(self, nj, pairs):
        """Arguments for the builtin right-hand side, or None."""
        return None

    def flow_rhs(self, nj, pairs):
        """Python ``rhs(t, y, args)`` built from the derivative callbacks."""
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} dim={self.dim}>"


class ImplicitManifold(Manifold):
    """Level set ``{x in R^m : F(x) = 0}`` of ``F: R^m -> R^n``.

    Parameters
    ----------
    constraint : callable
        ``F(x) -> (n,)``.
    m, n : int
        Embedding and codomain dimensions.
    jacobian, hessians, third, fourth : callable, optional
        Derivatives of F with shapes ``(n, m)``, ``(n, m, m)``,
        ``(n, m, m, m)`` and ``(n, m, m, m, m)``. Missing ones are obtained
        by central differences of the next lower order.
    degree : int, optional
        Polynomial degree of F if known; degree <= 2 skips the third and
        fourth derivative terms.
    """

    kind = "implicit"

    def __init__(self, constraint, m, n, jacobian=None, hessians=None, third=None,
                 fourth=None, degree=None, name="implicit"):
        if not (0 < n < m):
            raise InvalidInputError("need 0 < n < m")
        self.m = int(m)
        self.n = int(n)
        self.dim = self.m - self.n
        self.coord_dim = self.m
        self.name = name
        self.degree = degree
        self._F = constraint
        self._jac = jacobian
        self._hess = hessians
        self._third = third
        self._fourth = fourth
        self.analytic = {
            "jacobian": jacobian is not None,
            "hessians": hessians is not None,
            "third": third is not None or (degree is not None and degree <= 2),
            "fourth": fourth is not None or (degree is not None and degree <= 3),
        }

    def F(self, x):
        return np.atleast_1d(np.asarray(self._F(np.asarray(x, float)), dtype=float))

    def jacobian(self, x):
        x = np.asarray(x, float)
        if self._jac is not None:
            return np.asarray(self._jac(x), float).reshape(self.n, self.m)
        return _fd_stack(self.F, x, 1e-6).reshape(self.n, self.m)

    def hessians(self, x):
        x = np.asarray(x, float)
        if self._hess is not None:
            return np.asarray(self._hess(x), float).reshape(self.n, self.m, self.m)
        H = _fd_stack(self.jacobian, x, 1e-5)
        return 0.5 * (H + H.transpose(0, 2, 1))

    def third(self, x):
        x = np.asarray(x, float)
        if self.degree is not None and self.degree <= 2:
            return np.zeros((self.n,) + (self.m,) * 3)
        if self._third is not None:
            return np.asarray(self._third(x), float).reshape((self.n,) + (self.m,) * 3)
        return _fd_stack(self.hessians, x, 1e-4)

    def fourth(self, x):
        x = np.asarray(x, float)
        if self.degree is not None and self.degree <= 3:
            return np.zeros((self.n,) + (self.m,) * 4)
        if self._fourth is not None:
            return np.asarray(self._fourth(x), float).reshape((self.n,) + (self.m,) * 4)
        return _fd_stack(self.third, x, 1e-3)

    def metric(self, x):
        return np.eye(self.m)

    def inner(self, x, a, b):
        return float(np.dot(a, b))

    def check_point(self, x, tol=CONSTRAINT_TOL):
        x = super().check_point(x)
        res = float(np.linalg.norm(self.F(x)))
        if res > tol:
            raise ConstraintViolationError(
                f"point is off the manifold: |F(x)| = {res:.3e} > {tol:.1e}", residual=res)
        return x

    def tangent_project(self, x, v):
        """``(I - DF^+ DF) v``, the orthogonal projection onto ``T_x M``."""
        x = self.check_point(x)
        A = np.ascontiguousarray(self.jacobian(x))
        v = np.asarray(v, float)
        return v - pinv_k(A) @ (A @ v)

    def project_to_manifold(self, x, tol=1e-13, max_iter=50):
        """Gauss-Newton pull-back of an ambient point onto ``F = 0``."""
        x = np.asarray(x, float).copy()
        for _ in range(max_iter):
            f = self.F(x)
            if np.linalg.norm(f) < tol:
                return x
            x = x - pinv_k(np.ascontiguousarray(self.jacobian(x))) @ f
        if np.linalg.norm(self.F(x)) < 1e3 * tol:
            return x
        raise ConstraintViolationError("could not pull point onto the manifold",
                                       residual=float(np.linalg.norm(self.F(x))))

    def flow_rhs(self, nj, pairs):
        m = self.m
        need_second = pairs.shape[0] > 0
        hot = not (self.degree is not None and self.degree <= 2)
        n = self.n
        zero3 = np.zeros((n, m, m, m))
        zero4 = np.zeros((n, m, m, m, m))
        core = _kernels.implicit_rhs

        def rhs(t, y, args):
            x = y[:m]
            dF = np.ascontiguousarray(self.jacobian(x))
            H = np.ascontiguousarray(self.hessians(x))
            if hot and nj > 0:
                T3 = np.ascontiguousarray(self.third(x))
                T4 = np.ascontiguousarray(self.fourth(x)) if need_second else zero4
            else:
                T3, T4 = zero3, zero4
            return core(y, m, nj, pairs, dF, H, T3, T4, hot)

        return rhs


class QuadricManifold(ImplicitManifold):
    """Level set of ``F_k(x) = x^T A_k x + b_k^T x + c_k`` (symmetric ``A_k``)."""

    def __init__(self, A, b, c, name="quadric"):
        A = np.asarray(A, float)
        if A.ndim == 2:
            A = A[None]
        b = np.atleast_2d(np.asarray(b, float))
        c = np.atleast_1d(np.asarray(c, float))
        n, m, _ = A.shape
        if b.shape != (n, m) or c.shape != (n,):
            raise InvalidInputError("inconsistent quadric coefficients")
        A = 0.5 * (A + A.transpose(0, 2, 1))
        self.QA = np.ascontiguousarray(A)
        self.Qb = np.ascontiguousarray(b)
        self.Qc = c
        super().__init__(self._value, m, n, jacobian=self._jacobian, hessians=self._hessians,
                         degree=2, name=name)

    def _value(self, x):
        return np.einsum("kij,i,j->k", self.QA, x, x) + self.Qb @ x + self.Qc

    def _jacobian(self, x):
        return 2.0 * np.einsum("kij,j->ki", self.QA, x) + self.Qb

    def _hessians(self, x):
        return 2.0 * self.QA

    def flow_kernel(self, nj, pairs):
        return _kernels.builtin_args(_kernels.QUADRIC, self.m, nj, pairs, self.QA, self.Qb)


class ParametricManifold(Manifold):
    """Single-chart manifold with metric and Christoffel symbols.

    Parameters
    ----------
    dim : int
        Chart dimension.
    metric : callable
        ``g(x) -> (dim, dim)`` symmetric positive definite.
    christoffel : callable
        ``Gamma(x) -> (dim, dim, dim)`` indexed ``[k, i, j]``.
    dchristoffel, d2christoffel : callable, optional
        First and second partials, indexed ``[k, i, j, l]`` and
        ``[k, i, j, l, r]``. Central differences are used when missing.
    domain : callable, optional
        ``domain(x) -> bool``; geodesics leaving it raise ``ChartExitError``.
    """

    kind = "parametric"

    def __init__(self, dim, metric, christoffel, dchristoffel=None, d2christoffel=None,
                 domain=None, name="parametric"):
        self.dim = int(dim)
        self.coord_dim = self.dim
        self.name = name
        self._g = metric
        self._G = christoffel
        self._dG = dchristoffel
        self._d2G = d2christoffel
        self.domain = domain

    def metric(self, x):
        return np.asarray(self._g(np.asarray(x, float)), float).reshape(self.dim, self.dim)

    def christoffel(self, x):
        return np.asarray(self._G(np.asarray(x, float)), float).reshape((self.dim,) * 3)

    def dchristoffel(self, x):
        x = np.asarray(x, float)
        if self._dG is not None:
            return np.asarray(self._dG(x), float).reshape((self.dim,) * 4)
        return _fd_stack(self.christoffel, x, 1e-5)

    def d2christoffel(self, x):
        x = np.asarray(x, float)
        if self._d2G is not None:
            return np.asarray(self._d2G(x), float).reshape((self.dim,) * 5)
        return _fd_stack(self.dchristoffel, x, 1e-4)

    def check_point(self, x, tol=CONSTRAINT_TOL):
        x = super().check_point(x)
        if self.domain is not None and not self.domain(x):
            raise InvalidInputError("point outside the chart domain")
        return x

    def flow_rhs(self, nj, pairs):
        d = self.dim
        core = _kernels.param_rhs
        zero4 = np.zeros((d,) * 4)
        zero5 = np.zeros((d,) * 5)
        need_second = pairs.shape[0] > 0

        def rhs(t, y, args):
            x = y[:d]
            G = np.ascontiguousarray(self.christoffel(x))
            dG = np.ascontiguousarray(self.dchristoffel(x)) if nj > 0 else zero4
            d2G = np.ascontiguousarray(self.d2christoffel(x)) if need_second else zero5
            return core(y, d, nj, pairs, G, dG, d2G)

        return rhs


class SphereChart(ParametricManifold):
    """Unit 2-sphere in polar/azimuth coordinates ``(theta, phi)``."""

    def __init__(self, margin=1e-3):
        self.margin = margin
        super().__init__(2, self._metric, self._christoffel,
                         dchristoffel=lambda x: _kernels.sphere_christoffel(x)[1],
                         d2christoffel=lambda x: _kernels.sphere_christoffel(x)[2],
                         domain=lambda x: margin < x[0] < np.pi - margin,
                         name="sphere_param")

    @staticmethod
    def _metric(x):
        return np.diag([1.0, np.sin(x[0]) ** 2])

    @staticmethod
    def _christoffel(x):
        return _kernels.sphere_christoffel(np.asarray(x, float))[0]

    @staticmethod
    def embed(x):
        th, ph = x[0], x[1]
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    def flow_kernel(self, nj, pairs):
        return _kernels.builtin_args(_kernels.SPHERE, 2, nj, pairs)


class FlatSpace(ParametricManifold):
    """Euclidean ``R^dim`` with vanishing Christoffel symbols."""

    def __init__(self, dim):
        d = int(dim)
        if d < 1:
            raise InvalidInputError("dimension must be positive")
        super().__init__(d, lambda x: np.eye(d), lambda x: np.zeros((d, d, d)),
                         dchristoffel=lambda x: np.zeros((d,) * 4),
                         d2christoffel=lambda x: np.zeros((d,) * 5),
                         name=f"flat{d}")

    def inner(self, x, a, b):
        return float(np.dot(a, b))

    def flow_kernel(self, nj, pairs):
        return _kernels.builtin_args(_kernels.FLAT, self.dim, nj, pairs)


# --- builtins ---------------------------------------------------------------

def surface_sc(c):
    """``S_c = {c x1^2 + x2^2 + x3^2 = 1}``; Gaussian curvature c at (0, 0, 1)."""
    return QuadricManifold(np.diag([float(c), 1.0, 1.0]), np.zeros(3), -1.0,
                           name=f"surface_sc(c={float(c):g})")


def m4():
    """``M4 = {x1^2 - 2 x2^2 + x3^2 - 2 x4 + x5 = 1}`` in R^5."""
    return QuadricManifold(np.diag([1.0, -2.0, 1.0, 0.0, 0.0]),
                           np.array([0.0, 0.0, 0.0, -2.0, 1.0]), -1.0, name="m4")


BUILTINS = ("surface_sc", "m4", "sphere_param", "flat")


def builtin(name, params=()):
    """Construct a builtin manifold by name.

    ``surface_sc`` takes ``[c]``, ``flat`` takes ``[dim]`` (default 2);
    ``m4`` and ``sphere_param`` take no parameters.
    """
    params = list(params)
    if name == "surface_sc":
        if len(params) != 1:
            raise ConfigurationError("surface_sc needs exactly one parameter c")
        return surface_sc(params[0])
    if name == "m4":
        return m4()
    if name == "sphere_param":
        return SphereChart()
    if name == "flat":
        dim = int(params[0]) if params else 2
        if dim < 1 or (params and float(params[0]) != dim):
            raise ConfigurationError("flat needs a positive integer dimension")
        return FlatSpace(dim)
    raise ConfigurationError(f"unknown manifold {name!r}; builtins are {', '.join(BUILTINS)}")


def tangent_project(M, x, v):
    """Orthogonal projection of ``v`` onto ``T_x M`` (identity in a chart)."""
    return M.tangent_project(x, v)


def orthonormal_tangent_basis(M, x):
    """Orthonormal basis of ``T_x M`` as the columns of a ``(coord_dim, dim)`` array.

    Gram-Schmidt (two passes) over the projected canonical vectors in index
    order; vectors whose projection is shorter than 1e-8 are skipped.
    """
    x = M.check_point(x)
    g = M.metric(x)
    basis = []
    for i in range(M.coord_dim):
        e = np.zeros(M.coord_dim)
        e[i] = 1.0
        v = M.tangent_project(x, e)
        for _ in range(2):
            for b in basis:
                v = v - (b @ g @ v) * b
        nv = np.sqrt(max(v @ g @ v, 0.0))
        if nv < GS_SKIP:
            continue
        basis.append(v / nv)
        if len(basis) == M.dim:
            break
    if len(basis) < M.dim:
        raise DegenerateError(f"tangent space at {x} has rank {len(basis)} < {M.dim}")
    return np.stack(basis, axis=1)


def coordinates(M, x, E, v):
    """Coordinates of tangent vector ``v`` in the orthonormal columns of ``E``."""
    return E.T @ M.metric(x) @ np.asarray(v, float)


def require_second_order(M):
    if isinstance(M, ImplicitManifold) and M.degree is None and not M.analytic["third"]:
        return "third derivatives by finite differences"
    return None


# --- user registry and definition files ----------------------------------------

_REGISTRY = {}


def register(name, factory):
    """Register a zero-argument manifold factory under ``name``."""
    if name in BUILTINS:
        raise ConfigurationError(f"{name!r} is a builtin name")
    _REGISTRY[name] = factory


def registered():
    return sorted(_REGISTRY)


def from_spec(text):
    """Parse ``name[:p1,p2,...]`` into a manifold (builtin or registered)."""
    name, _, rest = text.partition(":")
    name = name.strip()
    params = [float(p) for p in rest.split(",") if p.strip()] if rest else []
    if name in _REGISTRY:
        if params:
            raise ConfigurationError("registered manifolds take no parameters")
        return _REGISTRY[name]()
    try:
        return builtin(name, params)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_manifold(path):
    """Read a key-value manifold definition file.

    Recognised keys: ``kind`` (``builtin`` or ``registered``), ``name``,
    ``params`` (comma separated) and optional ``m``/``n`` or ``dim`` which
    are checked against the constructed manifold.
    """
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string("[manifold]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    sec = cp["manifold"]
    kind = sec.get("kind", "builtin").strip()
    name = sec.get("name")
    if not name:
        raise ConfigurationError(f"{path}: missing 'name'")
    if kind == "builtin":
        params = [float(p) for p in sec.get("params", "").split(",") if p.strip()]
        M = builtin(name.strip(), params)
    elif kind == "registered":
        if name.strip() not in _REGISTRY:
            raise ConfigurationError(f"{path}: no registered manifold {name!r}")
        M = _REGISTRY[name.strip()]()
    else:
        raise ConfigurationError(f"{path}: unknown kind {kind!r}")
    for key, attr in (("m", "m"), ("n", "n"), ("dim", "dim")):
        if key in sec and int(sec[key]) != getattr(M, attr, None):
            raise ConfigurationError(f"{path}: {key}={sec[key]} does not match {M!r}")
    return M


def flow_functions(M, nj, pairs):
    """``(rhs, args, loops)`` for an augmented flow.

    Builtins use the shared builtin right-hand side, through the cached
    compiled loops when numba is active. Other manifolds get a Python
    right-hand side assembled from their derivative callbacks.
    """
    args = M.flow_kernel(nj, pairs)
    if args is None:
        return M.flow_rhs(nj, pairs), (), None
    if _accel.ENABLED:
        return None, args, (_kernels.builtin_dopri5, _kernels.builtin_rk4)
    return _kernels.builtin_rhs, args, None


def check_capability(M, order):
    """Raise CapabilityError if ``M`` cannot supply derivatives of the given order."""
    if isinstance(M, ImplicitManifold):
        if M._F is None:
            raise CapabilityError("constraint map missing")
    elif isinstance(M, ParametricManifold):
        if M._G is None:
            raise CapabilityError("Christoffel symbols missing")
