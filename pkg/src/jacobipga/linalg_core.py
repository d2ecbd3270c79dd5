"""Dense linear algebra: pseudoinverse, Decell's derivative formulas and
finite-difference oracles.

The ``*_k`` functions are unchecked kernels used inside ODE right-hand sides
(compiled by numba when available). The public functions validate input and
delegate to them.
"""
import numpy as np

from . import _accel
from ._accel import njit
from .errors import EvaluationError, InvalidInputError

_EPS = np.finfo(float).eps


@njit
def pinv_k(A):
    rows, cols = A.shape
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    out = np.zeros((cols, rows))
    if s.size == 0 or s[0] == 0.0:
        return out
    cutoff = max(rows, cols) * 2.220446049250313e-16 * s[0]
    for i in range(s.size):
        if s[i] > cutoff:
            out += np.outer(Vt[i], U[:, i]) / s[i]
    return out


@njit
def pinv_rows_k(A):
    """Pseudoinverse of a full-row-rank ``A`` as ``A^T (A A^T)^{-1}``.

    Gauss-Jordan on the small Gram matrix; falls back to the SVD route when
    a pivot drops below ``1e-10`` relative to the largest diagonal entry
    (i.e. the condition number of ``A`` exceeds about 1e5).
    """
    n, m = A.shape
    G = A @ A.T
    inv = np.eye(n)
    scale = 0.0
    for i in range(n):
        scale = max(scale, G[i, i])
    if scale == 0.0:
        return pinv_k(A)
    for c in range(n):
        piv = c
        for r in range(c + 1, n):
            if abs(G[r, c]) > abs(G[piv, c]):
                piv = r
        if abs(G[piv, c]) < 1e-10 * scale:
            return pinv_k(A)
        if piv != c:
            for j in range(n):
                G[c, j], G[piv, j] = G[piv, j], G[c, j]
                inv[c, j], inv[piv, j] = inv[piv, j], inv[c, j]
        d = G[c, c]
        for j in range(n):
            G[c, j] /= d
            inv[c, j] /= d
        for r in range(n):
            if r != c:
                f = G[r, c]
                if f != 0.0:
                    for j in range(n):
                        G[r, j] -= f * G[c, j]
                        inv[r, j] -= f * inv[c, j]
    return A.T @ inv


@njit
def _x_k(A, B, Ap):
    return B.T @ Ap.T @ Ap + Ap @ Ap.T @ B.T


@njit
def decell_lambda_k(A, B, Ap):
    X = _x_k(A, B, Ap)
    return -Ap @ B @ Ap + X - Ap @ A @ X @ A @ Ap


@njit
def decell_lambda2_k(A, B, C, D, Ap):
    L = decell_lambda_k(A, C, Ap)
    X = _x_k(A, B, Ap)
    Y = (D.T @ Ap.T @ Ap
         + B.T @ (L.T @ Ap + Ap.T @ L)
         + (L @ Ap.T + Ap @ L.T) @ B.T
         + Ap @ Ap.T @ D.T)
    return (-L @ B @ Ap
            - Ap @ D @ Ap
            - Ap @ B @ L
            + Y
            - (L @ A + Ap @ C) @ X @ A @ Ap
            - Ap @ A @ Y @ A @ Ap
            - Ap @ A @ X @ (C @ Ap + A @ L))


# --- operator forms ---------------------------------------------------------
# Inside the ODE right-hand sides only products of Lambda and Lambda-tilde with
# vectors are needed. Applying the factors right to left avoids forming the
# matrices.

if _accel.ENABLED:
    @njit
    def mv(A, x):
        r, c = A.shape
        out = np.zeros(r)
        for i in range(r):
            acc = 0.0
            for j in range(c):
                acc += A[i, j] * x[j]
            out[i] = acc
        return out

    @njit
    def mtv(A, y):
        r, c = A.shape
        out = np.zeros(c)
        for i in range(r):
            yi = y[i]
            for j in range(c):
                out[j] += A[i, j] * yi
        return out
else:
    def mv(A, x):
        return A @ x

    def mtv(A, y):
        return A.T @ y


@njit
def gram_inv(Ap):
    """``(A A^T)^{-1} = A+^T A+`` for ``A`` of full row rank."""
    n, m = Ap.shape[1], Ap.shape[0]
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            acc = 0.0
            for k in range(m):
                acc += Ap[k, i] * Ap[k, j]
            G[i, j] = acc
            G[j, i] = acc
    return G


@njit
def _proj(A, Ap, x):
    # (I - A+ A) x
    return x - mv(Ap, mv(A, x))


# For full row rank the pseudoinverse is A^T G and its derivative along B
# reduces to P B^T G - A+ B A+ with P = I - A+ A.

@njit
def lam_mv(A, Ap, G, B, u):
    """``Lambda(A, B) u`` for ``A`` of full row rank."""
    return _proj(A, Ap, mtv(B, mv(G, u))) - mv(Ap, mv(B, mv(Ap, u)))


@njit
def lam_tv(A, Ap, G, B, y):
    """``Lambda(A, B)^T y``."""
    return mv(G, mv(B, _proj(A, Ap, y))) - mtv(Ap, mtv(B, mtv(Ap, y)))


@njit
def _dproj(A, Ap, G, C, x):
    # derivative of I - A+ A along C (symmetric)
    return -(lam_mv(A, Ap, G, C, mv(A, x)) + mv(Ap, mv(C, x)))


@njit
def _dgram(A, G, C, w):
    # derivative of G along C applied to w
    Gw = mv(G, w)
    return -mv(G, mv(C, mtv(A, Gw)) + mv(A, mtv(C, Gw)))


@njit
def lam2_mv(A, Ap, G, B, C, D, u):
    """``Lambda-tilde(A, B, C, D) u`` for ``A`` of full row rank."""
    g = mv(G, u)
    t = mv(Ap, u)
    return (_dproj(A, Ap, G, C, mtv(B, g))
            + _proj(A, Ap, mtv(D, g))
            + _proj(A, Ap, mtv(B, _dgram(A, G, C, u)))
            - lam_mv(A, Ap, G, C, mv(B, t))
            - mv(Ap, mv(D, t))
            - mv(Ap, mv(B, lam_mv(A, Ap, G, C, u))))


@njit
def lam2_tv(A, Ap, G, B, C, D, y):
    """``Lambda-tilde(A, B, C, D)^T y``."""
    t = mtv(Ap, y)
    return (mv(G, mv(B, _dproj(A, Ap, G, C, y)))
            + mv(G, mv(D, _proj(A, Ap, y)))
            + _dgram(A, G, C, mv(B, _proj(A, Ap, y)))
            - mtv(Ap, mtv(B, lam_tv(A, Ap, G, C, y)))
            - mtv(Ap, mtv(D, t))
            - lam_tv(A, Ap, G, C, mtv(B, t)))


def _as_matrix(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return np.ascontiguousarray(A)


def _same_shape(A, *others):
    for name, M in others:
        if M.shape != A.shape:
            raise InvalidInputError(f"{name} has shape {M.shape}, expected {A.shape}")


def pinv(A):
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``max(rows, cols) * eps * sigma_max`` are treated
    as zero, so rank-deficient input is handled gracefully.
    """
    return pinv_k(_as_matrix(A))


def decell_lambda(A, B):
    """Derivative of the pseudoinverse, ``d/ds pinv(A_s)`` for ``B = dA_s/ds``.

    Direct transcription of Decell's formula

        -A+ B A+ + X - A+ A X A A+,    X = B^T A+^T A+ + A+ A+^T B^T.
    """
    A = _as_matrix(A)
    B = _as_matrix(B, "B")
    _same_shape(A, ("B", B))
    return decell_lambda_k(A, B, pinv_k(A))


def decell_lambda2(A, B, C, D):
    """Mixed second derivative of the pseudoinverse of a two-parameter family.

    ``B = dA/dt``, ``C = dA/ds`` and ``D = d2A/dsdt``; returns
    ``d2/dsdt pinv(A)``.
    """
    A = _as_matrix(A)
    B = _as_matrix(B, "B")
    C = _as_matrix(C, "C")
    D = _as_matrix(D, "D")
    _same_shape(A, ("B", B), ("C", C), ("D", D))
    return decell_lambda2_k(A, B, C, D, pinv_k(A))


def penrose_residuals(A, Ap):
    """Norms of the four Penrose-condition residuals."""
    A = np.asarray(A, float)
    Ap = np.asarray(Ap, float)
    AAp = A @ Ap
    ApA = Ap @ A
    return np.array([
        np.linalg.norm(AAp @ A - A),
        np.linalg.norm(ApA @ Ap - Ap),
        np.linalg.norm(AAp.T - AAp),
        np.linalg.norm(ApA.T - ApA),
    ])


def _checked(f, x):
    val = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(val)):
        raise EvaluationError(f"non-finite function value at {x!r}")
    return val


def fd_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of a vector-valued map at ``x``."""
    if h <= 0:
        raise InvalidInputError("step size must be positive")
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((_checked(f, x + e) - _checked(f, x - e)) / (2 * h))
    return np.stack([np.atleast_1d(c) for c in cols], axis=-1)


def fd_directional(f, x, d, h=1e-6):
    """Central difference of ``f`` at ``x`` along direction ``d``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    return (_checked(f, x + h * d) - _checked(f, x - h * d)) / (2 * h)


def fd_mixed(f, x, d1, d2, h=1e-4):
    """Second-order central difference of ``f`` along ``d1`` and ``d2``."""
    x = np.asarray(x, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    return (_checked(f, x + h * d1 + h * d2) - _checked(f, x + h * d1 - h * d2)
            - _checked(f, x - h * d1 + h * d2) + _checked(f, x - h * d1 - h * d2)) / (4 * h * h)


def rel_err(a, b, floor=1e-300):
    """Relative error ``|a - b| / max(|b|, floor)`` in the Frobenius norm."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))
