"""Right-hand sides of the augmented geodesic / Jacobi / second-variation IVPs.

State layout, with ``d`` the coordinate dimension (embedding dimension m for
level sets, chart dimension for parametric manifolds)::

    [x, p]                      geodesic (p = momentum, or velocity in a chart)
    [y_j, z_j]  j < nj          first variations; z_j is the Jacobi field
    [q_s, r_s]  s < ns          second variations for the pair pairs[s] = (iw, iu)

The second-variation blocks differentiate first-variation field ``iw`` along
the variation described by field ``iu``.
"""
import numpy as np

from ._accel import njit
from .ode import dopri5_inline, rk4_inline
from .linalg_core import gram_inv, lam2_mv, lam2_tv, lam_mv, lam_tv, mtv, mv, pinv_rows_k


# --- level sets --------------------------------------------------------------

@njit
def _th(c, H, v):
    # T^H(c, v) = -(sum_k c_k H_k) v
    out = np.zeros(v.shape[0])
    for k in range(c.shape[0]):
        out -= c[k] * mv(H[k], v)
    return out


@njit
def _da(H, a):
    # derivative of the constraint Jacobian along a: rows H_k a
    n, m = H.shape[0], H.shape[1]
    out = np.empty((n, m))
    for k in range(n):
        out[k] = mv(H[k], a)
    return out


@njit
def _dh(T3, a):
    # derivative of each constraint Hessian along a
    n, m = T3.shape[0], T3.shape[1]
    out = np.empty((n, m, m))
    for k in range(n):
        out[k] = (a @ T3[k].reshape(m, m * m)).reshape(m, m)
    return out


@njit
def _ddh(T4, a, b):
    n, m = T4.shape[0], T4.shape[1]
    out = np.empty((n, m, m))
    ab = np.outer(a, b).ravel()
    for k in range(n):
        out[k] = (ab @ T4[k].reshape(m * m, m * m)).reshape(m, m)
    return out


@njit
def implicit_rhs(y, m, nj, pairs, dF, H, T3, T4, hot):
    """Augmented right-hand side for a level set ``F(x) = 0``.

    ``hot`` is False when third and higher derivatives of F vanish.
    Hypersurfaces go through the scalar formulas of :func:`hypersurface_rhs`.
    """
    if dF.shape[0] == 1:
        return hypersurface_rhs(y, m, nj, pairs, dF[0], H[0], T3[0], T4[0], hot)
    return general_rhs(y, m, nj, pairs, dF, H, T3, T4, hot)


@njit
def _dot(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


@njit
def _lam1(a, s, b):
    # Lambda(a^T, b^T) for a single row a with s = |a|^2; an (m, 1) matrix
    return b / s - (2.0 * _dot(a, b) / (s * s)) * a


@njit
def _lam2(a, s, b, c, d):
    # Lambda-tilde(a^T, b^T, c^T, d^T) for a single row
    ab = _dot(a, b)
    ds = 2.0 * _dot(a, c)
    return (d / s - (ds / (s * s)) * b - (2.0 * ab / (s * s)) * c
            + ((4.0 * ab * ds / s - 2.0 * (_dot(c, b) + _dot(a, d))) / (s * s)) * a)


@njit
def hypersurface_rhs(y, m, nj, pairs, a, H, T3, T4, hot):
    """:func:`general_rhs` for a single constraint with gradient ``a`` and Hessian ``H``.

    The pseudoinverse of the row ``a^T`` is ``a / |a|^2`` and the Lagrange
    multipliers are scalars, so every operator reduces to dot products.
    """
    out = np.zeros(y.shape[0])
    p = y[m:2 * m]
    s = _dot(a, a)
    ap = _dot(a, p)
    xd = p - (ap / s) * a
    mu = -ap / s
    Hx = mv(H, xd)
    out[:m] = xd
    out[m:2 * m] = -mu * Hx

    bs = np.empty((nj, m))
    lams = np.empty((nj, m))
    zds = np.empty((nj, m))
    Hzs = np.empty((nj, m))
    dmus = np.empty(nj)
    if hot:
        dHs = np.empty((nj, m, m))
    else:
        dHs = np.empty((0, m, m))
    for j in range(nj):
        b = 2 * m + 2 * m * j
        yj = y[b:b + m]
        zj = y[b + m:b + 2 * m]
        bj = mv(H, zj)
        lj = _lam1(a, s, bj)
        ay = _dot(a, yj)
        zd = yj - ((ay + _dot(bj, p)) / s) * a - ap * lj
        dmu = -ay / s - _dot(lj, p)
        Hz = mv(H, zd)
        yd = -mu * Hz - dmu * Hx
        if hot:
            dH = (zj @ T3.reshape(m, m * m)).reshape(m, m)
            dHs[j] = dH
            yd -= mu * mv(dH, xd)
        out[b:b + m] = yd
        out[b + m:b + 2 * m] = zd
        bs[j] = bj
        lams[j] = lj
        zds[j] = zd
        Hzs[j] = Hz
        dmus[j] = dmu

    base = 2 * m + 2 * m * nj
    for k in range(pairs.shape[0]):
        iw = pairs[k, 0]
        iu = pairs[k, 1]
        bw = 2 * m + 2 * m * iw
        bu = 2 * m + 2 * m * iu
        yw = y[bw:bw + m]
        zw = y[bw + m:bw + 2 * m]
        yu = y[bu:bu + m]
        zu = y[bu + m:bu + 2 * m]
        b = base + 2 * m * k
        q = y[b:b + m]
        r = y[b + m:b + 2 * m]
        Bw, Bu = bs[iw], bs[iu]
        lw, lu = lams[iw], lams[iu]
        br = mv(H, r)
        lr = _lam1(a, s, br)
        if hot:
            D = mv((zu @ T3.reshape(m, m * m)).reshape(m, m), zw)
        else:
            D = np.zeros(m)
        lt = _lam2(a, s, Bw, Bu, D)
        aq = _dot(a, q)
        rd = (q - ((aq + _dot(br, p) + _dot(Bu, yw) + _dot(D, p) + _dot(Bw, yu)) / s) * a
              - ap * (lr + lt) - (_dot(a, yw) + _dot(Bw, p)) * lu
              - (_dot(Bu, p) + _dot(a, yu)) * lw)
        ddmu = -(_dot(lu, yw) + aq / s + _dot(lt + lr, p) + _dot(lw, yu))
        qd = -dmus[iu] * Hzs[iw] - mu * mv(H, rd) - ddmu * Hx - dmus[iw] * Hzs[iu]
        if hot:
            dHu, dHw = dHs[iu], dHs[iw]
            ddH = (np.outer(zu, zw).ravel() @ T4.reshape(m * m, m * m)).reshape(m, m)
            dHr = (r @ T3.reshape(m, m * m)).reshape(m, m)
            qd -= (mu * (mv(dHu, zds[iw]) + mv(ddH, xd) + mv(dHr, xd) + mv(dHw, zds[iu]))
                   + dmus[iu] * mv(dHw, xd) + dmus[iw] * mv(dHu, xd))
        out[b:b + m] = qd
        out[b + m:b + 2 * m] = rd
    return out


@njit
def general_rhs(y, m, nj, pairs, dF, H, T3, T4, hot):
    """Augmented right-hand side for ``n`` constraints (full-rank Jacobian)."""
    n = dF.shape[0]
    out = np.zeros(y.shape[0])
    p = y[m:2 * m]
    A = dF
    Ap = pinv_rows_k(A)
    G = gram_inv(Ap)
    xd = p - mv(Ap, mv(A, p))
    mu = -mtv(Ap, p)
    Av = mv(A, p)
    out[:m] = xd
    out[m:2 * m] = _th(mu, H, xd)

    Bs = np.empty((nj, n, m))
    zds = np.empty((nj, m))
    dmus = np.empty((nj, n))
    dHs = np.zeros((nj, n, m, m))
    for j in range(nj):
        b = 2 * m + 2 * m * j
        yj = y[b:b + m]
        zj = y[b + m:b + 2 * m]
        B = _da(H, zj)
        zd = yj - mv(Ap, mv(A, yj)) - lam_mv(A, Ap, G, B, Av) - mv(Ap, mv(B, p))
        dmu = -mtv(Ap, yj) - lam_tv(A, Ap, G, B, p)
        yd = _th(mu, H, zd) + _th(dmu, H, xd)
        if hot:
            dH = _dh(T3, zj)
            dHs[j] = dH
            yd += _th(mu, dH, xd)
        out[b:b + m] = yd
        out[b + m:b + 2 * m] = zd
        Bs[j] = B
        zds[j] = zd
        dmus[j] = dmu

    base = 2 * m + 2 * m * nj
    for s in range(pairs.shape[0]):
        iw = pairs[s, 0]
        iu = pairs[s, 1]
        bw = 2 * m + 2 * m * iw
        bu = 2 * m + 2 * m * iu
        yw = y[bw:bw + m]
        zw = y[bw + m:bw + 2 * m]
        yu = y[bu:bu + m]
        zu = y[bu + m:bu + 2 * m]
        b = base + 2 * m * s
        q = y[b:b + m]
        r = y[b + m:b + 2 * m]
        Bw, Bu = Bs[iw], Bs[iu]
        Br = _da(H, r)
        if hot:
            D = np.empty((n, m))
            for k in range(n):
                D[k] = (zu @ T3[k].reshape(m, m * m)).reshape(m, m) @ zw
        else:
            D = np.zeros((n, m))
        rd = (q - mv(Ap, mv(A, q)) - lam_mv(A, Ap, G, Br, Av) - mv(Ap, mv(Br, p))
              - lam_mv(A, Ap, G, Bu, mv(A, yw) + mv(Bw, p)) - mv(Ap, mv(Bu, yw))
              - lam2_mv(A, Ap, G, Bw, Bu, D, Av)
              - lam_mv(A, Ap, G, Bw, mv(Bu, p) + mv(A, yu))
              - mv(Ap, mv(D, p)) - mv(Ap, mv(Bw, yu)))
        ddmu = (-lam_tv(A, Ap, G, Bu, yw) - mtv(Ap, q) - lam2_tv(A, Ap, G, Bw, Bu, D, p)
                - lam_tv(A, Ap, G, Br, p) - lam_tv(A, Ap, G, Bw, yu))
        qd = (_th(dmus[iu], H, zds[iw]) + _th(mu, H, rd)
              + _th(ddmu, H, xd) + _th(dmus[iw], H, zds[iu]))
        if hot:
            qd += _th(mu, dHs[iu], zds[iw])
            qd += _th(mu, _ddh(T4, zu, zw), xd)
            qd += _th(mu, _dh(T3, r), xd)
            qd += _th(dmus[iu], dHs[iw], xd)
            qd += _th(mu, dHs[iw], zds[iu])
            qd += _th(dmus[iw], dHs[iu], xd)
        out[b:b + m] = qd
        out[b + m:b + 2 * m] = rd
    return out


@njit
def quadric_derivs(QA, Qb, x):
    n, m = Qb.shape
    dF = np.empty((n, m))
    H = np.empty((n, m, m))
    for k in range(n):
        dF[k] = 2.0 * (QA[k] @ x) + Qb[k]
        H[k] = 2.0 * QA[k]
    return dF, H


@njit
def quadric_rhs(y, QA, Qb, nj, pairs):
    m = Qb.shape[1]
    dF, H = quadric_derivs(QA, Qb, y[:m])
    dummy = np.zeros((1, 1, 1, 1))
    return implicit_rhs(y, m, nj, pairs, dF, H, dummy, dummy.reshape(1, 1, 1, 1, 1), False)


# --- charts --------------------------------------------------------------------

@njit
def _tp(G, a, b):
    # T(a, b)_k = -Gamma^k_ij a^i b^j
    d = a.shape[0]
    return -(G.reshape(d, d * d) @ np.outer(a, b).ravel())


@njit
def _dg(dG, z):
    # Christoffel derivative along z: sum_l dGamma^k_ij,l z^l
    d = z.shape[0]
    return (dG.reshape(d * d * d, d) @ z).reshape(d, d, d)


@njit
def _ddg(d2G, z, u):
    d = z.shape[0]
    return (d2G.reshape(d * d * d, d * d) @ np.outer(z, u).ravel()).reshape(d, d, d)


@njit
def param_rhs(y, d, nj, pairs, G, dG, d2G):
    """Augmented right-hand side in a chart with Christoffel data ``G``."""
    out = np.zeros(y.shape[0])
    xd = y[d:2 * d]
    out[:d] = xd
    out[d:2 * d] = _tp(G, xd, xd)
    for j in range(nj):
        b = 2 * d + 2 * d * j
        yj = y[b:b + d]
        zj = y[b + d:b + 2 * d]
        out[b:b + d] = _tp(_dg(dG, zj), xd, xd) + 2.0 * _tp(G, yj, xd)
        out[b + d:b + 2 * d] = yj
    base = 2 * d + 2 * d * nj
    for s in range(pairs.shape[0]):
        iw = pairs[s, 0]
        iu = pairs[s, 1]
        bw = 2 * d + 2 * d * iw
        bu = 2 * d + 2 * d * iu
        yw = y[bw:bw + d]
        zw = y[bw + d:bw + 2 * d]
        yu = y[bu:bu + d]
        zu = y[bu + d:bu + 2 * d]
        b = base + 2 * d * s
        q = y[b:b + d]
        r = y[b + d:b + 2 * d]
        qd = (_tp(_ddg(d2G, zw, zu), xd, xd) + _tp(_dg(dG, r), xd, xd)
              + 2.0 * _tp(_dg(dG, zw), yu, xd) + 2.0 * _tp(_dg(dG, zu), yw, xd)
              + 2.0 * _tp(G, q, xd) + 2.0 * _tp(G, yw, yu))
        out[b:b + d] = qd
        out[b + d:b + 2 * d] = q
    return out


@njit
def sphere_christoffel(x):
    """Christoffel symbols of the unit sphere in (polar, azimuth) coordinates."""
    th = x[0]
    s = np.sin(th)
    c = np.cos(th)
    G = np.zeros((2, 2, 2))
    dG = np.zeros((2, 2, 2, 2))
    d2G = np.zeros((2, 2, 2, 2, 2))
    G[0, 1, 1] = -s * c
    G[1, 0, 1] = c / s
    G[1, 1, 0] = c / s
    dG[0, 1, 1, 0] = -(c * c - s * s)
    dG[1, 0, 1, 0] = -1.0 / (s * s)
    dG[1, 1, 0, 0] = -1.0 / (s * s)
    d2G[0, 1, 1, 0, 0] = 4.0 * s * c
    d2G[1, 0, 1, 0, 0] = 2.0 * c / (s * s * s)
    d2G[1, 1, 0, 0, 0] = 2.0 * c / (s * s * s)
    return G, dG, d2G


@njit
def sphere_rhs(y, nj, pairs):
    G, dG, d2G = sphere_christoffel(y[:2])
    return param_rhs(y, 2, nj, pairs, G, dG, d2G)


@njit
def flat_rhs(y, d, nj, pairs):
    out = np.zeros(y.shape[0])
    out[:d] = y[d:2 * d]
    for j in range(nj):
        b = 2 * d + 2 * d * j
        out[b + d:b + 2 * d] = y[b:b + d]
    base = 2 * d + 2 * d * nj
    for s in range(pairs.shape[0]):
        b = base + 2 * d * s
        out[b + d:b + 2 * d] = y[b:b + d]
    return out


# --- builtin dispatch ------------------------------------------------------------
# One right-hand side for all builtins so that the integration loops below
# reference it as a global and can be cached by numba across processes.

QUADRIC, SPHERE, FLAT = 0, 1, 2


@njit
def builtin_rhs(t, y, args):
    kind, QA, Qb, d, nj, pairs = args
    if kind == QUADRIC:
        return quadric_rhs(y, QA, Qb, nj, pairs)
    if kind == SPHERE:
        return sphere_rhs(y, nj, pairs)
    return flat_rhs(y, d, nj, pairs)


@njit
def builtin_dopri5(args, t0, t1, y0, rtol, atol, max_steps, h0, dense):
    return dopri5_inline(builtin_rhs, args, t0, t1, y0, rtol, atol, max_steps, h0, dense)


@njit
def builtin_rk4(args, t0, t1, y0, nsteps, dense):
    return rk4_inline(builtin_rhs, args, t0, t1, y0, nsteps, dense)


def builtin_args(kind, d, nj, pairs, QA=None, Qb=None):
    if QA is None:
        QA = np.zeros((1, 1, 1))
        Qb = np.zeros((1, 1))
    return (np.int64(kind), QA, Qb, np.int64(d), np.int64(nj), pairs)
