import numpy as np
import pytest

from jacobipga import linalg_core as la
from jacobipga.errors import EvaluationError, InvalidInputError


def fd_pinv(A, B, h=1e-6):
    return (la.pinv(A + h * B) - la.pinv(A - h * B)) / (2 * h)


def fd_pinv2(A, B, C, D, h=1e-4):
    def P(t, s):
        return la.pinv(A + t * B + s * C + s * t * D)
    return (P(h, h) - P(h, -h) - P(-h, h) + P(-h, -h)) / (4 * h * h)


def test_pinv_identity():
    assert np.allclose(la.pinv(np.eye(2)), np.eye(2), atol=1e-15)


def test_pinv_diagonal_full_column_rank():
    A = np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    assert np.allclose(la.pinv(A), [[1, 0, 0], [0, 0.5, 0]], atol=1e-15)


@pytest.mark.parametrize("shape", [(3, 2), (2, 5), (4, 4), (1, 3)])
def test_pinv_penrose_conditions(rng, shape):
    A = rng.standard_normal(shape)
    r = la.penrose_residuals(A, la.pinv(A))
    assert r.max() < 1e-10 * np.linalg.norm(A)


def test_pinv_rank_deficient(rng):
    A = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 3))
    Ap = la.pinv(A)
    assert la.penrose_residuals(A, Ap).max() < 1e-10 * np.linalg.norm(A) * np.linalg.norm(Ap)
    assert np.allclose(Ap, np.linalg.pinv(A), atol=1e-10)


def test_pinv_rows_matches_svd(rng):
    A = rng.standard_normal((2, 5))
    assert np.allclose(la.pinv_rows_k(A), la.pinv(A), atol=1e-12)


def test_pinv_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        la.pinv(np.array([[1.0, np.nan]]))
    with pytest.raises(InvalidInputError):
        la.pinv(np.zeros((0, 2)))


def test_lambda_zero_perturbation(rng):
    A = rng.standard_normal((3, 2))
    assert np.abs(la.decell_lambda(A, np.zeros_like(A))).max() == 0.0


def test_lambda_invertible_reduction(rng):
    for _ in range(10):
        A = rng.standard_normal((4, 4)) + 4 * np.eye(4)
        B = rng.standard_normal((4, 4))
        Ai = np.linalg.inv(A)
        ref = -Ai @ B @ Ai
        assert la.rel_err(la.decell_lambda(A, B), ref) < 1e-10


@pytest.mark.parametrize("shape", [(3, 2), (2, 3), (1, 4), (2, 5)])
def test_lambda_finite_difference(rng, shape):
    A, B = rng.standard_normal(shape), rng.standard_normal(shape)
    assert la.rel_err(la.decell_lambda(A, B), fd_pinv(A, B)) < 1e-6


def test_lambda_linear_in_b(rng):
    A, B1, B2 = (rng.standard_normal((3, 5)) for _ in range(3))
    lhs = la.decell_lambda(A, 2.0 * B1 - 3.0 * B2)
    rhs = 2.0 * la.decell_lambda(A, B1) - 3.0 * la.decell_lambda(A, B2)
    assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(rhs).max()


def test_lambda2_zero(rng):
    A = rng.standard_normal((2, 3))
    Z = np.zeros_like(A)
    assert np.abs(la.decell_lambda2(A, Z, Z, Z)).max() == 0.0


def test_lambda2_invertible_closed_form(rng):
    A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    B, C, D = (rng.standard_normal((3, 3)) for _ in range(3))
    Ai = np.linalg.inv(A)
    # d2/dsdt (A + tB + sC + stD)^-1 at 0
    ref = Ai @ C @ Ai @ B @ Ai + Ai @ B @ Ai @ C @ Ai - Ai @ D @ Ai
    assert la.rel_err(la.decell_lambda2(A, B, C, D), ref) < 1e-10


@pytest.mark.parametrize("shape", [(3, 2), (2, 3), (1, 3), (2, 5)])
def test_lambda2_finite_difference(rng, shape):
    A, B, C, D = (rng.standard_normal(shape) for _ in range(4))
    assert la.rel_err(la.decell_lambda2(A, B, C, D), fd_pinv2(A, B, C, D)) < 1e-4


def test_lambda2_linear_in_d(rng):
    A, B, C, D1, D2 = (rng.standard_normal((2, 4)) for _ in range(5))
    f = lambda D: la.decell_lambda2(A, B, C, D)
    lhs = f(D1 + 0.5 * D2) - f(np.zeros_like(D1))
    rhs = (f(D1) - f(np.zeros_like(D1))) + 0.5 * (f(D2) - f(np.zeros_like(D1)))
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


def test_shape_mismatch():
    with pytest.raises(InvalidInputError):
        la.decell_lambda(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(InvalidInputError):
        la.decell_lambda2(np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 2)))


@pytest.mark.parametrize("n,m", [(1, 3), (2, 5), (3, 4)])
def test_operator_forms_match_matrices(rng, n, m):
    A, B, C, D = (rng.standard_normal((n, m)) for _ in range(4))
    Ap = la.pinv(A)
    G = la.gram_inv(Ap)
    assert np.allclose(G, np.linalg.inv(A @ A.T), atol=1e-10)
    u, y = rng.standard_normal(n), rng.standard_normal(m)
    L1, L2 = la.decell_lambda(A, B), la.decell_lambda2(A, B, C, D)
    tol = 1e-10 * (1 + np.abs(L2).max())
    assert np.abs(la.lam_mv(A, Ap, G, B, u) - L1 @ u).max() < tol
    assert np.abs(la.lam_tv(A, Ap, G, B, y) - L1.T @ y).max() < tol
    assert np.abs(la.lam2_mv(A, Ap, G, B, C, D, u) - L2 @ u).max() < tol
    assert np.abs(la.lam2_tv(A, Ap, G, B, C, D, y) - L2.T @ y).max() < tol


def test_fd_jacobian_examples(rng):
    x = rng.standard_normal(3)
    assert np.allclose(la.fd_jacobian(lambda z: z, x), np.eye(3), atol=1e-9)
    Mat = rng.standard_normal((2, 3))
    assert np.allclose(la.fd_jacobian(lambda z: Mat @ z, x), Mat, atol=1e-9)
    J = la.fd_jacobian(lambda z: np.array([z[0] ** 2, z[0] * z[1]]), np.array([1.0, 2.0]))
    assert np.allclose(J, [[2, 0], [2, 1]], atol=1e-8)


def test_fd_rejects_nonfinite():
    with pytest.raises(EvaluationError):
        la.fd_jacobian(lambda z: np.full_like(z, np.nan), np.array([0.0]))
    with pytest.raises(InvalidInputError):
        la.fd_jacobian(lambda z: z, np.zeros(1), h=0.0)


def test_fd_mixed_quadratic():
    f = lambda z: z[0] * z[1] + z[1] ** 2
    val = la.fd_mixed(f, np.array([0.3, -0.2]), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert abs(val - 1.0) < 1e-8
