import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinequad.lie import (
    NearPiRotationError,
    NotSkewError,
    exp_so3,
    hat,
    left_jacobian,
    log_so3,
    right_jacobian_inv,
    vee,
)


def matrix_exp_series(W, terms=30):
    """Brute-force oracle: truncated power series of the matrix exponential."""
    acc = np.eye(3)
    term = np.eye(3)
    for k in range(1, terms):
        term = term @ W / k
        acc = acc + term
    return acc


def random_rotvec(rng, max_norm=np.pi - 0.1):
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    return v * rng.uniform(0.0, max_norm)


vec3 = st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_hat_basis_vectors():
    assert np.array_equal(hat([1.0, 0.0, 0.0]), np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float))
    assert np.array_equal(hat([0.0, 1.0, 0.0]), np.array([[0, 0, 1], [0, 0, 0], [-1, 0, 0]], dtype=float))
    assert np.array_equal(hat([0.0, 0.0, 1.0]), np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], dtype=float))


def test_hat_matches_cross_product():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w, p = rng.standard_normal(3), rng.standard_normal(3)
        np.testing.assert_allclose(hat(w) @ p, np.cross(w, p), atol=1e-15)


@given(vec3)
def test_vee_hat_roundtrip_exact(w):
    assert np.array_equal(vee(hat(w)), w)


@given(vec3, vec3, st.floats(-2.0, 2.0, allow_nan=False))
def test_hat_is_linear(u, v, a):
    np.testing.assert_allclose(hat(u + a * v), hat(u) + a * hat(v), atol=1e-12)


def test_vee_rejects_non_skew():
    with pytest.raises(NotSkewError):
        vee(np.eye(3))
    # asymmetry just past tolerance
    W = hat([0.1, 0.2, 0.3])
    W[0, 1] += 1e-8
    with pytest.raises(NotSkewError):
        vee(W)


def test_exp_zero_is_identity():
    assert np.array_equal(exp_so3(np.zeros(3)), np.eye(3))


def test_exp_matches_series_oracle():
    rng = np.random.default_rng(1)
    for _ in range(300):
        w = random_rotvec(rng)
        np.testing.assert_allclose(exp_so3(w), matrix_exp_series(hat(w)), atol=1e-10)


def test_exp_small_angle_branch():
    for scale in (1e-12, 1e-9, 1e-7):
        w = np.array([1.0, -2.0, 0.5]) * scale
        np.testing.assert_allclose(exp_so3(w), matrix_exp_series(hat(w)), atol=1e-15)


def test_exp_returns_rotation():
    rng = np.random.default_rng(2)
    for _ in range(50):
        R = exp_so3(random_rotvec(rng))
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) > 0.0


def test_log_exp_roundtrip():
    rng = np.random.default_rng(3)
    for _ in range(500):
        w = random_rotvec(rng)
        np.testing.assert_allclose(log_so3(exp_so3(w)), w, atol=1e-9)


def test_exp_log_roundtrip_frobenius():
    rng = np.random.default_rng(4)
    for _ in range(200):
        R = exp_so3(random_rotvec(rng))
        assert np.linalg.norm(exp_so3(log_so3(R)) - R) < 1e-9


def test_log_near_pi_raises():
    w = np.array([0.0, 0.0, np.pi - 1e-8])
    with pytest.raises(NearPiRotationError):
        log_so3(exp_so3(w))
    # exactly pi about x: trace == -1
    R = np.diag([1.0, -1.0, -1.0])
    with pytest.raises(NearPiRotationError):
        log_so3(R)


def test_log_small_angle():
    w = np.array([1e-9, -3e-10, 2e-10])
    np.testing.assert_allclose(log_so3(exp_so3(w)), w, atol=1e-16)


@settings(max_examples=30)
@given(vec3.filter(lambda v: np.linalg.norm(v) < np.pi - 0.2))
def test_right_jacobian_inv_first_order(a):
    rng = np.random.default_rng(5)
    eps = 1e-6 * rng.standard_normal(3)
    lhs = log_so3(exp_so3(a) @ exp_so3(eps))
    rhs = a + right_jacobian_inv(a) @ eps
    assert np.linalg.norm(lhs - rhs) < 1e-10


@settings(max_examples=30)
@given(vec3.filter(lambda v: 1e-3 < np.linalg.norm(v) < np.pi - 0.2))
def test_left_jacobian_first_order(a):
    rng = np.random.default_rng(6)
    eps = 1e-6 * rng.standard_normal(3)
    lhs = log_so3(exp_so3(a + eps) @ exp_so3(a).T)
    rhs = left_jacobian(a) @ eps
    assert np.linalg.norm(lhs - rhs) < 1e-10


def test_left_jacobian_inverts_right_jacobian_transpose():
    # J_l(a) == J_r(a)^T, so J_l(a)^T @ J_r(a)^-1 should be the identity
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = rng.uniform(-1.5, 1.5, 3)
        prod = left_jacobian(a).T @ right_jacobian_inv(a)
        np.testing.assert_allclose(prod, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(left_jacobian(np.zeros(3)), np.eye(3), atol=1e-15)
