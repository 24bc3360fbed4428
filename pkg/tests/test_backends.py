"""Compiled extension vs pure-python fallback.

Both implement the same algorithms with the same branch thresholds, so they
must agree on every qualitative outcome (status codes, iteration counts) and
numerically to tight tolerance.  The SO(3) maps agree to machine precision;
the QP solves agree to solver tolerance rather than bitwise, because the
compiled path forms the normal-equations matrix with hand loops while the
fallback goes through BLAS (different summation order).
"""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinequad import _kernels_py as kpy
from spinequad import backend

try:
    from spinequad import _fastcore as fc
except ImportError:
    fc = None

needs_compiled = pytest.mark.skipif(fc is None, reason="compiled extension not built")

IMPLS = [pytest.param(kpy, id="python")]
if fc is not None:
    IMPLS.append(pytest.param(fc, id="compiled"))


def random_rotvecs(rng, count):
    v = rng.standard_normal((count, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    scales = rng.uniform(0.0, np.pi - 0.05, count)
    # sprinkle in the small-angle branch and the near-pi end
    scales[::7] = rng.uniform(0.0, 1e-9, scales[::7].shape)
    scales[3::11] = np.pi - 1e-4
    return v * scales[:, None]


def random_qp_arrays(rng, n, m):
    """Strictly convex QP with an interior feasible point, raw arrays."""
    A = rng.standard_normal((n, n))
    H = A @ A.T + np.diag(rng.uniform(0.5, 2.0, n))
    g = rng.standard_normal(n)
    if m == 0:
        return H, g, None, None
    G = rng.standard_normal((m, n))
    h = G @ rng.standard_normal(n) + rng.uniform(0.0, 1.0, m) + 1e-3
    return H, g, G, h


def box_constrained_qp(rng, n):
    """MPC-shaped problem: dense coupled cost, +/- bound pairs on every
    coordinate, scaled so a good share of the bounds end up active."""
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    H = A @ A.T + 0.1 * np.eye(n)
    g = rng.standard_normal(n) * 2.0
    G = np.vstack([np.eye(n), -np.eye(n)])
    h = np.concatenate([rng.uniform(0.05, 0.5, n), rng.uniform(0.05, 0.5, n)])
    return H, g, G, h


@needs_compiled
def test_so3_exp_parity():
    rng = np.random.default_rng(11)
    worst = 0.0
    for w in random_rotvecs(rng, 200):
        worst = max(worst, np.max(np.abs(fc.so3_exp(w) - kpy.so3_exp(w))))
    assert worst < 1e-14


@needs_compiled
def test_so3_log_parity():
    rng = np.random.default_rng(12)
    worst = 0.0
    for w in random_rotvecs(rng, 200):
        R = kpy.so3_exp(w)
        worst = max(worst, np.max(np.abs(fc.so3_log(R) - kpy.so3_log(R))))
    assert worst < 1e-13


@pytest.mark.parametrize("impl", IMPLS)
def test_so3_roundtrip(impl):
    rng = np.random.default_rng(13)
    for w in random_rotvecs(rng, 100):
        np.testing.assert_allclose(impl.so3_log(impl.so3_exp(w)), w, atol=1e-9)


@pytest.mark.parametrize("impl", IMPLS)
def test_so3_exp_orthonormal(impl):
    rng = np.random.default_rng(14)
    for w in random_rotvecs(rng, 50):
        R = impl.so3_exp(w)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(R) - 1.0) < 1e-12


@needs_compiled
@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=3, max_size=3))
def test_so3_exp_parity_property(w):
    np.testing.assert_allclose(fc.so3_exp(np.array(w)), kpy.so3_exp(np.array(w)), atol=1e-13)


@needs_compiled
def test_qp_parity_small_random():
    # Well-conditioned small problems: the iterate sequences track each other
    # closely enough that x typically agrees to ~1e-12 or better.
    rng = np.random.default_rng(21)
    for _ in range(40):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(0, 12))
        H, g, G, h = random_qp_arrays(rng, n, m)
        xa, za, sa, ita, sta = kpy.qp_solve(H, g, G, h)
        xb, zb, sb, itb, stb = fc.qp_solve(H, g, G, h)
        assert (sta, ita) == (stb, itb)
        np.testing.assert_allclose(xb, xa, atol=1e-10)
        np.testing.assert_allclose(zb, za, atol=1e-8)


@needs_compiled
def test_qp_parity_unconstrained():
    rng = np.random.default_rng(22)
    H, g, _, _ = random_qp_arrays(rng, 9, 0)
    xa = kpy.qp_solve(H, g, None, None)[0]
    xb = fc.qp_solve(H, g, None, None)[0]
    np.testing.assert_allclose(xb, xa, atol=1e-12)


@needs_compiled
def test_qp_parity_box_constrained():
    rng = np.random.default_rng(23)
    for n in (12, 40, 90):
        H, g, G, h = box_constrained_qp(rng, n)
        xa, za, sa, ita, sta = kpy.qp_solve(H, g, G, h)
        xb, zb, sb, itb, stb = fc.qp_solve(H, g, G, h)
        assert (sta, ita) == (stb, itb)
        assert sta == 0
        np.testing.assert_allclose(xb, xa, atol=1e-7)


@needs_compiled
def test_qp_infeasible_status_agrees():
    # x <= 0 together with -x <= -1 has no feasible point
    H = np.array([[1.0]])
    g = np.array([0.0])
    G = np.array([[1.0], [-1.0]])
    h = np.array([0.0, -1.0])
    assert kpy.qp_solve(H, g, G, h)[4] == 2
    assert fc.qp_solve(H, g, G, h)[4] == 2


@needs_compiled
def test_qp_max_iter_best_iterate_agrees():
    rng = np.random.default_rng(24)
    H, g, G, h = random_qp_arrays(rng, 6, 8)
    xa, _, _, ita, sta = kpy.qp_solve(H, g, G, h, 3, 1e-9)
    xb, _, _, itb, stb = fc.qp_solve(H, g, G, h, 3, 1e-9)
    assert sta == stb == 1
    assert ita == itb == 3
    np.testing.assert_allclose(xb, xa, atol=1e-8)


@pytest.mark.parametrize("impl", IMPLS)
def test_qp_kkt_conditions(impl):
    rng = np.random.default_rng(25)
    H, g, G, h = random_qp_arrays(rng, 5, 7)
    x, z, s, _, status = impl.qp_solve(H, g, G, h)
    assert status == 0
    np.testing.assert_allclose(H @ x + g + G.T @ z, 0.0, atol=1e-6)
    np.testing.assert_allclose(G @ x + s, h, atol=1e-7)
    assert np.all(z >= -1e-12) and np.all(s >= -1e-12)
    assert abs(np.dot(s, z)) < 1e-6


def _backend_name(env=None):
    merged = os.environ.copy()
    merged.pop("SPINEQUAD_PURE_PYTHON", None)
    if env:
        merged.update(env)
    out = subprocess.run(
        [sys.executable, "-c", "from spinequad import backend; print(backend.BACKEND)"],
        capture_output=True, text=True, env=merged, check=True,
    )
    return out.stdout.strip()


def test_env_var_forces_python_backend():
    assert _backend_name({"SPINEQUAD_PURE_PYTHON": "1"}) == "python"


def test_env_var_zero_means_default():
    expected = "compiled" if fc is not None else "python"
    assert _backend_name({"SPINEQUAD_PURE_PYTHON": "0"}) == expected


@needs_compiled
def test_compiled_preferred_by_default():
    assert _backend_name() == "compiled"


def test_hat_always_from_fallback():
    # so3_hat is not performance relevant, so there is exactly one copy
    assert backend.so3_hat is kpy.so3_hat
