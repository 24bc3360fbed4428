"""Pure numpy implementations of the hot numeric kernels.

These mirror the compiled kernels in ``spinequad._fastcore``; the backend
module picks whichever is available.  Keep the two in algorithmic lockstep —
tests assert agreement to 1e-9.
"""

import numpy as np

_SMALL_ANGLE = 1e-8


def so3_hat(w):
    w = np.asarray(w, dtype=float)
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def so3_exp(w):
    """Rodrigues map: rotation vector -> rotation matrix."""
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    K = so3_hat(w)
    K2 = K @ K
    if th2 < _SMALL_ANGLE * _SMALL_ANGLE:
        # second-order Taylor of sin(t)/t and (1-cos(t))/t^2
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return np.eye(3) + a * K + b * K2


def so3_log(R):
    """Inverse Rodrigues map.  Caller is responsible for the near-pi guard."""
    R = np.asarray(R, dtype=float)
    c = 0.5 * (np.trace(R) - 1.0)
    c = min(1.0, max(-1.0, c))
    th = np.arccos(c)
    v = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < _SMALL_ANGLE:
        return v * (1.0 + th * th / 6.0)
    return v * (th / np.sin(th))


def qp_solve(H, g, G, h, max_iter=50, tol=1e-9):
    """Dense convex QP: min 1/2 x'Hx + g'x  s.t.  Gx <= h.

    Primal-dual interior point with Mehrotra predictor-corrector, dense
    Cholesky on the condensed normal equations.  Deterministic: no
    randomness, no iteration-order ambiguity.

    Returns (x, z, s, iterations, status) with status one of
    0 = optimal, 1 = max-iterations (best iterate), 2 = infeasible.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    m = 0 if G is None else np.asarray(G).shape[0]

    if m == 0:
        x = _chol_solve(H, -g, n)
        return x, np.zeros(0), np.zeros(0), 0, 0

    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)

    x = _chol_solve(H, -g, n)
    s = h - G @ x
    s = np.where(s > 1e-2, s, 1e-2)
    z = np.ones(m)

    best = None
    best_score = np.inf
    scale = 1.0 + max(np.abs(h).max(initial=0.0), np.abs(g).max(initial=0.0))

    for it in range(max_iter):
        r_dual = H @ x + g + G.T @ z
        r_prim = G @ x + s - h
        mu = float(s @ z) / m
        score = max(np.abs(r_dual).max(), np.abs(r_prim).max(), mu)
        if score < best_score:
            best_score = score
            best = (x.copy(), z.copy(), s.copy(), it)
        if np.abs(r_dual).max() <= tol * scale and np.abs(r_prim).max() <= tol * scale and mu <= tol:
            return x, z, s, it, 0
        if np.abs(z).max() > 1e12:
            return x, z, s, it, 2

        w = z / s
        K = _make_pd(H + (G.T * w) @ G, n)

        # affine (predictor) direction
        rc = s * z
        rhs = -r_dual - G.T @ (w * r_prim - rc / s)
        dx = np.linalg.solve(K, rhs)
        dz = w * (G @ dx + r_prim) - rc / s
        ds = -(rc + s * dz) / z

        alpha_aff = min(_max_step(s, ds), _max_step(z, dz))
        mu_aff = float((s + alpha_aff * ds) @ (z + alpha_aff * dz)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        rc = s * z + ds * dz - sigma * mu
        rhs = -r_dual - G.T @ (w * r_prim - rc / s)
        dx = np.linalg.solve(K, rhs)
        dz = w * (G @ dx + r_prim) - rc / s
        ds = -(rc + s * dz) / z

        alpha = 0.99 * min(_max_step(s, ds), _max_step(z, dz))
        alpha = min(1.0, alpha)
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz

    x, z, s, it = best
    r_prim = G @ x + s - h
    mu = float(s @ z) / m
    if np.abs(r_prim).max() > 1e-6 * scale and mu < 1e-8:
        return x, z, s, max_iter, 2
    return x, z, s, max_iter, 1


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _make_pd(K, n):
    """Return K with just enough diagonal regularization to factor."""
    reg = 0.0
    for _ in range(6):
        K_reg = K if reg == 0.0 else K + reg * np.eye(n)
        try:
            np.linalg.cholesky(K_reg)
            return K_reg
        except np.linalg.LinAlgError:
            reg = 1e-12 if reg == 0.0 else reg * 100.0
    raise np.linalg.LinAlgError("quadratic term is not positive definite")


def _chol_solve(H, b, n):
    return np.linalg.solve(_make_pd(H, n), b)
