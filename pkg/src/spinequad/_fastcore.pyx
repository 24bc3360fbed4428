# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot numeric kernels.

Kept in algorithmic lockstep with ``spinequad._kernels_py`` — same formulas,
same branch thresholds, same iteration bookkeeping; any change there must
land here too.  The interior-point solve swaps numpy's LAPACK calls for a
hand-rolled dense Cholesky (the QPs are tiny, so per-call overhead dominates
the numpy version), which means the two backends agree to solver tolerance
rather than bitwise.
"""

import numpy as np

from libc.math cimport acos, cos, sin, sqrt

cdef double _SMALL_ANGLE = 1e-8


def so3_exp(w):
    """Rodrigues map: rotation vector -> rotation matrix."""
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double w0 = wv[0], w1 = wv[1], w2 = wv[2]
    cdef double th2 = w0 * w0 + w1 * w1 + w2 * w2
    cdef double a, b, th
    if th2 < _SMALL_ANGLE * _SMALL_ANGLE:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        th = sqrt(th2)
        a = sin(th) / th
        b = (1.0 - cos(th)) / th2

    # K = hat(w); written out with K@K summed in index order like the
    # fallback does, so the roundings line up.
    out = np.empty((3, 3))
    cdef double[:, ::1] R = out
    cdef double k01 = -w2, k02 = w1, k10 = w2, k12 = -w0, k20 = -w1, k21 = w0
    R[0, 0] = 1.0 + b * (k01 * k10 + k02 * k20)
    R[0, 1] = a * k01 + b * (k02 * k21)
    R[0, 2] = a * k02 + b * (k01 * k12)
    R[1, 0] = a * k10 + b * (k12 * k20)
    R[1, 1] = 1.0 + b * (k10 * k01 + k12 * k21)
    R[1, 2] = a * k12 + b * (k10 * k02)
    R[2, 0] = a * k20 + b * (k21 * k10)
    R[2, 1] = a * k21 + b * (k20 * k01)
    R[2, 2] = 1.0 + b * (k20 * k02 + k21 * k12)
    return out


def so3_log(R):
    """Inverse Rodrigues map.  Caller is responsible for the near-pi guard."""
    cdef double[:, :] Rm = np.asarray(R, dtype=np.float64)
    cdef double c = 0.5 * (Rm[0, 0] + Rm[1, 1] + Rm[2, 2] - 1.0)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    cdef double th = acos(c)
    out = np.empty(3)
    cdef double[::1] v = out
    v[0] = 0.5 * (Rm[2, 1] - Rm[1, 2])
    v[1] = 0.5 * (Rm[0, 2] - Rm[2, 0])
    v[2] = 0.5 * (Rm[1, 0] - Rm[0, 1])
    cdef double f
    if th < _SMALL_ANGLE:
        f = 1.0 + th * th / 6.0
    else:
        f = th / sin(th)
    v[0] *= f
    v[1] *= f
    v[2] *= f
    return out


# ---------------------------------------------------------------------------
# dense QP interior point


cdef int _chol_inplace(double[:, ::1] A, int n) noexcept nogil:
    """Lower Cholesky in place; 1 when the matrix is not positive definite.

    Only the lower triangle is read, so callers may leave the upper half
    stale.
    """
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if s <= 0.0:
            return 1
        A[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= A[i, k] * A[j, k]
            A[i, j] = s / A[j, j]
    return 0


cdef void _chol_solve_vec(double[:, ::1] L, double[::1] b, int n) noexcept nogil:
    """Solve L L^T x = b in place (forward then backward substitution)."""
    cdef int i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * b[k]
        b[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k, i] * b[k]
        b[i] = s / L[i, i]


cdef int _factor_pd(double[:, ::1] K, double[:, ::1] L, int n) except -1:
    """Copy K's lower triangle into L with just enough diagonal
    regularization to factor.

    Same ladder as the fallback's _make_pd: 0, 1e-12, then x100 per retry.
    """
    cdef double reg = 0.0
    cdef int attempt, i, j
    for attempt in range(6):
        for i in range(n):
            for j in range(i + 1):
                L[i, j] = K[i, j]
            if reg != 0.0:
                L[i, i] += reg
        if _chol_inplace(L, n) == 0:
            return 0
        reg = 1e-12 if reg == 0.0 else reg * 100.0
    raise np.linalg.LinAlgError("quadratic term is not positive definite")


def qp_solve(H, g, G, h, int max_iter=50, double tol=1e-9):
    """Dense convex QP: min 1/2 x'Hx + g'x  s.t.  Gx <= h.

    Primal-dual interior point with Mehrotra predictor-corrector; see the
    fallback for the reference formulation.  Returns (x, z, s, iterations,
    status), status 0 = optimal, 1 = max-iterations (best iterate),
    2 = infeasible.
    """
    H_arr = np.ascontiguousarray(H, dtype=np.float64)
    g_arr = np.ascontiguousarray(g, dtype=np.float64)
    cdef int n = g_arr.shape[0]
    cdef int m = 0 if G is None else np.asarray(G).shape[0]
    cdef double[:, ::1] Hm = H_arr
    cdef double[::1] gm = g_arr

    cdef int i, j, k, it

    x_arr = np.empty(n)
    cdef double[::1] x = x_arr
    L_arr = np.empty((n, n))
    cdef double[:, ::1] L = L_arr

    if m == 0:
        _factor_pd(Hm, L, n)
        for i in range(n):
            x[i] = -gm[i]
        _chol_solve_vec(L, x, n)
        return x_arr, np.zeros(0), np.zeros(0), 0, 0

    G_arr = np.ascontiguousarray(G, dtype=np.float64)
    h_arr = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[:, ::1] Gm = G_arr
    cdef double[::1] hm = h_arr

    s_arr = np.empty(m)
    z_arr = np.ones(m)
    cdef double[::1] s = s_arr
    cdef double[::1] z = z_arr

    # scratch
    K_arr = np.empty((n, n))
    cdef double[:, ::1] K = K_arr
    r_dual_arr = np.empty(n)
    cdef double[::1] r_dual = r_dual_arr
    r_prim_arr = np.empty(m)
    cdef double[::1] r_prim = r_prim_arr
    cdef double[::1] w = np.empty(m)
    cdef double[::1] rc = np.empty(m)
    dx_arr = np.empty(n)
    cdef double[::1] dx = dx_arr
    cdef double[::1] dz = np.empty(m)
    cdef double[::1] ds = np.empty(m)
    cdef double[::1] gdx = np.empty(m)

    best_x = np.empty(n)
    best_z = np.empty(m)
    best_s = np.empty(m)
    cdef double[::1] bx = best_x
    cdef double[::1] bz = best_z
    cdef double[::1] bs = best_s
    cdef int best_it = 0
    cdef double best_score = np.inf

    cdef double acc, mu, score, rd_max, rp_max, z_max
    cdef double alpha_aff, mu_aff, sigma, alpha, step
    cdef double scale, hmax, gmax

    # starting point: unconstrained minimizer, slacks floored at 1e-2
    _factor_pd(Hm, L, n)
    for i in range(n):
        x[i] = -gm[i]
    _chol_solve_vec(L, x, n)
    for i in range(m):
        acc = hm[i]
        for j in range(n):
            acc -= Gm[i, j] * x[j]
        s[i] = acc if acc > 1e-2 else 1e-2

    hmax = 0.0
    for i in range(m):
        if hm[i] > hmax:
            hmax = hm[i]
        elif -hm[i] > hmax:
            hmax = -hm[i]
    gmax = 0.0
    for i in range(n):
        if gm[i] > gmax:
            gmax = gm[i]
        elif -gm[i] > gmax:
            gmax = -gm[i]
    scale = 1.0 + (hmax if hmax > gmax else gmax)

    for it in range(max_iter):
        # r_dual = H x + g + G^T z ; r_prim = G x + s - h.  The G^T product
        # runs constraint-major so every inner loop walks a contiguous row.
        for i in range(n):
            acc = gm[i]
            for j in range(n):
                acc += Hm[i, j] * x[j]
            r_dual[i] = acc
        for k in range(m):
            acc = z[k]
            for i in range(n):
                r_dual[i] += Gm[k, i] * acc
        for i in range(m):
            acc = s[i] - hm[i]
            for j in range(n):
                acc += Gm[i, j] * x[j]
            r_prim[i] = acc

        mu = 0.0
        for i in range(m):
            mu += s[i] * z[i]
        mu /= m

        rd_max = 0.0
        for i in range(n):
            if r_dual[i] > rd_max:
                rd_max = r_dual[i]
            elif -r_dual[i] > rd_max:
                rd_max = -r_dual[i]
        rp_max = 0.0
        for i in range(m):
            if r_prim[i] > rp_max:
                rp_max = r_prim[i]
            elif -r_prim[i] > rp_max:
                rp_max = -r_prim[i]

        score = rd_max
        if rp_max > score:
            score = rp_max
        if mu > score:
            score = mu
        if score < best_score:
            best_score = score
            for i in range(n):
                bx[i] = x[i]
            for i in range(m):
                bz[i] = z[i]
                bs[i] = s[i]
            best_it = it

        if rd_max <= tol * scale and rp_max <= tol * scale and mu <= tol:
            return x_arr, z_arr, s_arr, it, 0
        z_max = 0.0
        for i in range(m):
            if z[i] > z_max:
                z_max = z[i]
            elif -z[i] > z_max:
                z_max = -z[i]
        if z_max > 1e12:
            return x_arr, z_arr, s_arr, it, 2

        for i in range(m):
            w[i] = z[i] / s[i]
        # K = H + G^T diag(w) G, lower triangle only (that is all the
        # factorization reads).  Built as rank-1 updates over constraint
        # rows: both G[k, :] and K[i, :i+1] are walked contiguously, which
        # is what makes this worth compiling at MPC sizes.
        for i in range(n):
            for j in range(i + 1):
                K[i, j] = Hm[i, j]
        for k in range(m):
            for i in range(n):
                acc = w[k] * Gm[k, i]
                for j in range(i + 1):
                    K[i, j] += acc * Gm[k, j]
        _factor_pd(K, L, n)

        # affine (predictor) direction
        for i in range(m):
            rc[i] = s[i] * z[i]
        _qp_direction(Hm, Gm, r_dual, r_prim, w, rc, s, z, L, dx, dz, ds, gdx, n, m)
        alpha_aff = _max_step(s, ds, m)
        step = _max_step(z, dz, m)
        if step < alpha_aff:
            alpha_aff = step
        mu_aff = 0.0
        for i in range(m):
            mu_aff += (s[i] + alpha_aff * ds[i]) * (z[i] + alpha_aff * dz[i])
        mu_aff /= m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        for i in range(m):
            rc[i] = s[i] * z[i] + ds[i] * dz[i] - sigma * mu
        _qp_direction(Hm, Gm, r_dual, r_prim, w, rc, s, z, L, dx, dz, ds, gdx, n, m)
        alpha = _max_step(s, ds, m)
        step = _max_step(z, dz, m)
        if step < alpha:
            alpha = step
        alpha *= 0.99
        if alpha > 1.0:
            alpha = 1.0
        for i in range(n):
            x[i] += alpha * dx[i]
        for i in range(m):
            s[i] += alpha * ds[i]
            z[i] += alpha * dz[i]

    for i in range(n):
        x[i] = bx[i]
    for i in range(m):
        z[i] = bz[i]
        s[i] = bs[i]
    rp_max = 0.0
    mu = 0.0
    for i in range(m):
        acc = s[i] - hm[i]
        for j in range(n):
            acc += Gm[i, j] * x[j]
        if acc > rp_max:
            rp_max = acc
        elif -acc > rp_max:
            rp_max = -acc
        mu += s[i] * z[i]
    mu /= m
    if rp_max > 1e-6 * scale and mu < 1e-8:
        return x_arr, z_arr, s_arr, max_iter, 2
    return x_arr, z_arr, s_arr, max_iter, 1


cdef void _qp_direction(
    double[:, ::1] Hm,
    double[:, ::1] Gm,
    double[::1] r_dual,
    double[::1] r_prim,
    double[::1] w,
    double[::1] rc,
    double[::1] s,
    double[::1] z,
    double[:, ::1] L,
    double[::1] dx,
    double[::1] dz,
    double[::1] ds,
    double[::1] gdx,
    int n,
    int m,
) noexcept nogil:
    """Search direction from the condensed normal equations (L prefactored).

    rhs = -r_dual - G^T (w*r_prim - rc/s); dz, ds recovered elementwise.
    """
    cdef int i, j
    cdef double acc
    for i in range(n):
        dx[i] = -r_dual[i]
    for j in range(m):
        acc = w[j] * r_prim[j] - rc[j] / s[j]
        for i in range(n):
            dx[i] -= Gm[j, i] * acc
    _chol_solve_vec(L, dx, n)
    for i in range(m):
        acc = r_prim[i]
        for j in range(n):
            acc += Gm[i, j] * dx[j]
        gdx[i] = acc
        dz[i] = w[i] * acc - rc[i] / s[i]
        ds[i] = -(rc[i] + s[i] * dz[i]) / z[i]


cdef double _max_step(double[::1] v, double[::1] dv, int m) noexcept nogil:
    cdef double out = 1.0
    cdef double ratio
    cdef int i
    for i in range(m):
        if dv[i] < 0:
            ratio = -v[i] / dv[i]
            if ratio < out:
                out = ratio
    return out
