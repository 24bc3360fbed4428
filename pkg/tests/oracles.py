"""Slow reference implementations used to cross-check the fast code.

Everything here favours obviousness over speed: exhaustive enumeration,
series expansions, finite differences.  Test modules import from this file;
nothing in the package depends on it.
"""

import itertools

import numpy as np


def qp_active_set_oracle(H, g, G=None, h=None, tol=1e-8):
    """Exhaustive active-set solve of min 1/2 x'Hx + g'x s.t. Gx <= h.

    H must be positive definite, so the optimum (if the feasible set is
    nonempty) satisfies the KKT conditions with some active subset of at
    most n constraints.  We enumerate every subset, solve the
    equality-constrained KKT system, and keep the best candidate that is
    primal feasible with nonnegative multipliers.

    Returns (objective, x), or (None, None) when no candidate is feasible,
    i.e. the constraints are inconsistent.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    m = 0 if G is None else np.asarray(G).shape[0]
    if m:
        G = np.asarray(G, dtype=float)
        h = np.asarray(h, dtype=float)

    best_f = None
    best_x = None

    def consider(X, Lam):
        nonlocal best_f, best_x
        ok = np.ones(X.shape[0], dtype=bool)
        if Lam.shape[1]:
            ok &= Lam.min(axis=1) >= -tol
        if m:
            ok &= (X @ G.T - h).max(axis=1) <= tol
        if not ok.any():
            return
        f = 0.5 * np.einsum("ci,ij,cj->c", X, H, X) + X @ g
        f = np.where(ok, f, np.inf)
        i = int(np.argmin(f))
        if best_f is None or f[i] < best_f:
            best_f = float(f[i])
            best_x = X[i].copy()

    consider(np.linalg.solve(H, -g)[None, :], np.zeros((1, 0)))

    for k in range(1, min(n, m) + 1):
        combos = np.array(list(itertools.combinations(range(m), k)))
        c = combos.shape[0]
        A = np.zeros((c, n + k, n + k))
        A[:, :n, :n] = H
        rows = G[combos]  # (c, k, n)
        A[:, n:, :n] = rows
        A[:, :n, n:] = rows.transpose(0, 2, 1)
        b = np.empty((c, n + k))
        b[:, :n] = -g
        b[:, n:] = h[combos]
        try:
            sol = np.linalg.solve(A, b[..., None])[..., 0]
        except np.linalg.LinAlgError:
            # a singular batch member poisons the whole call; redo one by one
            sol = np.full((c, n + k), np.nan)
            for i in range(c):
                try:
                    sol[i] = np.linalg.solve(A[i], b[i])
                except np.linalg.LinAlgError:
                    pass
        good = np.isfinite(sol).all(axis=1)
        if good.any():
            consider(sol[good, :n], sol[good, n:])

    return best_f, best_x
