"""Dense convex QP interface: min 1/2 x'Hx + g'x  subject to  Gx <= h.

The numeric work happens in the backend kernel (compiled or pure numpy); this
module owns validation, error mapping and the KKT residual report.  The solve
is deterministic: identical problem data yields bitwise-identical solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spinequad import backend


class QpInfeasibleError(RuntimeError):
    """No point satisfies the inequality constraints."""


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = self.g.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H must be ({n}, {n}), got {self.H.shape}")
        if np.abs(self.H - self.H.T).max() > 1e-8 * (1.0 + np.abs(self.H).max()):
            raise ValueError("H must be symmetric")
        if self.G is None or np.size(self.G) == 0:
            self.G = np.zeros((0, n))
            self.h = np.zeros(0)
        else:
            self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
            self.h = np.asarray(self.h, dtype=float).reshape(-1)
            if self.h.shape[0] != self.G.shape[0]:
                raise ValueError("G and h row counts differ")

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[0]


@dataclass
class QpSolution:
    x: np.ndarray
    z: np.ndarray
    iterations: int
    residual: float  # max of stationarity, primal violation, complementarity
    degraded: bool  # True when the iteration cap was hit (best iterate)

    def objective(self, problem: QpProblem) -> float:
        return float(0.5 * self.x @ problem.H @ self.x + problem.g @ self.x)


def kkt_residual(problem: QpProblem, x, z) -> float:
    """Worst-case KKT violation of a primal/dual pair."""
    r_stat = problem.H @ x + problem.g
    if problem.m:
        r_stat = r_stat + problem.G.T @ z
        slack = problem.h - problem.G @ x
        r_prim = float(np.maximum(-slack, 0.0).max())
        r_dual = float(np.maximum(-z, 0.0).max())
        r_comp = float(np.abs(z * slack).max())
    else:
        r_prim = r_dual = r_comp = 0.0
    return max(float(np.abs(r_stat).max()), r_prim, r_dual, r_comp)


def solve_qp(problem: QpProblem, tol: float = 1e-9, max_iter: int = 50) -> QpSolution:
    """Solve with the primal-dual interior-point kernel.

    Returns the optimum, or the best iterate flagged ``degraded`` when the
    iteration cap is reached.  Raises QpInfeasibleError when the constraints
    admit no solution.
    """
    H = 0.5 * (problem.H + problem.H.T)
    x, z, s, iters, status = backend.qp_solve(
        H, problem.g, problem.G if problem.m else None, problem.h, max_iter, tol
    )
    if status == 2:
        raise QpInfeasibleError("constraints admit no solution")
    return QpSolution(
        x=np.asarray(x),
        z=np.asarray(z),
        iterations=int(iters),
        residual=kkt_residual(problem, np.asarray(x), np.asarray(z)),
        degraded=(status == 1),
    )
