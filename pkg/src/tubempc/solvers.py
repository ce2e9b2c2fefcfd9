"""Dense LP/QP solving and Riccati-based feedback gain synthesis.

LPs go through scipy's HiGHS interface, QPs through the Clarabel
interior-point solver. Both are deterministic for identical inputs. The
discrete Riccati fixed-point iteration is implemented directly so that its
convergence test doubles as the stabilizability check used by the gain
acceptance criterion.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

import clarabel

KKT_TOL = 1e-7
RICCATI_TOL = 1e-10
RICCATI_MAX_ITER = 10_000


class NoConvergenceError(Exception):
    """Riccati iteration failed to converge (no admissible gain pair)."""


class NonSymmetricError(Exception):
    """Matrix handed to an eigenvalue check is not symmetric."""


@dataclass(frozen=True)
class LPProblem:
    """min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq."""

    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None


@dataclass(frozen=True)
class QPProblem:
    """min 0.5 x^T H x + f^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq.

    H must be symmetric positive semidefinite (symmetry enforced to 1e-10).
    """

    H: np.ndarray
    f: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be square")
        if np.max(np.abs(H - H.T)) > 1e-10 * max(1.0, np.max(np.abs(H))):
            raise ValueError("H must be symmetric within 1e-10")


@dataclass
class SolveOutcome:
    status: str  # optimal | infeasible | unbounded | maxiter
    x: Optional[np.ndarray] = None
    objective: float = np.nan
    kkt_residual: float = np.nan
    dual_gap: float = np.nan
    iterations: int = 0
    duals_ub: Optional[np.ndarray] = None
    duals_eq: Optional[np.ndarray] = None

    @property
    def optimal(self):
        return self.status == "optimal"


def solve_lp(p: LPProblem) -> SolveOutcome:
    """Solve a dense LP; variables are free unless constrained explicitly."""
    c = np.asarray(p.c, dtype=float)
    res = linprog(
        c,
        A_ub=p.A_ub,
        b_ub=p.b_ub,
        A_eq=p.A_eq,
        b_eq=p.b_eq,
        bounds=(None, None),
        method="highs",
    )
    if res.status == 2:
        return SolveOutcome(status="infeasible")
    if res.status == 3:
        return SolveOutcome(status="unbounded")
    if res.status != 0:
        return SolveOutcome(status="maxiter", iterations=int(res.nit))
    x = np.asarray(res.x, dtype=float)
    duals_ub = -np.asarray(res.ineqlin.marginals) if p.A_ub is not None else None
    duals_eq = -np.asarray(res.eqlin.marginals) if p.A_eq is not None else None
    # duality gap: c^T x - (-b_ub^T y_ub - b_eq^T y_eq) with y >= 0 sign fixed
    dual_obj = 0.0
    if duals_ub is not None:
        dual_obj -= float(np.dot(p.b_ub, duals_ub))
    if duals_eq is not None:
        dual_obj -= float(np.dot(p.b_eq, duals_eq))
    feas = 0.0
    if p.A_ub is not None:
        feas = max(feas, float(np.max(np.asarray(p.A_ub) @ x - np.asarray(p.b_ub), initial=0.0)))
    if p.A_eq is not None:
        feas = max(feas, float(np.max(np.abs(np.asarray(p.A_eq) @ x - np.asarray(p.b_eq)), initial=0.0)))
    return SolveOutcome(
        status="optimal",
        x=x,
        objective=float(res.fun),
        kkt_residual=feas,
        dual_gap=abs(float(res.fun) - dual_obj),
        iterations=int(res.nit),
        duals_ub=duals_ub,
        duals_eq=duals_eq,
    )


def _as_csc(M):
    return sp.csc_matrix(M)


def solve_qp(p: QPProblem) -> SolveOutcome:
    """Solve a convex QP with Clarabel; enforces the KKT residual contract."""
    H = np.asarray(p.H, dtype=float)
    f = np.asarray(p.f, dtype=float)
    n = H.shape[0]

    A_eq = b_eq = A_ub = b_ub = None
    rows = []
    rhs = []
    cones = []
    n_eq = 0
    if p.A_eq is not None and len(p.A_eq) > 0:
        A_eq = np.atleast_2d(np.asarray(p.A_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(p.b_eq, dtype=float))
        rows.append(A_eq)
        rhs.append(b_eq)
        n_eq = A_eq.shape[0]
        cones.append(clarabel.ZeroConeT(n_eq))
    n_ub = 0
    if p.A_ub is not None and len(p.A_ub) > 0:
        A_ub = np.atleast_2d(np.asarray(p.A_ub, dtype=float))
        b_ub = np.atleast_1d(np.asarray(p.b_ub, dtype=float))
        rows.append(A_ub)
        rhs.append(b_ub)
        n_ub = A_ub.shape[0]
        cones.append(clarabel.NonnegativeConeT(n_ub))
    if rows:
        A = _as_csc(np.vstack(rows))
        b = np.concatenate(rhs)
    else:
        A = _as_csc(np.zeros((0, n)))
        b = np.zeros(0)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-9
    settings.tol_gap_rel = 1e-9
    settings.tol_feas = 1e-9
    solver = clarabel.DefaultSolver(_as_csc(sp.triu(H)), f, A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)

    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveOutcome(status="infeasible", iterations=int(sol.iterations))
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveOutcome(status="unbounded", iterations=int(sol.iterations))
    if status not in ("Solved", "AlmostSolved"):
        return SolveOutcome(status="maxiter", iterations=int(sol.iterations))

    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    duals_eq = z[:n_eq] if n_eq else None
    duals_ub = z[n_eq:n_eq + n_ub] if n_ub else None

    # KKT residual: stationarity + primal feasibility
    grad = H @ x + f
    if n_eq:
        grad = grad + rows[0].T @ duals_eq if p.A_eq is not None else grad
    if n_ub:
        A_ub_arr = rows[-1]
        grad = grad + A_ub_arr.T @ duals_ub
    resid = float(np.max(np.abs(grad), initial=0.0))
    if n_ub:
        resid = max(resid, float(np.max(rows[-1] @ x - rhs[-1], initial=0.0)))
    if n_eq:
        resid = max(resid, float(np.max(np.abs(rows[0] @ x - rhs[0]), initial=0.0)))

    scale = max(1.0, float(np.max(np.abs(f), initial=0.0)), float(np.max(np.abs(H))))
    if status == "AlmostSolved" and resid > KKT_TOL * scale:
        return SolveOutcome(status="maxiter", x=x, iterations=int(sol.iterations))

    obj = 0.5 * float(x @ H @ x) + float(f @ x)
    return SolveOutcome(
        status="optimal",
        x=x,
        objective=obj,
        kkt_residual=resid,
        iterations=int(sol.iterations),
        duals_ub=duals_ub,
        duals_eq=duals_eq,
    )


@dataclass(frozen=True)
class GainPair:
    """Terminal weight P (symmetric positive definite) and feedback gain K.

    Convention u = K x; the stabilizing gain carries its minus sign
    internally, i.e. the closed loop is A + B K.
    """

    P: np.ndarray
    K: np.ndarray

    def closed_loop(self, A, B):
        return np.asarray(A) + np.asarray(B) @ self.K


def synthesize_gain(A, B, Q, R) -> GainPair:
    """Fixed-point iteration for the discrete Riccati equation.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA until the Frobenius
    norm of the update drops below 1e-10, then K = -(R + B'PB)^-1 B'PA.
    Raises NoConvergenceError when (A, B) is not detected as stabilizable
    within the iteration budget.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = Q.copy()
    for _ in range(RICCATI_MAX_ITER):
        BtP = B.T @ P
        G = R + BtP @ B
        K = -np.linalg.solve(G, BtP @ A)
        P_next = Q + A.T @ P @ A + A.T @ P @ B @ K
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.linalg.norm(P_next - P, ord="fro")
        P = P_next
        if delta <= RICCATI_TOL:
            break
    else:
        raise NoConvergenceError("Riccati iteration did not converge")
    if not np.all(np.isfinite(P)):
        raise NoConvergenceError("Riccati iteration diverged")
    BtP = B.T @ P
    K = -np.linalg.solve(R + BtP @ B, BtP @ A)
    return GainPair(P=P, K=K)


def min_eig_psd_check(M, tol: float) -> bool:
    """True iff the smallest eigenvalue of symmetric M is >= -tol."""
    M = np.asarray(M, dtype=float)
    if np.max(np.abs(M - M.T)) > 1e-10 * max(1.0, np.max(np.abs(M))):
        raise NonSymmetricError("matrix is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(w[0] >= -tol)


def lyapunov_residual(P, K, A, B, Q, R):
    """P - (A+BK)' P (A+BK) - Q - K'RK, symmetrized."""
    Acl = np.asarray(A) + np.asarray(B) @ np.asarray(K)
    M = np.asarray(P) - Acl.T @ np.asarray(P) @ Acl - np.asarray(Q) - np.asarray(K).T @ np.asarray(R) @ np.asarray(K)
    return 0.5 * (M + M.T)
