"""Dense convex QP solver: primal active set on the dual side.

Solves   min 0.5 x'Hx + g'x   s.t.  A x = b,  C x <= d
with H positive definite on the nullspace of A. Equalities are removed by a
QR nullspace reduction; inequalities are handled by a dual active-set loop
(add the most violated row, drop rows with negative multipliers) with a
fixed iteration cap and lowest-index tie-breaking, so identical inputs give
identical pivots and identical solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-10
MAX_ITER = 400


class QpError(RuntimeError):
    pass


class QpInfeasibleError(QpError):
    """Equality system inconsistent or no point satisfies the constraints."""


class QpIterationError(QpError):
    """Active-set loop hit the iteration cap."""


@dataclass
class QpResult:
    x: np.ndarray
    lam_ineq: np.ndarray      # multipliers for C x <= d (0 on inactive rows)
    mu_eq: np.ndarray         # multipliers for A x = b
    active: list
    iterations: int


def _nullspace(A, tol):
    """Orthonormal nullspace basis and rank via QR with column checks."""
    Q, R = np.linalg.qr(A.T, mode="complete")
    diag = np.abs(np.diag(R[: min(A.shape), :])) if R.size else np.array([])
    scale = diag.max() if diag.size else 0.0
    rank = int(np.sum(diag > max(tol, 1e-13 * max(scale, 1.0)))) if diag.size else 0
    return Q[:, rank:], rank


def solve_qp(H, g, A=None, b=None, C=None, d=None, tol: float = DEFAULT_TOL,
             max_iter: int = MAX_ITER) -> QpResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    n = g.size
    has_eq = A is not None and len(A) > 0
    has_in = C is not None and len(C) > 0
    A = np.asarray(A, dtype=float).reshape(-1, n) if has_eq else np.zeros((0, n))
    b = np.asarray(b, dtype=float).ravel() if has_eq else np.zeros(0)
    C = np.asarray(C, dtype=float).reshape(-1, n) if has_in else np.zeros((0, n))
    d = np.asarray(d, dtype=float).ravel() if has_in else np.zeros(0)

    if has_eq:
        xp, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
        res = A @ xp - b
        if np.max(np.abs(res), initial=0.0) > 1e-7 * max(1.0, np.max(np.abs(b), initial=0.0)):
            raise QpInfeasibleError("inconsistent equality constraints")
        Z, _ = _nullspace(A, tol)
    else:
        xp = np.zeros(n)
        Z = np.eye(n)

    if Z.shape[1] == 0:
        x = xp
        lam = np.zeros(C.shape[0])
        mu = _eq_multipliers(H, g, A, C, lam, x)
        if has_in and np.max(C @ x - d, initial=0.0) > 1e-8:
            raise QpInfeasibleError("equalities pin an infeasible point")
        return QpResult(x, lam, mu, [], 0)

    Hz = Z.T @ H @ Z
    gz = Z.T @ (g + H @ xp)
    Cz = C @ Z
    dz = d - C @ xp

    try:
        L = np.linalg.cholesky(Hz)
    except np.linalg.LinAlgError:
        # nudge: the reduced Hessian must be PD for this solver
        Hz = Hz + 1e-12 * np.eye(Hz.shape[0]) * max(1.0, np.trace(Hz))
        L = np.linalg.cholesky(Hz)

    def hz_solve(Y):
        return _cho_solve(L, Y)

    z = hz_solve(-gz)
    active: list = []
    lam_act = np.zeros(0)
    it = 0
    feas_scale = 1.0 + (np.max(np.abs(dz)) if dz.size else 0.0)
    while True:
        viol = Cz @ z - dz if Cz.shape[0] else np.zeros(0)
        worst = int(np.argmax(viol)) if viol.size else -1
        if worst < 0 or viol[worst] <= 1e-9 * feas_scale:
            break
        it += 1
        if it > max_iter:
            raise QpIterationError(f"active-set cap {max_iter} exceeded")
        if worst not in active:
            active.append(worst)
        while True:
            Ca = Cz[active]
            Y = hz_solve(Ca.T)                     # m x a
            S = Ca @ Y
            rhs = Ca @ hz_solve(-gz) - dz[active]
            try:
                lam_act = np.linalg.solve(S, rhs)
            except np.linalg.LinAlgError:
                lam_act, _, _, _ = np.linalg.lstsq(S, rhs, rcond=None)
            if lam_act.size and np.min(lam_act) < -1e-10:
                # drop the most negative multiplier; lowest index on ties
                k = int(np.argmin(lam_act))
                active.pop(k)
                if not active:
                    lam_act = np.zeros(0)
                    z = hz_solve(-gz)
                    break
                it += 1
                if it > max_iter:
                    raise QpIterationError(f"active-set cap {max_iter} exceeded")
            else:
                z = hz_solve(-(gz + Cz[active].T @ lam_act)) if active else hz_solve(-gz)
                break

    x = xp + Z @ z
    lam = np.zeros(C.shape[0])
    for idx, a in enumerate(active):
        lam[a] = max(0.0, lam_act[idx]) if lam_act.size else 0.0
    mu = _eq_multipliers(H, g, A, C, lam, x)
    return QpResult(x, lam, mu, sorted(active), it)


def _eq_multipliers(H, g, A, C, lam, x):
    if A.shape[0] == 0:
        return np.zeros(0)
    r = -(H @ x + g + C.T @ lam)
    mu, _, _, _ = np.linalg.lstsq(A.T, r, rcond=None)
    return mu


def _cho_solve(L, Y):
    """Solve (L L^T) X = Y with forward/back substitution."""
    Y = np.asarray(Y, dtype=float)
    from numpy.linalg import solve
    # L is triangular; generic solve keeps numpy-only dependency and these
    # systems are small enough that the cost difference is irrelevant.
    return solve(L.T, solve(L, Y))


def kkt_residual(H, g, A, b, C, d, res: QpResult) -> float:
    """Max-norm stationarity residual at the returned point."""
    x = res.x
    r = H @ x + g
    if A is not None and len(A):
        r = r + np.asarray(A).T @ res.mu_eq
    if C is not None and len(C):
        r = r + np.asarray(C).T @ res.lam_ineq
    return float(np.max(np.abs(r)))
