"""Dense convex QP: minimize 1/2 x'Qx subject to A x <= b.

Primal-dual interior point (Mehrotra predictor-corrector) on the normal
equations, followed by an active-set polish that solves the equality
KKT system of the identified active constraints. The polish is accepted only
if it stays primal and dual feasible and lowers the KKT residuals, so the
returned point is never worse than the interior-point iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InfeasibleError, NonPsdError

_STEP_FRACTION = 0.995


@dataclass(frozen=True)
class QpProblem:
    q_mat: np.ndarray
    a_mat: np.ndarray
    b_vec: np.ndarray
    ridge: float = 1e-10

    def __post_init__(self) -> None:
        q = np.atleast_2d(np.asarray(self.q_mat, dtype=float))
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        b = np.atleast_1d(np.asarray(self.b_vec, dtype=float))
        n = q.shape[0]
        if q.shape != (n, n) or a.shape[1] != n or b.shape != (a.shape[0],):
            raise DimensionError(f"Q {q.shape}, A {a.shape}, b {b.shape} are inconsistent")
        if not np.allclose(q, q.T, atol=1e-12 * max(1.0, np.abs(q).max())):
            raise NonPsdError("Q is not symmetric")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        try:
            np.linalg.cholesky(0.5 * (q + q.T) + max(self.ridge, 1e-300) * np.eye(n))
        except np.linalg.LinAlgError:
            raise NonPsdError("Q + ridge*I is not positive definite") from None
        object.__setattr__(self, "q_mat", 0.5 * (q + q.T))
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b_vec", b)

    @property
    def n(self) -> int:
        return self.q_mat.shape[0]

    @property
    def m(self) -> int:
        return self.a_mat.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.q_mat @ x)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    duals: np.ndarray
    iterations: int
    primal_res: float
    dual_res: float
    gap: float
    converged: bool
    polished: bool = False


def kkt_residuals(problem: QpProblem, x, duals) -> tuple[float, float, float]:
    """(primal_res, dual_res, gap) as infinity-type measures.

    primal_res = max(0, max(Ax - b)); dual_res = ||Qx + A'lam||_inf;
    gap = sum |lam_i (b - Ax)_i|.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(duals, dtype=float)
    slack = problem.b_vec - problem.a_mat @ x
    primal = float(max(0.0, -slack.min())) if slack.size else 0.0
    dual = float(np.abs(problem.q_mat @ x + problem.a_mat.T @ lam).max())
    gap = float(np.abs(lam * slack).sum())
    return primal, dual, gap


def _accepts(res, x, tol) -> bool:
    primal, dual, gap = res
    return primal <= tol and dual <= tol * (1.0 + np.abs(x).max()) and gap <= tol


def _merit(res, x) -> float:
    primal, dual, gap = res
    return max(primal, dual / (1.0 + np.abs(x).max()), gap)


def _start(problem: QpProblem):
    a, b = problem.a_mat, problem.b_vec
    x = np.zeros(problem.n)
    d = -a.T @ np.ones(problem.m)
    ad = a @ d
    if np.all(ad < 0):
        # smallest step along -A'1 that leaves every slack >= 1
        x = max(0.0, float(np.max((b - 1.0) / ad))) * d
    s = np.maximum(b - a @ x, 1.0)
    lam = np.ones(problem.m)
    return x, lam, s


def _max_step(v, dv) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _farkas(problem: QpProblem, lam, tol) -> bool:
    """True if lam/||lam||_1 certifies {Ax <= b} empty."""
    norm = lam.sum()
    if norm < 1e6:
        return False
    y = lam / norm
    return float(problem.b_vec @ y) < -tol and np.abs(problem.a_mat.T @ y).max() < 1e-6 * abs(float(problem.b_vec @ y))


def polish(problem: QpProblem, x, lam, s) -> tuple[np.ndarray, np.ndarray] | None:
    """Solve the equality KKT system on the active set guessed from (lam, s).

    A few primal-dual active-set corrections are applied (drop negative
    multipliers, add violated constraints). Returns None if no consistent
    active set is found.
    """
    q, a, b = problem.q_mat, problem.a_mat, problem.b_vec
    n, m = problem.n, problem.m
    active = lam > s
    for _ in range(2 * m + 2):
        idx = np.flatnonzero(active)
        k = idx.size
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = q
        kkt[:n, n:] = a[idx].T
        kkt[n:, :n] = a[idx]
        rhs = np.concatenate((np.zeros(n), b[idx]))
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        xp = sol[:n]
        lam_p = np.zeros(m)
        lam_p[idx] = sol[n:]
        scale = 1e-12 * max(1.0, np.abs(b).max())
        violated = a @ xp - b > scale
        negative = lam_p < -scale
        if not violated.any() and not negative.any():
            return xp, np.maximum(lam_p, 0.0)
        new_active = (active & ~negative) | violated
        if np.array_equal(new_active, active):
            return None
        active = new_active
    return None


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = 100) -> QpSolution:
    """Solve the QP; raise InfeasibleError on a Farkas certificate.

    On running out of iterations the best iterate is returned with
    ``converged=False``.
    """
    q = problem.q_mat + problem.ridge * np.eye(problem.n)
    a, b = problem.a_mat, problem.b_vec
    m = problem.m
    if m == 0:
        x = np.zeros(problem.n)
        return QpSolution(x, np.zeros(0), 0, 0.0, 0.0, 0.0, True)

    x, lam, s = _start(problem)
    best = None
    it = 0
    for it in range(1, max_iter + 1):
        rd = q @ x + a.T @ lam
        rp = a @ x + s - b
        mu = float(lam @ s) / m

        res = kkt_residuals(problem, x, lam)
        if best is None or _merit(res, x) < best[0]:
            best = (_merit(res, x), x.copy(), lam.copy(), s.copy())
        if _accepts(res, x, tol) and np.abs(rp).max() <= tol:
            break
        if _farkas(problem, lam, tol):
            raise InfeasibleError("constraints A x <= b admit no solution")

        d = lam / s
        k_mat = q + (a.T * d) @ a
        try:
            chol = np.linalg.cholesky(k_mat)
        except np.linalg.LinAlgError:
            chol = np.linalg.cholesky(k_mat + 1e-12 * np.trace(k_mat) * np.eye(problem.n))

        def newton(rc):
            rhs = -rd - a.T @ (d * rp - rc / s)
            dx = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
            dlam = d * (rp + a @ dx) - rc / s
            ds = -rp - a @ dx
            return dx, dlam, ds

        # predictor
        dx, dlam, ds = newton(lam * s)
        alpha = min(_max_step(lam, dlam), _max_step(s, ds))
        mu_aff = float((lam + alpha * dlam) @ (s + alpha * ds)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        dx, dlam, ds = newton(lam * s + dlam * ds - sigma * mu)
        alpha = _STEP_FRACTION * min(_max_step(lam, dlam), _max_step(s, ds))
        alpha = min(alpha, 1.0)
        x = x + alpha * dx
        lam = lam + alpha * dlam
        s = s + alpha * ds
    else:
        res = kkt_residuals(problem, x, lam)
        if _merit(res, x) < best[0]:
            best = (_merit(res, x), x.copy(), lam.copy(), s.copy())
        if _farkas(problem, lam, tol):
            raise InfeasibleError("constraints A x <= b admit no solution")

    _, x, lam, s = best
    res = kkt_residuals(problem, x, lam)
    polished = False
    fixed = polish(problem, x, lam, s)
    if fixed is not None:
        pres = kkt_residuals(problem, *fixed)
        if _merit(pres, fixed[0]) <= _merit(res, x):
            x, lam = fixed
            res = pres
            polished = True
    converged = _accepts(res, x, tol)
    return QpSolution(
        x=x,
        duals=lam,
        iterations=it,
        primal_res=res[0],
        dual_res=res[1],
        gap=res[2],
        converged=converged,
        polished=polished,
    )
