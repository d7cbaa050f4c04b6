"""Spatial zero-forcing and the per-component QOS temporal precoder."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, QpError, RankDeficientError
from .qp_solver import QpProblem, QpSolution, solve_qp
from .signal_chain import SignalOperators

_MAX_COND = 1e12


def zf_precoder(H) -> tuple[np.ndarray, float]:
    """Return ``(P_sp, c_zf)`` with P_sp = c_zf * H^H (H H^H)^-1.

    c_zf = sqrt(N_u / trace((H H^H)^-1)) normalizes the precoder power.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    n_u, n_t = H.shape
    if n_t < n_u:
        raise RankDeficientError(f"{n_u} users need at least as many antennas, got {n_t}")
    gram = H @ H.conj().T
    if not np.isfinite(gram).all() or np.linalg.cond(gram) > _MAX_COND:
        raise RankDeficientError("H H^H is singular or badly conditioned")
    gram_inv = np.linalg.inv(gram)
    p_zf = H.conj().T @ gram_inv
    c_zf = float(np.sqrt(n_u / np.trace(gram_inv).real))
    return c_zf * p_zf, c_zf


def build_qos_problem(frame_component, ops: SignalOperators, gamma: float, beta: float = 1.0) -> QpProblem:
    """QP for one user and one quadrature component.

    minimize ||W p||^2 = 1/2 p'(2 W'W)p  s.t.  -beta diag(c) V U p <= -gamma.
    """
    c = np.asarray(frame_component, dtype=float).ravel()
    n_tot = ops.v_mat.shape[0]
    if c.shape != (n_tot,):
        raise DimensionError(f"frame has {c.size} samples, operators expect {n_tot}")
    if not np.all(np.abs(c) == 1):
        raise ValueError("frame entries must be +1 or -1")
    if not gamma > 0 or not beta > 0:
        raise ValueError("gamma and beta must be positive")
    w = ops.w_mat
    q_mat = 2.0 * (w.T @ w)
    a_mat = -beta * (c[:, None] * ops.vu)
    return QpProblem(q_mat=q_mat, a_mat=a_mat, b_vec=np.full(n_tot, -float(gamma)))


@dataclass(frozen=True)
class QosSolution:
    p: np.ndarray
    objective: float
    min_margin: float
    qp: QpSolution


def solve_qos(frame_component, ops: SignalOperators, gamma: float, beta: float = 1.0, tol: float = 1e-8) -> QosSolution:
    problem = build_qos_problem(frame_component, ops, gamma, beta)
    sol = solve_qp(problem, tol=tol)
    if not sol.converged:
        raise QpError(
            f"QOS solve did not converge (primal {sol.primal_res:.2e}, dual {sol.dual_res:.2e}, gap {sol.gap:.2e})"
        )
    p = sol.x
    c = np.asarray(frame_component, dtype=float).ravel()
    margin = float(np.min(beta * c * (ops.vu @ p)))
    objective = float(np.sum((ops.w_mat @ p) ** 2))
    return QosSolution(p=p, objective=objective, min_margin=margin, qp=sol)


class QosCache:
    """Memoized QOS solutions keyed by (frame pattern, gamma, beta).

    Identical frames give identical QPs, and the solver is deterministic, so
    concurrent inserts of the same key are harmless.
    """

    def __init__(self, ops: SignalOperators, tol: float = 1e-8):
        self.ops = ops
        self.tol = tol
        self._store: dict = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._store)

    def items(self) -> list:
        """Snapshot of ((frame, gamma, beta), solution) pairs."""
        with self._lock:
            return list(self._store.items())

    def get(self, frame_component, gamma: float, beta: float = 1.0) -> QosSolution:
        key = (tuple(int(v) for v in np.asarray(frame_component).ravel()), float(gamma), float(beta))
        hit = self._store.get(key)
        if hit is None:
            hit = solve_qos(key[0], self.ops, gamma, beta, self.tol)
            with self._lock:
                self._store[key] = hit
        return hit


@dataclass(frozen=True)
class PrecodeResult:
    """Precoder of one user: in-phase and quadrature coefficient vectors."""

    p_x_i: np.ndarray
    p_x_q: np.ndarray
    objective: float
    min_margin: float

    @property
    def p_x(self) -> np.ndarray:
        return self.p_x_i + 1j * self.p_x_q


def precode_user(frame_i, frame_q, ops: SignalOperators, gamma: float, beta: float = 1.0, cache: QosCache | None = None) -> PrecodeResult:
    """Solve the I and Q problems separately (the complex problem is never solved jointly)."""
    solve = cache.get if cache is not None else (lambda f, g, b: solve_qos(f, ops, g, b))
    si = solve(frame_i, gamma, beta)
    sq = solve(frame_q, gamma, beta)
    return PrecodeResult(
        p_x_i=si.p,
        p_x_q=sq.p,
        objective=si.objective + sq.objective,
        min_margin=min(si.min_margin, sq.min_margin),
    )


def user_energy(p_sp_k, p_x_i, p_x_q, ops: SignalOperators) -> float:
    """E_0k = ||p_sp_k||^2 (||W p_x_i||^2 + ||W p_x_q||^2)."""
    p_sp_k = np.asarray(p_sp_k, dtype=complex).ravel()
    w = ops.w_mat
    temporal = np.sum((w @ np.asarray(p_x_i, dtype=float)) ** 2) + np.sum((w @ np.asarray(p_x_q, dtype=float)) ** 2)
    return float(np.vdot(p_sp_k, p_sp_k).real * temporal)


def total_energy(p_sp, p_x: Sequence, ops: SignalOperators) -> float:
    """E_Tx = trace(P_sp R R^H P_sp^H) with row k of R equal to (W p_x_k)^T.

    ``p_x`` holds one complex coefficient vector per user.
    """
    p_sp = np.atleast_2d(np.asarray(p_sp, dtype=complex))
    rows = np.array([ops.w_mat @ np.asarray(p, dtype=complex) for p in p_x])
    if rows.shape[0] != p_sp.shape[1]:
        raise DimensionError(f"P_sp has {p_sp.shape[1]} user columns but {rows.shape[0]} precoders given")
    return float(np.linalg.norm(p_sp @ rows, "fro") ** 2)
