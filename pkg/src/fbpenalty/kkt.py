"""Optimality system of the penalized problem and its damped semismooth Newton solve.

Unknowns are stacked as ``(y, u, v, p)`` with ``u, v`` the (reduced) control
coefficients. The four residual blocks are

    E10^T M0 (E10 y - yd) - A p
    R^T [ (alpha1 M1 + eps (M1 + K)) R u + sigma F'_u(R u, R v) + M1(b) p ]
    R^T [ (alpha2 M1 + eps (M1 + K)) R v + sigma F'_v(R u, R v) + M1(c) p ]
    -A y + M1(b) R u + M1(c) R v

and the Jacobian is symmetric.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import LinearSolver, SolverError
from .ncp import penalty_eval, penalty_newton_blocks
from .problem import ControlProblem, PenaltyConfig

log = logging.getLogger(__name__)

ARMIJO_SLOPE = 1e-4
MIN_STEP = 2.0**-30
JACOBIAN_SHIFT = 1e-10


@dataclass
class KktIterate:
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate([self.y, self.u, self.v, self.p])

    @classmethod
    def unstack(cls, x: np.ndarray, n_p: int, m: int) -> "KktIterate":
        return cls(x[:n_p].copy(), x[n_p:n_p + m].copy(), x[n_p + m:n_p + 2 * m].copy(), x[n_p + 2 * m:].copy())

    @classmethod
    def zeros(cls, problem: ControlProblem) -> "KktIterate":
        n, m = problem.n_p, problem.n_control
        return cls(np.zeros(n), np.zeros(m), np.zeros(m), np.zeros(n))

    def copy(self) -> "KktIterate":
        return KktIterate(self.y.copy(), self.u.copy(), self.v.copy(), self.p.copy())


@dataclass
class NewtonReport:
    iterations: int = 0
    final_residual: float = np.inf
    converged: bool = False
    damping_steps: Counter = field(default_factory=Counter)
    regularized: int = 0
    history: list = field(default_factory=list)  # inf-norm residual per accepted iterate
    merit: list = field(default_factory=list)  # 1/2 |r|_2^2 per accepted iterate
    message: str = ""


def damped_newton(
    x0: np.ndarray,
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], sp.spmatrix],
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, NewtonReport]:
    """Newton's method globalized by Armijo backtracking on ``1/2 |r|^2``.

    Stops when ``|r|_inf <= tol``. Step lengths are halved down to ``2^-30``;
    hitting that floor ends the solve without convergence.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = np.array(x0, dtype=float)
    r = residual(x)
    report = NewtonReport()
    report.history.append(float(np.abs(r).max(initial=0.0)))
    report.merit.append(0.5 * float(r @ r))
    for it in range(max_iter + 1):
        rinf = np.abs(r).max(initial=0.0)
        report.final_residual = float(rinf)
        if rinf <= tol:
            report.converged = True
            break
        if it == max_iter:
            report.message = f"no convergence after {max_iter} iterations"
            break
        J = jacobian(x)
        try:
            d = LinearSolver(J).solve(-r)
        except SolverError:
            report.regularized += 1
            d = LinearSolver(J + JACOBIAN_SHIFT * sp.identity(J.shape[0])).solve(-r)
        merit = r @ r
        t, halvings = 1.0, 0
        while True:
            r_new = residual(x + t * d)
            if r_new @ r_new <= (1.0 - 2.0 * ARMIJO_SLOPE * t) * merit:
                break
            t *= 0.5
            halvings += 1
            if t < MIN_STEP:
                break
        if t < MIN_STEP:
            report.message = "line search failed: step below 2^-30"
            break
        report.damping_steps[halvings] += 1
        x = x + t * d
        r = r_new
        report.iterations = it + 1
        report.history.append(float(np.abs(r).max(initial=0.0)))
        report.merit.append(0.5 * float(r @ r))
    return x, report


def _linear_blocks(problem: ControlProblem, cfg: PenaltyConfig):
    key = ("kkt", cfg.alpha1, cfg.alpha2, cfg.epsilon)
    if key not in problem._cache:
        fem, op = problem.fem, problem.op
        R = problem.Rmat
        problem._cache[key] = dict(
            Q=(fem.E10.T @ fem.M0 @ fem.E10).tocsr(),
            Hu=problem.reduced(problem.regularization(cfg.alpha1, cfg.epsilon)),
            Hv=problem.reduced(problem.regularization(cfg.alpha2, cfg.epsilon)),
            BR=(op.Bmat @ R).tocsr(),
            CR=(op.Cmat @ R).tocsr(),
        )
    return problem._cache[key]


def _check_iterate(it: KktIterate, problem: ControlProblem):
    n, m = problem.n_p, problem.n_control
    shapes = (it.y.shape, it.u.shape, it.v.shape, it.p.shape)
    if shapes != ((n,), (m,), (m,), (n,)):
        raise ValueError(f"iterate block shapes {shapes} do not match n_p={n}, controls={m}")


def kkt_residual(it: KktIterate, problem: ControlProblem, cfg: PenaltyConfig, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    _check_iterate(it, problem)
    fem, op = problem.fem, problem.op
    lb = _linear_blocks(problem, cfg)
    uf, vf = problem.expand(it.u), problem.expand(it.v)
    Rt = problem.Rmat.T
    pen = penalty_eval(uf, vf, fem)
    r_y = fem.E10.T @ (fem.m0 * (fem.E10 @ it.y - problem.yd)) - op.A @ it.p
    r_u = lb["Hu"] @ it.u + Rt @ (sigma * pen.grad_u) + lb["BR"].T @ it.p
    r_v = lb["Hv"] @ it.v + Rt @ (sigma * pen.grad_v) + lb["CR"].T @ it.p
    r_p = -(op.A @ it.y) + lb["BR"] @ it.u + lb["CR"] @ it.v
    return np.concatenate([r_y, r_u, r_v, r_p])


def _assemble(problem: ControlProblem, cfg: PenaltyConfig, Huu, Huv, Hvu, Hvv) -> sp.csr_matrix:
    lb = _linear_blocks(problem, cfg)
    A = problem.op.A
    return sp.bmat(
        [
            [lb["Q"], None, None, -A],
            [None, lb["Hu"] + Huu, Huv, lb["BR"].T],
            [None, Hvu, lb["Hv"] + Hvv, lb["CR"].T],
            [-A, lb["BR"], lb["CR"], None],
        ],
        format="csr",
    )


def kkt_jacobian(it: KktIterate, problem: ControlProblem, cfg: PenaltyConfig, sigma: float) -> sp.csr_matrix:
    """Newton derivative of :func:`kkt_residual` (zero penalty curvature on biactive elements)."""
    _check_iterate(it, problem)
    uf, vf = problem.expand(it.u), problem.expand(it.v)
    blocks = [sigma * problem.reduced(b) for b in penalty_newton_blocks(uf, vf, problem.fem)]
    return _assemble(problem, cfg, *blocks)


def newton_solve(
    start: KktIterate,
    problem: ControlProblem,
    cfg: PenaltyConfig,
    sigma: float,
    newton_tol: float | None = None,
    max_iter: int | None = None,
) -> tuple[KktIterate, NewtonReport]:
    tol = cfg.newton_tol if newton_tol is None else newton_tol
    max_iter = cfg.max_newton if max_iter is None else max_iter
    n, m = problem.n_p, problem.n_control

    def unpack(x):
        return KktIterate.unstack(x, n, m)

    x, report = damped_newton(
        start.stack(),
        lambda x: kkt_residual(unpack(x), problem, cfg, sigma),
        lambda x: kkt_jacobian(unpack(x), problem, cfg, sigma),
        tol,
        max_iter,
    )
    if report.regularized:
        log.warning("sigma=%g: Jacobian shifted by %g in %d Newton steps", sigma, JACOBIAN_SHIFT, report.regularized)
    return unpack(x), report
