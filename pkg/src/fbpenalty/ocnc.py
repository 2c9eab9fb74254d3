"""Initializer: the convex problem with nonnegative controls and no complementarity.

Nonnegativity of the control coefficients is first relaxed by a
Moreau-Yosida term ``gamma/2 * sum_j w_j min(0, u_j)^2`` (``w`` the lumped
mass of each coefficient) and driven through ``gamma = 1, 10, ..., 1e8`` with
a semismooth Newton solve per value. A final primal-dual active-set pass on
``min(u, grad/w) = 0`` removes the remaining O(1/gamma) infeasibility, so the
returned point is the exact minimizer once its active set is found.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .kkt import KktIterate, _assemble, _linear_blocks, damped_newton, kkt_residual
from .linalg import LinearSolver
from .problem import ControlProblem, PenaltyConfig

log = logging.getLogger(__name__)

DEFAULT_GAMMAS = tuple(10.0**k for k in range(9))
FEAS_TOL = 1e-6


@dataclass
class OcncSolution:
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    converged: bool
    kkt_residual: float
    gamma_trace: list = field(default_factory=list)  # (gamma, penalized objective, newton iterations)
    active_set_iterations: int = 0

    @property
    def iterate(self) -> KktIterate:
        return KktIterate(self.y, self.u, self.v, self.p)


def _split(problem: ControlProblem, r: np.ndarray):
    n, m = problem.n_p, problem.n_control
    return r[:n], r[n:n + m], r[n + m:n + 2 * m], r[n + 2 * m:]


def natural_residual(it: KktIterate, problem: ControlProblem, cfg: PenaltyConfig) -> np.ndarray:
    """Stacked KKT residual of the bound-constrained problem with ``min(u, grad_u / w)`` control rows."""
    w = problem.lumped_weights
    r_y, g_u, g_v, r_p = _split(problem, kkt_residual(it, problem, cfg, 0.0))
    return np.concatenate([r_y, np.minimum(it.u, g_u / w), np.minimum(it.v, g_v / w), r_p])


def _my_penalty(problem: ControlProblem, gamma: float, u: np.ndarray, v: np.ndarray) -> float:
    w = problem.lumped_weights
    return 0.5 * gamma * float(w @ (np.minimum(u, 0.0) ** 2 + np.minimum(v, 0.0) ** 2))


def _solve_moreau_yosida(problem, cfg, gamma, start: KktIterate, tol, max_iter):
    n, m = problem.n_p, problem.n_control
    w = problem.lumped_weights

    def unpack(x):
        return KktIterate.unstack(x, n, m)

    def residual(x):
        it = unpack(x)
        r = kkt_residual(it, problem, cfg, 0.0)
        r[n:n + m] += gamma * w * np.minimum(it.u, 0.0)
        r[n + m:n + 2 * m] += gamma * w * np.minimum(it.v, 0.0)
        return r

    def jacobian(x):
        it = unpack(x)
        du = sp.diags(gamma * w * (it.u < 0.0))
        dv = sp.diags(gamma * w * (it.v < 0.0))
        return _assemble(problem, cfg, du, None, None, dv)

    x, report = damped_newton(start.stack(), residual, jacobian, tol, max_iter)
    return unpack(x), report


def _active_set_polish(problem, cfg, it: KktIterate, tol, max_iter):
    """Semismooth Newton with full steps on the natural residual (primal-dual active set)."""
    n, m = problem.n_p, problem.n_control
    w = problem.lumped_weights
    lb = _linear_blocks(problem, cfg)
    A = problem.op.A
    seen = set()
    for k in range(max_iter):
        r = natural_residual(it, problem, cfg)
        if np.abs(r).max() <= tol:
            return it, k, True
        _, g_u, g_v, _ = _split(problem, kkt_residual(it, problem, cfg, 0.0))
        act_u = it.u <= g_u / w
        act_v = it.v <= g_v / w
        key = (act_u.tobytes(), act_v.tobytes())
        if key in seen and k > 0:
            # identical active sets give the identical linear solve
            break
        seen.add(key)
        Iu = sp.diags(act_u.astype(float))
        Iv = sp.diags(act_v.astype(float))
        Su = sp.diags(np.where(act_u, 0.0, 1.0 / w))
        Sv = sp.diags(np.where(act_v, 0.0, 1.0 / w))
        J = sp.bmat(
            [
                [lb["Q"], None, None, -A],
                [None, Iu + Su @ lb["Hu"], None, Su @ lb["BR"].T],
                [None, None, Iv + Sv @ lb["Hv"], Sv @ lb["CR"].T],
                [-A, lb["BR"], lb["CR"], None],
            ],
            format="csr",
        )
        x = it.stack() + LinearSolver(J).solve(-r)
        it = KktIterate.unstack(x, n, m)
    r = natural_residual(it, problem, cfg)
    return it, max_iter, bool(np.abs(r).max() <= tol)


def solve_ocnc(
    problem: ControlProblem,
    cfg: PenaltyConfig,
    gammas=DEFAULT_GAMMAS,
    tol: float = 1e-8,
    max_newton: int = 50,
    max_active_set: int = 50,
) -> OcncSolution:
    if not cfg.epsilon > 0:
        raise ValueError("epsilon must be positive")
    it = KktIterate.zeros(problem)
    trace = []
    for gamma in gammas:
        it, report = _solve_moreau_yosida(problem, cfg, gamma, it, min(tol, 1e-12), max_newton)
        if not report.converged:
            log.warning("Moreau-Yosida solve at gamma=%g: %s", gamma, report.message)
        value = problem.objective(it.u, it.v, cfg) + _my_penalty(problem, gamma, it.u, it.v)
        trace.append((gamma, value, report.iterations))

    it, n_as, converged = _active_set_polish(problem, cfg, it, tol, max_active_set)
    res = float(np.abs(natural_residual(it, problem, cfg)).max())
    if not converged:
        log.warning("nonnegative-control solve stopped with KKT residual %.3e", res)
    return OcncSolution(it.y, it.u, it.v, it.p, converged, res, trace, n_as)
