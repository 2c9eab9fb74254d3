"""Outer penalty loop: increase sigma, warm-start Newton, stop on small control change."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .kkt import KktIterate, NewtonReport, newton_solve
from .ncp import elementwise_fb, penalty_eval
from .ocnc import OcncSolution, solve_ocnc
from .pde import solve_adjoint
from .problem import ControlProblem, PenaltyConfig

log = logging.getLogger(__name__)

MAX_BACKTRACKS = 8


@dataclass
class HomotopyStep:
    k: int
    sigma: float
    newton: NewtonReport
    control_change: float
    penalty_value: float
    max_abs_fb: float


@dataclass
class HomotopyTrace:
    steps: list[HomotopyStep] = field(default_factory=list)
    converged: bool = False
    failed: bool = False
    message: str = ""
    initial: OcncSolution | None = None

    @property
    def outer_iterations(self) -> int:
        return len(self.steps)


def weighted_norm(du, dv, problem: ControlProblem) -> float:
    """Discrete H1 norm of the control pair ``(R du, R dv)``."""
    du = np.asarray(du, dtype=float)
    dv = np.asarray(dv, dtype=float)
    m = problem.n_control
    if du.shape != (m,) or dv.shape != (m,):
        raise ValueError(f"control vectors must have length {m}, got {du.shape} and {dv.shape}")
    a, b = problem.expand(du), problem.expand(dv)
    H = problem.h1
    return math.sqrt(max(a @ (H @ a) + b @ (H @ b), 0.0))


def max_abs_fb(problem: ControlProblem, u, v) -> float:
    return float(np.abs(elementwise_fb(problem.expand(u), problem.expand(v), problem.fem)).max())


def initial_iterate(problem: ControlProblem, cfg: PenaltyConfig, ocnc: OcncSolution | None = None):
    """Starting point: nonnegative-control minimizer plus the adjoint for its state."""
    ocnc = solve_ocnc(problem, cfg) if ocnc is None else ocnc
    p0 = solve_adjoint(problem.op, problem.fem, ocnc.y, problem.yd)
    return KktIterate(ocnc.y.copy(), ocnc.u.copy(), ocnc.v.copy(), p0), ocnc


def run_homotopy(
    problem: ControlProblem,
    cfg: PenaltyConfig,
    ocnc: OcncSolution | None = None,
) -> tuple[KktIterate, HomotopyTrace]:
    current, ocnc = initial_iterate(problem, cfg, ocnc)
    trace = HomotopyTrace(initial=ocnc)

    sigma_prev = cfg.sigma0 / cfg.sigma_factor
    sigma = cfg.sigma0
    backtracks = 0
    k = 0
    while True:
        if sigma > cfg.sigma_max * (1 + 1e-12):
            trace.message = f"sigma would exceed sigma_max={cfg.sigma_max:g} before the control change fell below eps_stop"
            log.warning(trace.message)
            break
        candidate, report = newton_solve(current, problem, cfg, sigma)
        if not report.converged:
            if backtracks >= MAX_BACKTRACKS:
                trace.failed = True
                trace.message = f"Newton failed at sigma={sigma:g}: {report.message}"
                log.error(trace.message)
                break
            retry = math.sqrt(sigma_prev * sigma)
            log.info("Newton failed at sigma=%g (%s); retrying at %g", sigma, report.message, retry)
            candidate, report = newton_solve(current, problem, cfg, retry)
            backtracks += 1
            if not report.converged:
                trace.failed = True
                trace.message = f"Newton failed at sigma={sigma:g} and at backtracked sigma={retry:g}: {report.message}"
                log.error(trace.message)
                break
            # accepted the intermediate value; sigma itself is attempted again next
            sigma_used, sigma_next = retry, sigma
        else:
            sigma_used, sigma_next = sigma, sigma * cfg.sigma_factor

        k += 1
        change = weighted_norm(candidate.u - current.u, candidate.v - current.v, problem)
        uf, vf = problem.expand(candidate.u), problem.expand(candidate.v)
        step = HomotopyStep(
            k=k,
            sigma=sigma_used,
            newton=report,
            control_change=change,
            penalty_value=penalty_eval(uf, vf, problem.fem).value,
            max_abs_fb=max_abs_fb(problem, candidate.u, candidate.v),
        )
        if len(trace.steps) >= 1 and step.max_abs_fb > trace.steps[-1].max_abs_fb * (1 + 1e-8):
            log.warning("max |fb| grew from %.3e to %.3e at sigma=%g", trace.steps[-1].max_abs_fb, step.max_abs_fb, sigma_used)
        trace.steps.append(step)
        current = candidate
        log.info("k=%d sigma=%.3g newton=%d change=%.3e max|fb|=%.3e", k, sigma_used, report.iterations, change, step.max_abs_fb)
        if change < cfg.eps_stop:
            trace.converged = True
            break
        sigma_prev, sigma = sigma_used, sigma_next
    return current, trace
