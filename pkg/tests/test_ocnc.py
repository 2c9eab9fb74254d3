import numpy as np
import pytest

from fbpenalty.homotopy import max_abs_fb
from fbpenalty.ocnc import FEAS_TOL, natural_residual, solve_ocnc
from fbpenalty.pde import solve_state
from fbpenalty.problem import PenaltyConfig
from conftest import example_problem, make_problem
from oracles import dense_equality_kkt


def _positive_target(nx, reduced, seed=0):
    """Target reachable by strictly positive controls, so the bound constraints are inactive."""
    base = make_problem(nx, yd=0.0, reduced=reduced, b=1.0, c=1.0)
    rng = np.random.default_rng(seed)
    m = base.n_control
    u, v = rng.uniform(1, 2, m), rng.uniform(1, 2, m)
    y = solve_state(base.op, base.expand(u), base.expand(v))
    return make_problem(nx, yd=base.fem.E10 @ y, reduced=reduced)


@pytest.mark.parametrize("reduced", [False, True])
def test_matches_equality_kkt(reduced):
    problem = _positive_target(4, reduced)
    cfg = PenaltyConfig(epsilon=1e-4)
    oracle = dense_equality_kkt(problem, cfg.alpha1, cfg.alpha2, cfg.epsilon)
    assert oracle[1].min() > 0 and oracle[2].min() > 0
    sol = solve_ocnc(problem, cfg)
    assert sol.converged
    for a, b in zip((sol.y, sol.u, sol.v, sol.p), oracle):
        assert np.abs(a - b).max() <= 1e-6


def test_zero_target():
    problem = make_problem(3, yd=0.0)
    sol = solve_ocnc(problem, PenaltyConfig())
    assert np.abs(np.concatenate([sol.y, sol.u, sol.v])).max() < 1e-12


@pytest.fixture(scope="module")
def ex2():
    problem = example_problem(2, 12)
    cfg = PenaltyConfig()
    return problem, cfg, solve_ocnc(problem, cfg)


def test_kkt_and_feasibility(ex2):
    problem, cfg, sol = ex2
    assert sol.converged and sol.kkt_residual <= 1e-8
    assert np.abs(natural_residual(sol.iterate, problem, cfg)).max() <= 1e-8
    assert min(sol.u.min(), sol.v.min()) >= -FEAS_TOL
    # bounds are active somewhere in this example
    assert (sol.u <= FEAS_TOL).any() or (sol.v <= FEAS_TOL).any()


def test_penalized_value_nondecreasing_in_gamma(ex2):
    # the relaxed problems shrink toward the constrained one as gamma grows
    _, _, sol = ex2
    vals = [v for _, v, _ in sol.gamma_trace]
    assert all(b >= a - 1e-12 * abs(a) for a, b in zip(vals, vals[1:]))


def test_schedule_independence(ex2):
    problem, cfg, sol = ex2
    coarse = solve_ocnc(problem, cfg, gammas=(1.0, 1e4, 1e8))
    assert np.abs(coarse.u - sol.u).max() <= 1e-6 and np.abs(coarse.v - sol.v).max() <= 1e-6


def test_controls_constant_along_columns(ex2):
    problem, _, sol = ex2
    nx = problem.mesh.nx
    for w in (sol.u, sol.v):
        z = problem.expand(w).reshape(nx + 1, nx + 1)
        assert np.all(z == z[0])


def test_example1_already_complementary():
    problem = example_problem(1, 20)
    sol = solve_ocnc(problem, PenaltyConfig())
    assert max_abs_fb(problem, sol.u, sol.v) <= 1e-3


def test_requires_positive_epsilon():
    problem = make_problem(2)
    cfg = PenaltyConfig()
    object.__setattr__(cfg, "epsilon", 0.0)
    with pytest.raises(ValueError):
        solve_ocnc(problem, cfg)
