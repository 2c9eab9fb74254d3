import numpy as np
import pytest

from fbpenalty.experiments import ExperimentSpec, build_example, experiment_config, run_experiment
from fbpenalty.mesh_fem import assemble_fem, assemble_reduction, build_structured_mesh
from fbpenalty.pde import build_operator
from fbpenalty.problem import ControlProblem


def make_problem(nx=2, yd=None, reduced=False, b=1.0, c=1.0, seed=0):
    mesh = build_structured_mesh(nx)
    op = build_operator(mesh, a=1.0, b=b, c=c)
    if yd is None:
        yd = np.random.default_rng(seed).uniform(0.5, 2.0, mesh.n_e)
    R = assemble_reduction(mesh) if reduced else None
    return ControlProblem.from_mesh(mesh, op, yd, R)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fem4():
    return assemble_fem(build_structured_mesh(4))


_RUNS = {}


def example_run(example_id, nx, **cfg):
    key = (example_id, nx, tuple(sorted(cfg.items())))
    if key not in _RUNS:
        _RUNS[key] = run_experiment(ExperimentSpec(example_id, nx, experiment_config(**cfg)))
    return _RUNS[key]


def example_problem(example_id, nx):
    return build_example(ExperimentSpec(example_id, nx, experiment_config()))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
