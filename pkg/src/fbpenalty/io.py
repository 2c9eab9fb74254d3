"""Plot-ready artifacts of an experiment run and the saved iterate used by ``check``."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"
STATE_FILE = "state.npz"
PARTIAL_MARKER = "PARTIAL"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))


def bottom_edge(nx: int) -> np.ndarray:
    return np.arange(nx + 1)


def write_artifacts(result, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem, it, report, trace = result.problem, result.iterate, result.report, result.trace
    mesh = problem.mesh
    u, v = problem.expand(it.u), problem.expand(it.v)

    idx = bottom_edge(mesh.nx)
    write_csv(out_dir / "controls.csv", ["x1", "u", "v"],
              zip(mesh.vertices[idx, 0], u[idx], v[idx]))

    xy = mesh.vertices[report.tested_nodes]
    write_csv(out_dir / "sigma.csv", ["x1", "x2", "sigma", "classification"],
              zip(xy[:, 0], xy[:, 1], report.sigma_values, report.classification))

    write_csv(
        out_dir / "trace.csv",
        ["k", "sigma", "newton_iterations", "newton_residual", "newton_converged",
         "control_change", "penalty_value", "max_abs_fb"],
        ((s.k, s.sigma, s.newton.iterations, s.newton.final_residual, s.newton.converged,
          s.control_change, s.penalty_value, s.max_abs_fb) for s in trace.steps),
    )

    with open(out_dir / "summary.json", "w") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=False)
        fh.write("\n")

    cfg = result.spec.config
    np.savez(
        out_dir / STATE_FILE,
        y=it.y, u=u, v=v, p=it.p,
        example=result.spec.example_id, nx=mesh.nx,
        alpha1=cfg.alpha1, alpha2=cfg.alpha2, epsilon=cfg.epsilon,
    )

    marker = out_dir / PARTIAL_MARKER
    if trace.failed or not trace.converged:
        marker.write_text(trace.message + "\n")
    elif marker.exists():
        marker.unlink()


def load_state(path: Path) -> dict:
    with np.load(path) as data:
        state = {k: data[k] for k in data.files}
    for key in ("example", "nx"):
        state[key] = int(state[key])
    for key in ("alpha1", "alpha2", "epsilon"):
        state[key] = float(state[key])
    return state
