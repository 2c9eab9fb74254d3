"""Command line entry point.

    fbpenalty solve --example 2 --nx 40 --out runs/ex2
    fbpenalty check --state runs/ex2/state.npz
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import EXAMPLES, EXPERIMENT_SIGMA0, ExperimentSpec, build_example, experiment_config, run_experiment
from .io import PARTIAL_MARKER, load_state
from .stationarity import run_stationarity_test

log = logging.getLogger("fbpenalty")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbpenalty", description="Penalized complementarity control experiments.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one example end to end and write artifacts")
    s.add_argument("--example", type=int, choices=EXAMPLES, required=True)
    s.add_argument("--nx", type=int, default=80)
    s.add_argument("--epsilon", type=float, default=1e-8)
    s.add_argument("--sigma0", type=float, default=EXPERIMENT_SIGMA0)
    s.add_argument("--sigma-factor", type=float, default=10.0)
    s.add_argument("--sigma-max", type=float, default=1e12)
    s.add_argument("--eps-stop", type=float, default=1e-6)
    s.add_argument("--out", type=Path, required=True)

    c = sub.add_parser("check", help="run the stationarity test on a saved iterate")
    c.add_argument("--state", type=Path, required=True)
    c.add_argument("--tau-act", type=float, default=None)
    return ap


def _solve(args) -> int:
    cfg = experiment_config(
        epsilon=args.epsilon, sigma0=args.sigma0, sigma_factor=args.sigma_factor,
        sigma_max=args.sigma_max, eps_stop=args.eps_stop,
    )
    spec = ExperimentSpec(args.example, args.nx, cfg, args.out)
    try:
        result = run_experiment(spec)
    except Exception as exc:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / PARTIAL_MARKER).write_text(f"{type(exc).__name__}: {exc}\n")
        log.error("run aborted: %s", exc)
        return 1
    print(json.dumps(result.summary, indent=2))
    if result.trace.failed or not result.trace.converged:
        log.error("homotopy did not converge: %s", result.trace.message)
        return 2
    return 0


def _check(args) -> int:
    state = load_state(args.state)
    cfg = experiment_config(alpha1=state["alpha1"], alpha2=state["alpha2"], epsilon=state["epsilon"])
    problem = build_example(ExperimentSpec(state["example"], state["nx"], cfg))
    rep = run_stationarity_test(
        state["y"], state["u"], state["v"], problem.op, problem.fem, problem.mesh.elements, problem.yd,
        cfg.alpha1, cfg.alpha2, cfg.epsilon, args.tau_act,
    )
    print(json.dumps({
        "example": state["example"], "nx": state["nx"], "tol": rep.tol, "theta": rep.theta,
        "counts": list(rep.counts), "pct_negative_pairs": rep.pct_negative, "verdict": rep.verdict,
    }, indent=2))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _solve(args) if args.command == "solve" else _check(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
