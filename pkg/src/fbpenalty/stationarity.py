"""Discrete strong-stationarity check for a computed control pair.

Each mesh node ``i`` yields one test pair built from its hat function
``e_i``: the ``u``-component is ``e_i`` when every element around ``i`` lies
in ``I+0 u I00``, the ``v``-component is ``e_i`` when every element lies in
``I0+ u I00``, and nodes where both components vanish are skipped.
Since ``Sigma`` is linear in the pair, all node values come from one
adjoint solve: ``Sigma(e_i, 0) = (M1(b) q + H_u u)_i`` with
``A q = E10^T M0 (E10 y - yd)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh_fem import FemMatrices
from .pde import EllipticOperator, adjoint_source, solve_state

log = logging.getLogger(__name__)

POSITIVE, ZERO, NEGATIVE = 1, 0, -1
MAX_NEGATIVE_FRACTION = 0.10
TOL_FACTOR = 0.01


@dataclass
class IndexSets:
    i_plus0: np.ndarray
    i_00: np.ndarray
    i_0plus: np.ndarray
    infeasible: np.ndarray  # both controls positive
    tau_act: float


@dataclass
class StationarityReport:
    theta: float
    tol: float
    tested_nodes: np.ndarray
    sigma_values: np.ndarray
    classification: np.ndarray
    counts: tuple[int, int, int]  # (positive, zero, negative)
    passed: bool
    verdict: str
    infeasible_elements: int
    index_set_sizes: tuple[int, int, int]
    tau_act: float

    @property
    def n_tested(self) -> int:
        return int(self.tested_nodes.size)

    @property
    def pct_negative(self) -> float:
        return 100.0 * self.counts[2] / self.n_tested if self.n_tested else 0.0

    @property
    def min_sigma(self) -> float:
        return float(self.sigma_values.min()) if self.n_tested else 0.0


def default_tau_act(u0: np.ndarray, v0: np.ndarray) -> float:
    return 1e-6 * (1.0 + np.abs(u0).max(initial=0.0) + np.abs(v0).max(initial=0.0))


def classify_elements(u, v, fem: FemMatrices, tau_act: float | None = None) -> IndexSets:
    """Elementwise activity of ``(E10 u, E10 v)``; ``|x| <= tau_act`` counts as zero."""
    u0 = fem.E10 @ u
    v0 = fem.E10 @ v
    if tau_act is None:
        tau_act = default_tau_act(u0, v0)
    if not tau_act > 0:
        raise ValueError("tau_act must be positive")
    uz, vz = np.abs(u0) <= tau_act, np.abs(v0) <= tau_act
    up, vp = u0 > tau_act, v0 > tau_act
    return IndexSets(
        i_plus0=np.flatnonzero(up & vz),
        i_00=np.flatnonzero(uz & vz),
        i_0plus=np.flatnonzero(uz & vp),
        infeasible=np.flatnonzero(up & vp),
        tau_act=float(tau_act),
    )


def compute_theta(y, u, v, fem: FemMatrices, yd, alpha1=0.0, alpha2=0.0, epsilon=0.0) -> float:
    Ey = fem.E10 @ y
    m0 = fem.m0
    H = fem.K + fem.M1
    val = Ey @ (m0 * Ey) - Ey @ (m0 * yd)
    val += alpha1 * u @ (fem.M1 @ u) + alpha2 * v @ (fem.M1 @ v)
    val += epsilon * (u @ (H @ u) + v @ (H @ v))
    return float(val)


def sigma_for_pair(zu, zv, y, u, v, op: EllipticOperator, fem: FemMatrices, yd,
                   alpha1=0.0, alpha2=0.0, epsilon=0.0) -> float:
    """Directional derivative of the reduced objective along a nonnegative pair, via its own state solve."""
    zu = np.asarray(zu, dtype=float)
    zv = np.asarray(zv, dtype=float)
    if np.any(zu < 0) or np.any(zv < 0):
        raise ValueError("test functions must be nonnegative")
    zy = solve_state(op, zu, zv)
    H = fem.K + fem.M1
    val = zy @ adjoint_source(fem, y, yd)
    val += alpha1 * u @ (fem.M1 @ zu) + alpha2 * v @ (fem.M1 @ zv)
    val += epsilon * (u @ (H @ zu) + v @ (H @ zv))
    return float(val)


def node_sigma_components(y, u, v, op: EllipticOperator, fem: FemMatrices, yd,
                          alpha1=0.0, alpha2=0.0, epsilon=0.0):
    """``(Sigma(e_i, 0), Sigma(0, e_i))`` for every node ``i`` from a single adjoint solve."""
    q = op.solver.solve(adjoint_source(fem, y, yd))
    H = fem.K + fem.M1
    s_u = op.Bmat @ q + alpha1 * (fem.M1 @ u) + epsilon * (H @ u)
    s_v = op.Cmat @ q + alpha2 * (fem.M1 @ v) + epsilon * (H @ v)
    return s_u, s_v


def _node_element_incidence(elements: np.ndarray, n_p: int) -> sp.csr_matrix:
    n_e = elements.shape[0]
    rows = elements.ravel()
    cols = np.repeat(np.arange(n_e), 3)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n_p, n_e))


def admissible_nodes(elements: np.ndarray, n_p: int, sets: IndexSets):
    """Masks of nodes whose hat support lies in ``I+0 u I00`` (for u) and ``I0+ u I00`` (for v)."""
    n_e = elements.shape[0]
    inc = _node_element_incidence(elements, n_p)
    ok_u = np.zeros(n_e)
    ok_u[np.concatenate([sets.i_plus0, sets.i_00])] = 1.0
    ok_v = np.zeros(n_e)
    ok_v[np.concatenate([sets.i_0plus, sets.i_00])] = 1.0
    bad_u = inc @ (1.0 - ok_u)
    bad_v = inc @ (1.0 - ok_v)
    return bad_u == 0, bad_v == 0


def classify_sigma(values: np.ndarray, tol: float) -> np.ndarray:
    out = np.full(values.shape, ZERO, dtype=int)
    out[values > tol] = POSITIVE
    out[values < -tol] = NEGATIVE
    return out


def run_stationarity_test(y, u, v, op: EllipticOperator, fem: FemMatrices, elements: np.ndarray, yd,
                          alpha1=0.0, alpha2=0.0, epsilon=0.0, tau_act: float | None = None) -> StationarityReport:
    """Evaluate ``Theta`` and ``Sigma`` over all node test pairs and apply the pass rule.

    ``u`` and ``v`` are nodal. The computed point passes when
    ``|Theta| <= sqrt(tol)`` and at most 10% of the tested pairs are
    numerically negative, with ``tol = 0.01 |min Sigma|``.
    """
    n_p = fem.E10.shape[1]
    sets = classify_elements(u, v, fem, tau_act)
    adm_u, adm_v = admissible_nodes(elements, n_p, sets)
    s_u, s_v = node_sigma_components(y, u, v, op, fem, yd, alpha1, alpha2, epsilon)
    tested = np.flatnonzero(adm_u | adm_v)
    values = np.where(adm_u, s_u, 0.0)[tested] + np.where(adm_v, s_v, 0.0)[tested]
    theta = compute_theta(y, u, v, fem, yd, alpha1, alpha2, epsilon)
    sizes = (sets.i_plus0.size, sets.i_00.size, sets.i_0plus.size)

    if tested.size == 0:
        log.warning("no admissible test pairs; stationarity test is vacuous")
        return StationarityReport(theta, 0.0, tested, values, np.zeros(0, dtype=int), (0, 0, 0),
                                  True, "vacuous-pass", int(sets.infeasible.size), sizes, sets.tau_act)

    tol = TOL_FACTOR * abs(float(values.min()))
    cls = classify_sigma(values, tol)
    counts = (int((cls == POSITIVE).sum()), int((cls == ZERO).sum()), int((cls == NEGATIVE).sum()))
    passed = abs(theta) <= math.sqrt(tol) and counts[2] <= MAX_NEGATIVE_FRACTION * tested.size
    return StationarityReport(theta, tol, tested, values, cls, counts, bool(passed),
                              "passed" if passed else "failed", int(sets.infeasible.size), sizes, sets.tau_act)
