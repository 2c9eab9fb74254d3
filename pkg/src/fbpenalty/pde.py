"""State, adjoint and Dirichlet solves for the elliptic model problem.

The state equation is ``-div(C grad y) + a y = b u + c v`` in the unit square
with homogeneous Neumann data, discretized as ``A y = Bmat u + Cmat v`` with
``A = M1(a) + K(C)``, ``Bmat = M1(b)`` and ``Cmat = M1(c)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import LinearSolver
from .mesh_fem import FemMatrices, Mesh, assemble_k, assemble_m1, is_structured


@dataclass
class EllipticOperator:
    A: sp.csr_matrix
    Bmat: sp.csr_matrix
    Cmat: sp.csr_matrix
    _solver: LinearSolver | None = field(default=None, repr=False, compare=False)

    @property
    def solver(self) -> LinearSolver:
        if self._solver is None:
            self._solver = LinearSolver(self.A)
        return self._solver

    @property
    def n_p(self) -> int:
        return self.A.shape[0]


def build_operator(mesh: Mesh, a=1.0, b=1.0, c=1.0, C=None) -> EllipticOperator:
    """Assemble the operator from elementwise coefficients ``a, b, c`` and ``C``."""
    return EllipticOperator(
        A=(assemble_m1(mesh, a) + assemble_k(mesh, C)).tocsr(),
        Bmat=assemble_m1(mesh, b),
        Cmat=assemble_m1(mesh, c),
    )


def solve_state(op: EllipticOperator, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return op.solver.solve(op.Bmat @ u + op.Cmat @ v)


def adjoint_source(fem: FemMatrices, y: np.ndarray, yd: np.ndarray) -> np.ndarray:
    """``E10^T M0 (E10 y - yd)``, the derivative of the tracking term w.r.t. ``y``."""
    return fem.E10.T @ (fem.m0 * (fem.E10 @ y - yd))


def solve_adjoint(op: EllipticOperator, fem: FemMatrices, y: np.ndarray, yd: np.ndarray) -> np.ndarray:
    # A is symmetric, so the adjoint uses the same factorization
    return op.solver.solve(adjoint_source(fem, y, yd))


def solve_dirichlet_laplace(
    mesh: Mesh,
    g1: Callable[[np.ndarray], np.ndarray],
    g2: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    """Harmonic function with ``y = g1(x1)`` on ``x2 = 0``, ``y = g2(x1)`` on ``x2 = 1``.

    The vertical sides carry homogeneous Neumann data. Boundary data are
    interpolated at the boundary nodes and eliminated symmetrically.
    """
    if not is_structured(mesh):
        raise NotImplementedError("Dirichlet solve expects the structured grid")
    x1, x2 = mesh.vertices[:, 0], mesh.vertices[:, 1]
    bottom = x2 == 0.0
    top = x2 == 1.0
    fixed = bottom | top
    y = np.zeros(mesh.n_p)
    y[bottom] = np.broadcast_to(g1(x1[bottom]), (bottom.sum(),))
    y[top] = np.broadcast_to(g2(x1[top]), (top.sum(),))

    K = assemble_k(mesh)
    free = ~fixed
    K_ff = K[free][:, free]
    rhs = -(K[free][:, fixed] @ y[fixed])
    y[free] = LinearSolver(K_ff).solve(rhs)
    return y
