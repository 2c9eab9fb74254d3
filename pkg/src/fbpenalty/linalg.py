from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """A sparse factorization or solve failed."""


class LinearSolver:
    """Sparse LU factorization of a fixed matrix with one step of iterative refinement.

    ``splu`` with its default COLAMD ordering is deterministic, so repeated
    runs give bit-identical results.
    """

    def __init__(self, matrix: sp.spmatrix, refine: bool = True):
        self.matrix = sp.csc_matrix(matrix)
        self.refine = refine
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:  # "Factor is exactly singular"
            raise SolverError(str(exc)) from exc

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        if self.refine:
            x = x + self._lu.solve(rhs - self.matrix @ x)
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solve produced non-finite values")
        return x
