"""Problem data and solver settings shared by the initializer, the homotopy and the tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh_fem import FemMatrices, Mesh, assemble_fem
from .ncp import penalty_eval
from .pde import EllipticOperator, solve_state


@dataclass
class PenaltyConfig:
    alpha1: float = 0.0
    alpha2: float = 0.0
    epsilon: float = 1e-8
    sigma0: float = 1.0
    sigma_factor: float = 10.0
    sigma_max: float = 1e12
    eps_stop: float = 1e-6
    newton_tol: float = 1e-9
    max_newton: int = 50

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha1 and alpha2 must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.sigma0 > 0 or not self.sigma_max > 0:
            raise ValueError("sigma0 and sigma_max must be positive")
        if not self.sigma_factor > 1:
            raise ValueError("sigma_factor must exceed 1")
        if not self.eps_stop > 0 or not self.newton_tol > 0:
            raise ValueError("eps_stop and newton_tol must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be at least 1")

    def sigmas(self):
        """The increasing penalty schedule, capped at ``sigma_max``."""
        s = self.sigma0
        while s <= self.sigma_max * (1 + 1e-12):
            yield s
            s *= self.sigma_factor


@dataclass
class ControlProblem:
    """Discrete tracking problem ``1/2 |E10 y - yd|_M0^2 + J(u, v)`` subject to the state equation.

    ``R`` maps reduced control coefficients to nodal vectors; ``None`` means
    the controls are free nodal vectors.
    """

    mesh: Mesh
    fem: FemMatrices
    op: EllipticOperator
    yd: np.ndarray
    R: sp.csr_matrix | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_mesh(cls, mesh: Mesh, op: EllipticOperator, yd, R=None) -> "ControlProblem":
        yd = np.broadcast_to(np.asarray(yd, dtype=float), (mesh.n_e,)).copy()
        return cls(mesh, assemble_fem(mesh), op, yd, R)

    @property
    def n_p(self) -> int:
        return self.mesh.n_p

    @property
    def n_control(self) -> int:
        return self.n_p if self.R is None else self.R.shape[1]

    @property
    def Rmat(self) -> sp.csr_matrix:
        if self.R is None:
            return sp.identity(self.n_p, format="csr")
        return self.R

    def expand(self, w: np.ndarray) -> np.ndarray:
        """Nodal vector of a (possibly reduced) control vector."""
        return np.asarray(w, dtype=float) if self.R is None else self.R @ w

    @property
    def h1(self) -> sp.csr_matrix:
        """``M1(1) + K(1)``, the discrete H1 Gram matrix."""
        if "h1" not in self._cache:
            self._cache["h1"] = (self.fem.M1 + self.fem.K).tocsr()
        return self._cache["h1"]

    def regularization(self, alpha: float, epsilon: float) -> sp.csr_matrix:
        """Nodal ``alpha M1 + epsilon (M1 + K)``."""
        return (alpha * self.fem.M1 + epsilon * self.h1).tocsr()

    def reduced(self, mat: sp.spmatrix, left: bool = True, right: bool = True) -> sp.csr_matrix:
        """Conjugate (or one-sidedly multiply) a nodal matrix by ``R``."""
        if self.R is None:
            return sp.csr_matrix(mat)
        out = mat
        if left:
            out = self.R.T @ out
        if right:
            out = out @ self.R
        return sp.csr_matrix(out)

    @property
    def lumped_weights(self) -> np.ndarray:
        """Positive weights of the control coefficients: ``R^T M1(1) 1``."""
        if "lumped" not in self._cache:
            self._cache["lumped"] = self.Rmat.T @ (self.fem.M1 @ np.ones(self.n_p))
        return self._cache["lumped"]

    def objective(self, u: np.ndarray, v: np.ndarray, cfg: PenaltyConfig, sigma: float = 0.0) -> float:
        """Reduced objective (state eliminated) at reduced controls ``u, v``."""
        uf, vf = self.expand(u), self.expand(v)
        y = solve_state(self.op, uf, vf)
        r = self.fem.E10 @ y - self.yd
        val = 0.5 * r @ (self.fem.m0 * r)
        val += 0.5 * uf @ (self.regularization(cfg.alpha1, cfg.epsilon) @ uf)
        val += 0.5 * vf @ (self.regularization(cfg.alpha2, cfg.epsilon) @ vf)
        if sigma:
            val += sigma * penalty_eval(uf, vf, self.fem).value
        return float(val)
