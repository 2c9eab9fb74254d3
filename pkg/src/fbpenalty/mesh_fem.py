"""Structured triangulations of the unit square and P1/P0 finite-element matrices.

Vertices are numbered row-major: vertex ``j * (nx + 1) + i`` sits at
``(i / nx, j / nx)``. Every square cell is cut along its ``/`` diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Mesh:
    nx: int
    vertices: np.ndarray  # (n_p, 2)
    elements: np.ndarray  # (n_e, 3), counter-clockwise
    element_area: np.ndarray  # (n_e,)

    @property
    def n_p(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_e(self) -> int:
        return self.elements.shape[0]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)


@dataclass(frozen=True)
class FemMatrices:
    """Unit-coefficient matrices shared by every part of the discrete problem."""

    M1: sp.csr_matrix  # P1 mass, coefficient 1
    M0: sp.dia_matrix  # P0 mass (element areas on the diagonal)
    K: sp.csr_matrix  # stiffness, C = I
    E10: sp.csr_matrix  # P1 -> P0 (centroid values)

    @property
    def m0(self) -> np.ndarray:
        return self.M0.diagonal()


def build_structured_mesh(nx: int) -> Mesh:
    if int(nx) != nx or nx < 1:
        raise ValueError(f"nx must be a positive integer, got {nx!r}")
    nx = int(nx)
    t = np.linspace(0.0, 1.0, nx + 1)
    x1, x2 = np.meshgrid(t, t)  # x2 varies along axis 0 -> row-major in i
    vertices = np.column_stack([x1.ravel(), x2.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(nx))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    # interleave so the two triangles of a cell are adjacent
    elements = np.empty((2 * nx * nx, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper
    return Mesh(nx, vertices, elements, _areas(vertices, elements))


def _areas(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = vertices[elements]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _barycentric_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three hat functions on each element, shape (n_e, 3, 2)."""
    p = mesh.vertices[mesh.elements]
    two_area = 2.0 * mesh.element_area
    # grad(lambda_k) = rot90(p_{k+2} - p_{k+1}) / (2|T|)
    grads = np.empty((mesh.n_e, 3, 2))
    for k in range(3):
        a = p[:, (k + 1) % 3]
        b = p[:, (k + 2) % 3]
        grads[:, k, 0] = (a[:, 1] - b[:, 1]) / two_area
        grads[:, k, 1] = (b[:, 0] - a[:, 0]) / two_area
    return grads


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    # COO -> CSR sums duplicates in a fixed order, so the result is deterministic
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_p, mesh.n_p)).tocsr()


def _elem_vector(mesh: Mesh, coef, name: str) -> np.ndarray:
    c = np.asarray(coef, dtype=float)
    if c.ndim == 0:
        return np.full(mesh.n_e, float(c))
    if c.shape != (mesh.n_e,):
        raise ValueError(f"{name} must have length n_e={mesh.n_e}, got shape {c.shape}")
    return c


_REF_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_m1(mesh: Mesh, coef=1.0) -> sp.csr_matrix:
    """P1 mass matrix weighted by an elementwise constant coefficient."""
    c = _elem_vector(mesh, coef, "coef")
    local = (c * mesh.element_area)[:, None, None] * _REF_MASS
    return _scatter(mesh, local)


def assemble_k(mesh: Mesh, C=None) -> sp.csr_matrix:
    """Stiffness matrix for ``-div(C grad y)``; ``C`` is a 2x2 matrix or one per element."""
    if C is None:
        C = np.eye(2)
    C = np.asarray(C, dtype=float)
    if C.shape == (2, 2):
        C = np.broadcast_to(C, (mesh.n_e, 2, 2))
    if C.shape != (mesh.n_e, 2, 2):
        raise ValueError(f"C must be 2x2 or (n_e, 2, 2), got shape {C.shape}")
    if not np.allclose(C, np.swapaxes(C, 1, 2), rtol=0.0, atol=1e-14 * (1.0 + np.abs(C).max())):
        raise ValueError("C must be symmetric on every element")
    if np.any(np.linalg.eigvalsh(C)[:, 0] <= 0.0):
        raise ValueError("C must be positive definite on every element")
    G = _barycentric_gradients(mesh)
    local = mesh.element_area[:, None, None] * np.einsum("eid,edf,ejf->eij", G, C, G)
    return _scatter(mesh, local)


def assemble_m0(mesh: Mesh, coef=1.0) -> sp.dia_matrix:
    c = _elem_vector(mesh, coef, "coef")
    return sp.diags(c * mesh.element_area, format="dia")


def assemble_e10(mesh: Mesh) -> sp.csr_matrix:
    rows = np.repeat(np.arange(mesh.n_e), 3)
    vals = np.full(3 * mesh.n_e, 1.0 / 3.0)
    return sp.csr_matrix((vals, (rows, mesh.elements.ravel())), shape=(mesh.n_e, mesh.n_p))


def is_structured(mesh: Mesh) -> bool:
    nx = mesh.nx
    if mesh.n_p != (nx + 1) ** 2:
        return False
    t = np.linspace(0.0, 1.0, nx + 1)
    x1, x2 = np.meshgrid(t, t)
    return bool(np.array_equal(mesh.vertices, np.column_stack([x1.ravel(), x2.ravel()])))


def assemble_reduction(mesh: Mesh) -> sp.csr_matrix:
    """Replicate a vector over the ``nx + 1`` grid columns along x2.

    Controls written as ``R @ w`` are constant along every vertical grid line,
    which is how zero x2-derivatives are imposed exactly.
    """
    if not is_structured(mesh):
        raise NotImplementedError("reduction map needs the structured grid from build_structured_mesh")
    n1 = mesh.nx + 1
    cols = np.tile(np.arange(n1), n1)
    return sp.csr_matrix((np.ones(mesh.n_p), (np.arange(mesh.n_p), cols)), shape=(mesh.n_p, n1))


def assemble_fem(mesh: Mesh) -> FemMatrices:
    return FemMatrices(
        M1=assemble_m1(mesh),
        M0=assemble_m0(mesh),
        K=assemble_k(mesh),
        E10=assemble_e10(mesh),
    )
