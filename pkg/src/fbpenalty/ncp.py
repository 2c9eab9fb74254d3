"""Fischer-Burmeister NCP function and the discrete penalty built from it.

The penalty is

    F(u, v) = 1/2 * phi(E10 u, E10 v)^T M0 phi(E10 u, E10 v),

with ``phi`` applied elementwise. Its gradient uses the convention that the
derivative of ``phi^2 / 2`` vanishes on biactive elements, where both
elementwise controls are zero; the Newton matrix below uses the same
convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh_fem import FemMatrices

BIACTIVE_RTOL = 1e-14


def _maybe_scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _fb_core(a, b, shift):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.sqrt(a * a + b * b + shift)
    s = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        # r - (a + b) = (shift - 2ab) / (r + a + b) avoids cancellation when a + b > 0
        stable = (shift - 2.0 * a * b) / (r + s)
    return np.where(s > 0.0, stable, r - s)


def fb(a, b):
    """``sqrt(a^2 + b^2) - a - b``; zero exactly when ``a, b >= 0`` and ``a * b == 0``."""
    return _maybe_scalar(_fb_core(a, b, 0.0))


def fb_smoothed(a, b, theta: float):
    """Smoothed variant ``sqrt(a^2 + b^2 + 2 theta) - a - b``."""
    if theta < 0:
        raise ValueError(f"theta must be nonnegative, got {theta}")
    return _maybe_scalar(_fb_core(a, b, 2.0 * float(theta)))


def is_biactive(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.hypot(a, b) <= BIACTIVE_RTOL * (1.0 + np.abs(a) + np.abs(b))


def _fb_parts(a, b):
    """phi, (T_a, T_b) and the biactive mask, elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.hypot(a, b)
    bi = is_biactive(a, b)
    rs = np.where(bi, 1.0, r)
    ta = np.where(bi, 0.0, a / rs - 1.0)
    tb = np.where(bi, 0.0, b / rs - 1.0)
    return _fb_core(a, b, 0.0), ta, tb, bi, rs


def fb_sq_grad(a, b):
    """Gradient of ``phi(a, b)^2 / 2``; ``(0, 0)`` at the origin."""
    phi, ta, tb, _, _ = _fb_parts(a, b)
    return _maybe_scalar(phi * ta), _maybe_scalar(phi * tb)


def fb_sq_hessian(a, b):
    """Element of the generalized Hessian of ``phi^2 / 2``, shape (..., 2, 2).

    Off the origin this is ``g g^T + phi * (I / r - w w^T / r^3)`` with
    ``w = (a, b)``, ``r = |w|`` and ``g = w / r - (1, 1)``; at the origin it is zero.
    """
    phi, ta, tb, bi, r = _fb_parts(a, b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.where(bi, 0.0, phi / r**3)
    h = np.empty(np.shape(phi) + (2, 2))
    # I/r - w w^T/r^3 = [[b^2, -ab], [-ab, a^2]] / r^3
    h[..., 0, 0] = ta * ta + c * b * b
    h[..., 1, 1] = tb * tb + c * a * a
    h[..., 0, 1] = h[..., 1, 0] = ta * tb - c * a * b
    return h


@dataclass
class PenaltyEval:
    value: float
    grad_u: np.ndarray
    grad_v: np.ndarray


def _check_pair(u, v, fem: FemMatrices):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n_p = fem.E10.shape[1]
    if u.shape != (n_p,) or v.shape != (n_p,):
        raise ValueError(f"u and v must be nodal vectors of length {n_p}, got {u.shape} and {v.shape}")
    return u, v


def elementwise_fb(u, v, fem: FemMatrices) -> np.ndarray:
    u, v = _check_pair(u, v, fem)
    return _fb_core(fem.E10 @ u, fem.E10 @ v, 0.0)


def penalty_eval(u, v, fem: FemMatrices) -> PenaltyEval:
    u, v = _check_pair(u, v, fem)
    phi, ta, tb, _, _ = _fb_parts(fem.E10 @ u, fem.E10 @ v)
    w = fem.m0 * phi
    return PenaltyEval(
        value=0.5 * float(phi @ w),
        grad_u=fem.E10.T @ (ta * w),
        grad_v=fem.E10.T @ (tb * w),
    )


def penalty_newton_blocks(u, v, fem: FemMatrices):
    """The four ``n_p x n_p`` blocks ``(uu, uv, vu, vv)`` of the penalty Newton matrix."""
    u, v = _check_pair(u, v, fem)
    h = fem.m0[:, None, None] * fb_sq_hessian(fem.E10 @ u, fem.E10 @ v)
    E, Et = fem.E10, fem.E10.T.tocsr()
    return tuple(
        (Et @ sp.diags(h[:, i, j]) @ E).tocsr() for i, j in ((0, 0), (0, 1), (1, 0), (1, 1))
    )


def penalty_newton_matrix(u, v, fem: FemMatrices) -> sp.csr_matrix:
    """Newton derivative of ``(grad_u, grad_v)`` as a ``2 n_p x 2 n_p`` block matrix."""
    uu, uv, vu, vv = penalty_newton_blocks(u, v, fem)
    return sp.bmat([[uu, uv], [vu, vv]], format="csr")
