"""Scaled monomials ((x - x_K) / h_K)^s in graded lexicographic order.

:class:`OrthonormalBasis` spans the same graded spaces but is orthonormal
in L2(K); it is meant for stretched cells where the monomial Gram
matrices become ill-conditioned.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np
from scipy.linalg import cholesky, solve_triangular

__all__ = ["ScaledMonomialBasis", "OrthonormalBasis", "exponents", "dim_poly"]


def dim_poly(k):
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@lru_cache(maxsize=None)
def exponents(k):
    """Graded lexicographic exponents: 1, x, y, x^2, xy, y^2, ..."""
    return np.array([(r - j, j) for r in range(k + 1) for j in range(r + 1)], dtype=np.int64)


@lru_cache(maxsize=None)
def _index_map(k):
    return {tuple(e): i for i, e in enumerate(exponents(k))}


@lru_cache(maxsize=None)
def _diff_matrix(k, dx, dy):
    """Coefficient map of d^dx/dxi^dx d^dy/deta^dy in the unscaled basis."""
    ex = exponents(k)
    index = _index_map(k)
    M = np.zeros((len(ex), len(ex)))
    for j, (a, b) in enumerate(ex):
        if a >= dx and b >= dy:
            fa = np.prod(np.arange(a - dx + 1, a + 1)) if dx else 1
            fb = np.prod(np.arange(b - dy + 1, b + 1)) if dy else 1
            M[index[(a - dx, b - dy)], j] = fa * fb
    return M


class ScaledMonomialBasis:
    """The basis M_k(K) for a cell with centroid ``center`` and diameter ``h``."""

    def __init__(self, degree, center, h):
        self.degree = int(degree)
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.exponents = exponents(self.degree)

    def __len__(self):
        return len(self.exponents)

    def n_of_degree(self, r):
        return dim_poly(r)

    def evaluate(self, points, order=0):
        """All partial derivatives of total order ``order`` at ``points``.

        Returns an array of shape (npts, nbasis, order + 1) whose last axis
        runs over d^(order-j)/dx^(order-j) d^j/dy^j, j = 0..order, with the
        h^-order chain-rule factor applied.
        """
        if not 0 <= order <= 3:
            raise ValueError("derivative order must be 0..3")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (pts[:, 0] - self.center[0]) / self.h
        eta = (pts[:, 1] - self.center[1]) / self.h
        k = self.degree
        px = xi[:, None] ** np.arange(k + 1)
        py = eta[:, None] ** np.arange(k + 1)
        out = np.zeros((len(pts), len(self.exponents), order + 1))
        for j in range(order + 1):
            dx, dy = order - j, j
            for i, (a, b) in enumerate(self.exponents):
                if a < dx or b < dy:
                    continue
                ca = np.prod(np.arange(a - dx + 1, a + 1)) if dx else 1
                cb = np.prod(np.arange(b - dy + 1, b + 1)) if dy else 1
                out[:, i, j] = ca * cb * px[:, a - dx] * py[:, b - dy]
        return out / self.h ** order

    def values(self, points):
        return self.evaluate(points, 0)[:, :, 0]

    def gradients(self, points):
        """(npts, nbasis, 2)."""
        return self.evaluate(points, 1)

    def hessians(self, points):
        """(npts, nbasis, 3) holding (xx, xy, yy)."""
        return self.evaluate(points, 2)

    def derivative_matrix(self, dx, dy):
        """Coefficients of d^dx_x d^dy_y m_j in the same basis (column j)."""
        return _diff_matrix(self.degree, dx, dy) / self.h ** (dx + dy)

    def laplacian_matrix(self):
        return self.derivative_matrix(2, 0) + self.derivative_matrix(0, 2)

    @property
    def to_monomial(self):
        """Column j holds the scaled-monomial coefficients of basis function j."""
        return np.eye(len(self))

    def monomial_laplacian(self):
        """Scaled-monomial coefficients of the Laplacian of each basis function."""
        L = (_diff_matrix(self.degree, 2, 0) + _diff_matrix(self.degree, 0, 2)) / self.h ** 2
        return L @ self.to_monomial

    def directional(self, points, direction, order):
        """Order-``order`` derivative along a unit ``direction`` at ``points``."""
        d = self.evaluate(points, order)
        nx, ny = direction
        w = np.array([comb(order, j) * nx ** (order - j) * ny ** j for j in range(order + 1)])
        return d @ w

    def mixed_second(self, points, n, t):
        """d^2 / (dn dt) for unit vectors ``n`` and ``t``."""
        H = self.hessians(points)
        w = np.array([n[0] * t[0], n[0] * t[1] + n[1] * t[0], n[1] * t[1]])
        return H @ w


class OrthonormalBasis(ScaledMonomialBasis):
    """``phi = T m`` with ``T`` lower triangular and ``(phi_i, phi_j)_K = delta_ij``.

    Being triangular, ``T`` keeps every graded prefix: the first
    ``dim_poly(r)`` functions span P_r.  Only the representation changes,
    so projector products such as ``D P`` are the same as for monomials.
    """

    def __init__(self, degree, center, h, transform):
        super().__init__(degree, center, h)
        self.transform = np.asarray(transform, dtype=float)

    @classmethod
    def from_quadrature(cls, degree, center, h, points, weights, passes=2):
        """Orthonormalise against the rule ``(points, weights)`` (exact to 2 * degree).

        Each pass is a Cholesky step on the current Gram matrix; the second
        pass removes most of the loss of orthogonality of the first.
        """
        basis = cls(degree, center, h, np.eye(dim_poly(degree)))
        for _ in range(passes):
            V = basis.values(points)
            G = (V * weights[:, None]).T @ V
            R = cholesky(0.5 * (G + G.T), lower=True)
            basis = cls(degree, center, h, solve_triangular(R, basis.transform, lower=True))
        return basis

    @property
    def to_monomial(self):
        return self.transform.T

    def evaluate(self, points, order=0):
        mono = super().evaluate(points, order)
        return np.einsum("qjd,ij->qid", mono, self.transform)

    def derivative_matrix(self, dx, dy):
        # d phi_j = sum_l T_jl d m_l, re-expanded in phi: T^-T M T^T
        M = _diff_matrix(self.degree, dx, dy) / self.h ** (dx + dy)
        return solve_triangular(self.transform, M @ self.transform.T, lower=True, trans="T")
