"""Edge and triangle quadrature rules.

Edge rules live on the parameter interval [0, 1] with weights summing to
one, so ``|e| * sum(w * f(a + s (b - a)))`` approximates the edge integral.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

__all__ = [
    "EdgeRule",
    "TriangleRule",
    "gauss_lobatto",
    "gauss_legendre",
    "triangle_rule",
    "integrate_cell",
    "cell_quadrature",
    "MAX_TRIANGLE_DEGREE",
]

MAX_TRIANGLE_DEGREE = 20


@dataclass(frozen=True)
class EdgeRule:
    nodes: np.ndarray
    weights: np.ndarray
    degree: int


@dataclass(frozen=True)
class TriangleRule:
    """Barycentric nodes (n, 3) and weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def gauss_lobatto(k):
    """``k + 1`` point Gauss-Lobatto rule on [0, 1], exact to degree ``2k - 1``.

    Interior nodes are the roots of P_k', i.e. the Gauss-Jacobi(1, 1)
    nodes, obtained from the Golub-Welsch eigenvalue problem.
    """
    if k < 1:
        raise ValueError("Gauss-Lobatto rule needs k >= 1")
    if k == 1:
        x = np.array([-1.0, 1.0])
    else:
        inner, _ = roots_jacobi(k - 1, 1.0, 1.0)
        x = np.concatenate([[-1.0], np.sort(inner), [1.0]])
    # w_i = 2 / (k (k + 1) P_k(x_i)^2) on [-1, 1]
    pk = legendre.legval(x, np.eye(k + 1)[k])
    w = 2.0 / (k * (k + 1) * pk ** 2)
    x = 0.5 * (x - x[::-1])  # enforce exact symmetry
    w = 0.5 * (w + w[::-1])
    nodes = 0.5 * (x + 1.0)
    nodes[0], nodes[-1] = 0.0, 1.0
    rule = EdgeRule(nodes=nodes, weights=w / w.sum(), degree=2 * k - 1)
    _check_edge_rule(rule)
    return rule


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """``n`` point Gauss-Legendre rule on [0, 1], exact to degree ``2n - 1``."""
    if n < 1:
        raise ValueError("Gauss-Legendre rule needs n >= 1")
    x, w = legendre.leggauss(n)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    rule = EdgeRule(nodes=0.5 * (x + 1.0), weights=w / w.sum(), degree=2 * n - 1)
    _check_edge_rule(rule)
    return rule


def _check_edge_rule(rule):
    s = np.arange(rule.degree + 1)
    got = (rule.weights[:, None] * rule.nodes[:, None] ** s).sum(axis=0)
    if not np.allclose(got, 1.0 / (s + 1), rtol=1e-13, atol=1e-14):
        raise ArithmeticError("edge rule failed its exactness check")


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Positive interior rule on the reference triangle, exact to ``degree``.

    Conical product of Gauss-Jacobi(alpha=1) in the collapsed direction and
    Gauss-Legendre along the other; all nodes are strictly interior.
    """
    if degree > MAX_TRIANGLE_DEGREE:
        raise ValueError(f"no triangle rule of degree {degree} (max {MAX_TRIANGLE_DEGREE})")
    degree = max(int(degree), 0)
    n = degree // 2 + 1
    # s collapses with weight (1 - s): Jacobi (alpha=1, beta=0) on [-1, 1]
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    xt, wt = legendre.leggauss(n)
    s = 0.5 * (xs + 1.0)
    t = 0.5 * (xt + 1.0)
    ws = ws / 4.0  # maps (1-x) dx on [-1,1] to (1-s) ds on [0,1]
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    x = S.ravel()
    y = ((1.0 - S) * T).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    w = W.ravel()
    return TriangleRule(nodes=bary, weights=w / w.sum(), degree=degree)


def cell_quadrature(mesh, c, degree):
    """Physical points and weights for cell ``c`` over its triangulation."""
    rule = triangle_rule(degree)
    tri = mesh.vertices[mesh.triangles[c]]  # (nt, 3, 2)
    d1 = tri[:, 1] - tri[:, 0]
    d2 = tri[:, 2] - tri[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    pts = np.einsum("qi,tid->tqd", rule.nodes, tri).reshape(-1, 2)
    wts = (area[:, None] * rule.weights[None, :]).ravel()
    return pts, wts


def integrate_cell(mesh, c, integrand, degree):
    """Integrate a vectorised ``integrand(points) -> values`` over cell ``c``."""
    pts, wts = cell_quadrature(mesh, c, degree)
    vals = np.asarray(integrand(pts))
    return np.tensordot(wts, vals, axes=(0, 0))
