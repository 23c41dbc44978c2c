"""Estimator-style front end: ``IPVEMSolver(...).fit(mesh, case).predict(points)``."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .analysis import ManufacturedCase, energy_error
from .assembly import (
    BoundaryData,
    PenaltyConfig,
    apply_boundary_conditions,
    assemble,
    build_dof_map,
    compute_operators,
    solve,
)
from .element import BASIS_KINDS
from .mesh import Mesh, point_in_polygon

__all__ = ["IPVEMSolver", "check_mesh", "check_points", "check_parameters"]


def check_mesh(mesh):
    if not isinstance(mesh, Mesh):
        raise TypeError(f"expected an ipvem Mesh, got {type(mesh).__name__}")
    return mesh


def check_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and pts.size == 2:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain NaN or inf")
    return pts


def check_parameters(k, epsilon, penalty, tol):
    if int(k) != k or k < 2:
        raise ValueError("k >= 2 required")
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    if not penalty > 0:
        raise ValueError("penalty must be positive")
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")


class IPVEMSolver(BaseEstimator):
    """Interior penalty virtual element solver for eps^2 lap^2 u - lap u = f.

    Parameters
    ----------
    k : int
        Polynomial degree (>= 2).
    epsilon : float
        Singular perturbation parameter; ``0`` gives the stabilised
        Poisson discretisation.
    penalty : float
        Edge penalty coefficient ``lambda_e`` (uniform).
    method : {"direct", "cg"}
    tol : float
        Relative residual target of the linear solve.
    n_jobs : int
        Threads used for element operators.
    basis : {"auto", "monomial", "orthonormal"}
        Local polynomial basis; see :func:`ipvem.element.cell_basis`.

    Attributes
    ----------
    mesh_, dof_map_, operators_ : fitted discretisation
    coef_ : ndarray, global DoF vector of the discrete solution
    """

    def __init__(self, k=2, epsilon=1e-6, penalty=1.0, method="direct", tol=1e-12, n_jobs=1,
                 basis="auto"):
        self.k = k
        self.epsilon = epsilon
        self.penalty = penalty
        self.method = method
        self.tol = tol
        self.n_jobs = n_jobs
        self.basis = basis

    def fit(self, mesh, case=None, f=None, boundary=None):
        """Assemble and solve on ``mesh``.

        Data come either from a :class:`ManufacturedCase` (its epsilon is
        ignored in favour of ``self.epsilon``) or from ``f`` and ``boundary``.
        """
        check_mesh(mesh)
        check_parameters(self.k, self.epsilon, self.penalty, self.tol)
        if self.basis not in BASIS_KINDS:
            raise ValueError(f"basis must be one of {BASIS_KINDS}")
        if case is not None:
            if not isinstance(case, ManufacturedCase):
                raise TypeError("case must be a ManufacturedCase")
            f, boundary = case.f, case.boundary
        boundary = BoundaryData() if boundary is None else boundary
        key = (self.k, self.basis)
        reuse = getattr(self, "mesh_", None) is mesh and getattr(self, "fitted_key_", None) == key
        if not reuse:
            self.dof_map_ = build_dof_map(mesh, self.k)
            self.operators_ = compute_operators(mesh, self.k, n_jobs=self.n_jobs, basis=self.basis)
        self.mesh_ = mesh
        self.fitted_key_ = key
        config = PenaltyConfig(lam=self.penalty)
        system = assemble(mesh, self.dof_map_, self.k, self.epsilon, f, self.operators_,
                          config, boundary)
        self.system_ = apply_boundary_conditions(system, self.dof_map_, boundary)
        self.coef_ = solve(self.system_, method=self.method, tol=self.tol, lam=self.penalty)
        return self

    def locate(self, points):
        """Index of a cell containing each point (-1 outside the mesh)."""
        check_is_fitted(self, "coef_")
        pts = check_points(points)
        owner = np.full(len(pts), -1)
        mesh = self.mesh_
        for c in range(mesh.n_cells):
            todo = owner < 0
            if not todo.any():
                break
            inside = point_in_polygon(pts[todo], mesh.cell_polygon(c))
            owner[np.flatnonzero(todo)[inside]] = c
        return owner

    def _project(self, points, which, order):
        pts = check_points(points)
        owner = self.locate(pts)
        if np.any(owner < 0):
            raise ValueError(f"{(owner < 0).sum()} points lie outside the mesh")
        out = np.empty((len(pts),) + ((2,) if order == 1 else ()))
        for c in np.unique(owner):
            sel = owner == c
            op = self.operators_[c]
            coeffs = getattr(op, which) @ self.coef_[self.dof_map_.cell_dofs[c]]
            vals = op.basis.evaluate(pts[sel], order)
            res = np.einsum("qjd,j->qd", vals, coeffs)
            out[sel] = res[:, 0] if order == 0 else res
        return out

    def predict(self, points):
        """Values of the elementwise elliptic projection at ``points``."""
        check_is_fitted(self, "coef_")
        return self._project(points, "P_nabla", 0)

    def predict_gradient(self, points):
        check_is_fitted(self, "coef_")
        return self._project(points, "P_nabla", 1)

    def energy_error(self, case):
        """Relative projected energy error against ``case``."""
        check_is_fitted(self, "coef_")
        return energy_error(self.mesh_, self.k, self.epsilon, self.coef_, self.dof_map_,
                            self.operators_, case)

    def score(self, case):
        """Negative energy error, so that larger is better."""
        return -self.energy_error(case)
