"""Global DoF numbering, assembly, boundary conditions and the linear solve."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .element import ElementError, element_operators, local_load
from .quadrature import gauss_legendre, gauss_lobatto

__all__ = [
    "DofMap",
    "PenaltyConfig",
    "BoundaryData",
    "LinearSystem",
    "SolverError",
    "build_dof_map",
    "compute_operators",
    "assemble_volume",
    "assemble_penalty",
    "assemble",
    "apply_boundary_conditions",
    "solve",
    "dump_system",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DofMap:
    k: int
    n_vertices: int
    n_edges: int
    n_cells: int
    cell_dofs: list            # per cell: local -> global index array
    points: np.ndarray         # coordinates of vertex and edge-point DoFs
    boundary: np.ndarray       # bool mask over all global DoFs

    @property
    def n_moments(self):
        return self.k * (self.k - 1) // 2

    @property
    def n_dofs(self):
        return self.n_vertices + (self.k - 1) * self.n_edges + self.n_moments * self.n_cells

    def edge_dofs(self, e):
        start = self.n_vertices + e * (self.k - 1)
        return np.arange(start, start + self.k - 1)

    def moment_dofs(self, c):
        start = self.n_vertices + (self.k - 1) * self.n_edges + c * self.n_moments
        return np.arange(start, start + self.n_moments)


def build_dof_map(mesh, k):
    """Vertices first, then edge points along stored edge direction, then moments."""
    if k < 2:
        raise ValueError("k >= 2 required")
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    nm = k * (k - 1) // 2
    edge_base = nv
    cell_base = nv + (k - 1) * ne
    cell_dofs = []
    for c in range(nc):
        loop = mesh.cells[c]
        parts = [loop]
        for e, sgn in zip(mesh.cell_edges[c], mesh.cell_edge_sign[c]):
            ids = edge_base + e * (k - 1) + np.arange(k - 1)
            parts.append(ids if sgn > 0 else ids[::-1])
        parts.append(cell_base + c * nm + np.arange(nm))
        cell_dofs.append(np.concatenate(parts).astype(np.int64))

    s = gauss_lobatto(k).nodes[1:-1]
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    epts = (a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)
    points = np.vstack([mesh.vertices, epts])

    n = cell_base + nm * nc
    boundary = np.zeros(n, dtype=bool)
    boundary[:nv] = mesh.boundary_vertices
    bedges = np.flatnonzero(mesh.boundary_edges)
    if k > 1 and len(bedges):
        boundary[(edge_base + bedges[:, None] * (k - 1) + np.arange(k - 1)).ravel()] = True
    return DofMap(k, nv, ne, nc, cell_dofs, points, boundary)


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 1.0
    n_edge_points: int | None = None   # Gauss-Legendre points; default k

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("penalty parameter must be positive")


@dataclass(frozen=True)
class BoundaryData:
    """Trace ``g_D(points)`` and normal derivative ``g_N(points, normal)``."""

    g_D: object = None
    g_N: object = None


@dataclass(eq=False)
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray   # bool mask of unknowns not fixed by boundary data

    @property
    def n(self):
        return self.matrix.shape[0]


def compute_operators(mesh, k, n_jobs=1, basis="auto"):
    """Element operators for every cell, in cell order."""

    def one(c):
        try:
            return element_operators(mesh, c, k, basis)
        except ElementError:
            raise
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ElementError(f"cell {c}: {exc}") from exc

    if n_jobs == 1:
        return [one(c) for c in range(mesh.n_cells)]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(one, range(mesh.n_cells)))


def _coo(rows, cols, vals, n):
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def assemble_volume(mesh, dof_map, k, epsilon, f, operators=None):
    """Scatter eps^2 A_loc + B_loc and the load vector."""
    ops = compute_operators(mesh, k) if operators is None else operators
    n = dof_map.n_dofs
    rows, cols, vals = [], [], []
    F = np.zeros(n)
    for c, op in enumerate(ops):
        g = dof_map.cell_dofs[c]
        M = epsilon ** 2 * op.A_loc + op.B_loc
        rows.append(np.repeat(g, len(g)))
        cols.append(np.tile(g, len(g)))
        vals.append(M.ravel())
        np.add.at(F, g, local_load(mesh, c, op, f))
    return LinearSystem(_coo(rows, cols, vals, n), F, ~dof_map.boundary)


def _edge_traces(mesh, e, op, xq):
    n = mesh.edge_normal(e)
    b = op.basis
    dn = (b.gradients(xq) @ n) @ op.P_nabla
    dnn = b.directional(xq, n, 2) @ op.P_nabla
    return dn, dnn


def edge_penalty_block(mesh, dof_map, e, ops, lam, n_points):
    """Local penalty matrix of edge ``e`` (without eps^2) and its DoF ids.

    Also returns the jump / average rows at the quadrature points, which the
    boundary lifting terms reuse.
    """
    rule = gauss_legendre(n_points)
    a, b = mesh.vertices[mesh.edges[e]]
    le = mesh.edge_length(e)
    xq = a + rule.nodes[:, None] * (b - a)
    km, kp = mesh.edge_cells[e]
    dn_m, dnn_m = _edge_traces(mesh, e, ops[km], xq)
    if kp < 0:
        ids = dof_map.cell_dofs[km]
        jump, avg = dn_m, dnn_m
    else:
        dn_p, dnn_p = _edge_traces(mesh, e, ops[kp], xq)
        ids = np.concatenate([dof_map.cell_dofs[km], dof_map.cell_dofs[kp]])
        jump = np.hstack([dn_m, -dn_p])
        avg = 0.5 * np.hstack([dnn_m, dnn_p])
    w = le * rule.weights
    J1 = (lam / le) * (jump * w[:, None]).T @ jump
    J2 = -(jump * w[:, None]).T @ avg       # rows: test function
    M = J1 + J2 + J2.T
    return M, ids, xq, w, jump, avg


def assemble_penalty(mesh, dof_map, k, epsilon, operators, config=None, boundary=None):
    """eps^2 (J1 + J2 + J3) with Nitsche-type lifting of nonzero ``g_N``."""
    config = PenaltyConfig() if config is None else config
    boundary = BoundaryData() if boundary is None else boundary
    npts = k if config.n_edge_points is None else config.n_edge_points
    n = dof_map.n_dofs
    rows, cols, vals = [], [], []
    F = np.zeros(n)
    eps2 = epsilon ** 2
    for e in range(mesh.n_edges):
        M, ids, xq, w, jump, avg = edge_penalty_block(mesh, dof_map, e, operators, config.lam, npts)
        rows.append(np.repeat(ids, len(ids)))
        cols.append(np.tile(ids, len(ids)))
        vals.append(eps2 * M.ravel())
        if mesh.edge_cells[e, 1] < 0 and boundary.g_N is not None:
            gn = np.asarray(boundary.g_N(xq, mesh.edge_normal(e)), dtype=float) * np.ones(len(xq))
            le = mesh.edge_length(e)
            lift = (config.lam / le) * (w * gn) @ jump - (w * gn) @ avg
            np.add.at(F, ids, eps2 * lift)
    return LinearSystem(_coo(rows, cols, vals, n), F, ~dof_map.boundary)


def assemble(mesh, dof_map, k, epsilon, f, operators, config=None, boundary=None):
    vol = assemble_volume(mesh, dof_map, k, epsilon, f, operators)
    pen = assemble_penalty(mesh, dof_map, k, epsilon, operators, config, boundary)
    A = (vol.matrix + pen.matrix).tocsr()
    A.sum_duplicates()
    return LinearSystem(A, vol.rhs + pen.rhs, ~dof_map.boundary)


def apply_boundary_conditions(system, dof_map, boundary=None):
    """Fix boundary DoFs to ``g_D``; returns a symmetric full-size system.

    Fixed rows and columns are replaced by identity entries and the known
    values are moved to the right-hand side of the free rows.
    """
    boundary = BoundaryData() if boundary is None else boundary
    bmask = dof_map.boundary
    g = np.zeros(system.n)
    if boundary.g_D is not None and bmask.any():
        vals = np.asarray(boundary.g_D(dof_map.points[bmask[:len(dof_map.points)]]), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("g_D is not finite at some boundary node")
        g[np.flatnonzero(bmask)] = vals
    A = system.matrix.tocsr()
    rhs = system.rhs - A @ g
    keep = sp.diags((~bmask).astype(float))
    A = (keep @ A @ keep + sp.diags(bmask.astype(float))).tocsr()
    A.eliminate_zeros()
    rhs[bmask] = g[bmask]
    return LinearSystem(A, rhs, ~bmask)


def _ldl_like(A):
    # symmetric-mode LU without pivoting: positive pivots <=> positive definite
    lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    if np.any(lu.perm_r != lu.perm_c):
        raise np.linalg.LinAlgError("factorization pivoted off the diagonal")
    if np.any(lu.U.diagonal() <= 0):
        raise np.linalg.LinAlgError("non-positive pivot")
    return lu


def is_positive_definite(A):
    try:
        _ldl_like(A)
    except (RuntimeError, np.linalg.LinAlgError):
        return False
    return True


def solve(system, method="direct", tol=1e-12, lam=None):
    """Solve ``system``; raises :class:`SolverError` with a diagnostic."""
    A, b = system.matrix.tocsr(), system.rhs
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b)
    hint = "" if lam is None else f" (penalty lambda={lam}); try a larger lambda"

    if method == "direct":
        try:
            lu = _ldl_like(A)
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            if "non-positive" in str(exc):
                raise SolverError(f"system matrix is not positive definite{hint}") from exc
            log.warning("symmetric factorization failed (%s); falling back to CG", exc)
            return solve(system, "cg", tol, lam)
        x = lu.solve(b)
        for _ in range(3):
            r = b - A @ x
            if np.linalg.norm(r) <= tol * bnorm:
                break
            x += lu.solve(r)
        return x
    if method == "cg":
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.cg(A, b, rtol=tol, atol=0.0, M=M, maxiter=10 * A.shape[0])
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info}){hint}")
        return x
    raise ValueError(f"unknown solver method {method!r}")


def dump_system(system, path):
    """Write the matrix as ``row col value`` lines (full-precision)."""
    A = system.matrix.tocoo()
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i in order:
            fh.write(f"{A.row[i]} {A.col[i]} {A.data[i]:.17e}\n")
