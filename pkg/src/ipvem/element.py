"""Element-level operators of the interior penalty virtual element method.

Local DoFs of a cell with ``NV`` vertices, in this order:

* values at the ``NV`` vertices (loop order),
* values at the ``k - 1`` interior Gauss-Lobatto points of every edge,
  edge ``i`` joining local vertices ``i`` and ``i + 1`` and its points
  ordered from vertex ``i`` towards vertex ``i + 1``,
* scaled moments ``|K|^-1 (m, v)_K`` for ``m`` in M_{k-2}(K).

All projector matrices map a local DoF vector to coefficients in the
cell's polynomial basis: scaled monomials by default, or their L2(K)
orthonormalisation (see :mod:`ipvem.basis`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import OrthonormalBasis, ScaledMonomialBasis, dim_poly
from .quadrature import cell_quadrature, gauss_legendre, gauss_lobatto

__all__ = [
    "ElementError",
    "ElementDofLayout",
    "ElementOperators",
    "dof_layout",
    "dofs_of_polynomial",
    "h1_projector",
    "l2_projector",
    "h2_projector",
    "local_forms",
    "local_load",
    "element_operators",
    "cell_basis",
    "third_directional",
    "boundary_average_weights",
]

GRAM_COND_LIMIT = 1e14


class ElementError(ArithmeticError):
    """A local projector system could not be solved."""


@dataclass(frozen=True)
class ElementDofLayout:
    k: int
    n_vertices: int
    points: np.ndarray          # (NV * k, 2) vertex and edge-point coordinates
    edge_dofs: np.ndarray       # (NV, k + 1) local DoF ids of the GL nodes of each edge
    n_moments: int

    @property
    def n_dofs(self):
        return self.n_vertices * self.k + self.n_moments

    @property
    def n_boundary(self):
        return self.n_vertices * self.k

    @property
    def moment_slice(self):
        return slice(self.n_boundary, self.n_dofs)

    def kind(self, i):
        if i < self.n_vertices:
            return "vertex"
        if i < self.n_boundary:
            return "edge"
        return "moment"


@dataclass(frozen=True, eq=False)
class CellGeometry:
    polygon: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    lengths: np.ndarray      # (NV,)
    normals: np.ndarray      # (NV, 2) outward
    tangents: np.ndarray     # (NV, 2) along the CCW loop


def cell_geometry(mesh, c):
    poly = mesh.cell_polygon(c)
    d = np.roll(poly, -1, axis=0) - poly
    lengths = np.hypot(d[:, 0], d[:, 1])
    tangents = d / lengths[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
    return CellGeometry(poly, float(mesh.areas[c]), mesh.centroids[c],
                        float(mesh.diameters[c]), lengths, normals, tangents)


def dof_layout(mesh, c, k):
    if k < 2:
        raise ValueError("the element needs k >= 2")
    poly = mesh.cell_polygon(c)
    nv = len(poly)
    s = gauss_lobatto(k).nodes
    edge_dofs = np.empty((nv, k + 1), dtype=np.int64)
    pts = np.empty((nv * k, 2))
    pts[:nv] = poly
    for i in range(nv):
        a, b = poly[i], poly[(i + 1) % nv]
        inner = nv + i * (k - 1) + np.arange(k - 1)
        edge_dofs[i] = np.concatenate([[i], inner, [(i + 1) % nv]])
        pts[inner] = a + s[1:-1, None] * (b - a)
    return ElementDofLayout(k=k, n_vertices=nv, points=pts, edge_dofs=edge_dofs,
                            n_moments=dim_poly(k - 2))


def third_directional(d3, u, v, w):
    """Contract third derivatives (xxx, xxy, xyy, yyy) with directions."""
    c = np.array([
        u[0] * v[0] * w[0],
        u[0] * v[0] * w[1] + u[0] * v[1] * w[0] + u[1] * v[0] * w[0],
        u[0] * v[1] * w[1] + u[1] * v[0] * w[1] + u[1] * v[1] * w[0],
        u[1] * v[1] * w[1],
    ])
    return d3 @ c


def _mass_matrix(mesh, c, basis, degree):
    pts, wts = cell_quadrature(mesh, c, degree)
    V = basis.values(pts)
    return (V * wts[:, None]).T @ V


def dofs_of_polynomial(mesh, c, layout, basis, coeffs, degree=None):
    """DoF vectors of polynomials given by coefficient columns ``coeffs``.

    ``coeffs`` has shape (nbasis,) or (nbasis, m) in ``basis``; the basis may
    have higher degree than the layout for testing purposes.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    single = coeffs.ndim == 1
    coeffs = coeffs.reshape(len(basis), -1)
    degree = 2 * max(layout.k, basis.degree) if degree is None else degree
    out = np.empty((layout.n_dofs, coeffs.shape[1]))
    out[:layout.n_boundary] = basis.values(layout.points) @ coeffs
    pts, wts = cell_quadrature(mesh, c, degree)
    mom = ScaledMonomialBasis(layout.k - 2, basis.center, basis.h).values(pts)
    out[layout.moment_slice] = (mom * wts[:, None]).T @ (basis.values(pts) @ coeffs) / mesh.areas[c]
    return out[:, 0] if single else out


def _edge_points(geo, i, nodes):
    a = geo.polygon[i]
    b = geo.polygon[(i + 1) % len(geo.polygon)]
    return a + nodes[:, None] * (b - a)


def h1_projector(mesh, c, layout, basis, geo=None, lobatto=None):
    """Matrix of the quadrature-modified elliptic projection.

    Returns ``(P_nabla, G_grad)`` where ``G_grad`` is the unmodified
    gradient Gram matrix of the basis.  ``lobatto`` overrides the edge rule
    (used only by sensitivity tests).
    """
    geo = cell_geometry(mesh, c) if geo is None else geo
    k = layout.k
    n = len(basis)
    rule = gauss_lobatto(k) if lobatto is None else lobatto
    pts, wts = cell_quadrature(mesh, c, 2 * k)
    grad = basis.gradients(pts)
    G = np.einsum("q,qid,qjd->ij", wts, grad, grad)

    B = np.zeros((n, layout.n_dofs))
    # -(v, lap m_b): lap m_b lives in M_{k-2}, paired with scaled moments
    L = basis.monomial_laplacian()
    nm = layout.n_moments
    B[:, layout.moment_slice] -= geo.area * L[:nm, :].T
    for i in range(layout.n_vertices):
        xq = _edge_points(geo, i, rule.nodes)
        dn = basis.gradients(xq) @ geo.normals[i]          # (k+1, n)
        B[:, layout.edge_dofs[i]] += geo.lengths[i] * (dn * rule.weights[:, None]).T

    G_sys = G.copy()
    G_sys[0] = basis.values(geo.polygon).mean(axis=0)
    B[0] = 0.0
    B[0, :layout.n_vertices] = 1.0 / layout.n_vertices
    try:
        P = np.linalg.solve(G_sys, B)
    except np.linalg.LinAlgError as exc:
        raise ElementError(f"cell {c}: singular elliptic projection system") from exc
    return P, G


def l2_projector(mesh, c, layout, basis, P_nabla, geo=None):
    """Enhanced L2 projection: low moments from DoFs, high ones from P_nabla.

    Returns ``(P_0, H)`` with ``H`` the mass Gram matrix of the basis.
    """
    area = mesh.areas[c]
    H = _mass_matrix(mesh, c, basis, 2 * layout.k)
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > GRAM_COND_LIMIT:
        raise ElementError(f"cell {c}: mass Gram matrix condition {cond:.3e} too large")
    nm = layout.n_moments
    # The enhancement fixes (m, v) = (m, P_nabla v) for the high *monomials*;
    # low monomial moments are DoFs.  With b = T m (T lower triangular,
    # T = I for monomials) the right side is T times the monomial one.
    T = basis.to_monomial.T
    HP = H @ P_nabla
    low = np.zeros((nm, layout.n_dofs))
    low[:, layout.moment_slice] = area * np.eye(nm)
    low -= np.linalg.solve(T, HP)[:nm]
    C = HP + T[:, :nm] @ low
    return np.linalg.solve(H, C), H


def boundary_average_weights(layout, geo, rule=None):
    """DoF weights of the boundary mean |dK|^-1 sum_e Q_e(v)."""
    rule = gauss_lobatto(layout.k) if rule is None else rule
    w = np.zeros(layout.n_dofs)
    for i in range(layout.n_vertices):
        np.add.at(w, layout.edge_dofs[i], geo.lengths[i] * rule.weights)
    return w / geo.lengths.sum()


def h2_projector(mesh, c, layout, basis, P_nabla, geo=None, lobatto=None):
    """Hessian-energy projection closed by boundary averages.

    ``a(v, m)`` is expanded by parts into DoF-computable terms::

        (v, lap^2 m) - int v d_n lap m + int d_n v d_nn m + int d_t v d_nt m

    the normal-derivative term uses d_n P_nabla v (exact on edges by the
    enhancement), the tangential one is integrated by parts along each edge.
    Returns ``(P_delta, G_hess)``.
    """
    geo = cell_geometry(mesh, c) if geo is None else geo
    k = layout.k
    n = len(basis)
    lob = gauss_lobatto(k) if lobatto is None else lobatto
    gl = gauss_legendre(k)
    pts, wts = cell_quadrature(mesh, c, 2 * k)
    hes = basis.hessians(pts)
    G = np.einsum("q,qi,qj->ij", wts, hes[:, :, 0], hes[:, :, 0])
    G += 2 * np.einsum("q,qi,qj->ij", wts, hes[:, :, 1], hes[:, :, 1])
    G += np.einsum("q,qi,qj->ij", wts, hes[:, :, 2], hes[:, :, 2])

    nm = layout.n_moments
    R = np.zeros((n, layout.n_dofs))
    Lm = ScaledMonomialBasis(k, basis.center, basis.h).laplacian_matrix()
    R[:, layout.moment_slice] += geo.area * (Lm @ basis.monomial_laplacian())[:nm, :].T

    grad_avg = np.zeros((2, layout.n_dofs))
    for i in range(layout.n_vertices):
        nrm, tan, le = geo.normals[i], geo.tangents[i], geo.lengths[i]
        dofs = layout.edge_dofs[i]
        # Gauss-Lobatto terms: -Q(v d_n lap m) - Q(v d_t d_nt m)
        xq = _edge_points(geo, i, lob.nodes)
        d3 = basis.evaluate(xq, 3)
        dn_lap = third_directional(d3, nrm, (1, 0), (1, 0)) + third_directional(d3, nrm, (0, 1), (0, 1))
        dt_nt = third_directional(d3, tan, nrm, tan)
        R[:, dofs] -= le * ((dn_lap + dt_nt) * lob.weights[:, None]).T
        # endpoint terms of the tangential integration by parts
        ends = np.array([geo.polygon[i], geo.polygon[(i + 1) % layout.n_vertices]])
        g = basis.mixed_second(ends, nrm, tan)
        R[:, dofs[-1]] += g[1]
        R[:, dofs[0]] -= g[0]
        # int d_n(P_nabla v) d_nn m by Gauss-Legendre (degree 2k - 3)
        xg = _edge_points(geo, i, gl.nodes)
        dnn = basis.directional(xg, nrm, 2)                       # (ng, n)
        dn_proj = (basis.gradients(xg) @ nrm) @ P_nabla            # (ng, ndofs)
        R += le * (dnn * gl.weights[:, None]).T @ dn_proj
        # boundary integral of grad v: normal part via P_nabla, tangential exact
        flux = le * (gl.weights @ dn_proj)
        grad_avg += np.outer(nrm, flux)
        grad_avg[:, dofs[-1]] += tan
        grad_avg[:, dofs[0]] -= tan
    perim = geo.lengths.sum()
    grad_avg /= perim

    # constraint rows evaluated on the monomials themselves
    Cpoly = np.zeros((3, n))
    Cpoly[0] = boundary_average_weights(layout, geo, lob)[:layout.n_boundary] @ basis.values(layout.points)
    for i in range(layout.n_vertices):
        xg = _edge_points(geo, i, gl.nodes)
        Cpoly[1:] += geo.lengths[i] * np.einsum("q,qjd->dj", gl.weights, basis.gradients(xg))
    Cpoly[1:] /= perim
    Cdof = np.vstack([boundary_average_weights(layout, geo, lob), grad_avg])

    kkt = np.zeros((n + 3, n + 3))
    kkt[:n, :n] = G
    kkt[:n, n:] = Cpoly.T
    kkt[n:, :n] = Cpoly
    rhs = np.vstack([R, Cdof])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise ElementError(f"cell {c}: singular H2 projection system") from exc
    return sol[:n], G


def local_forms(D, P_nabla, P_delta, G_grad, G_hess, h):
    """Stabilised local matrices ``(A_loc, B_loc)``; epsilon enters later."""
    I = np.eye(D.shape[0])
    Rd = I - D @ P_delta
    Rn = I - D @ P_nabla
    A = P_delta.T @ G_hess @ P_delta + Rd.T @ Rd / h ** 2
    B = P_nabla.T @ G_grad @ P_nabla + Rn.T @ Rn
    return 0.5 * (A + A.T), 0.5 * (B + B.T)


def local_load(mesh, c, ops, f, degree=None):
    """``P_0^T (f, m_j)_K`` evaluated at ``degree`` exactness (default 2k + 6)."""
    if f is None:
        return np.zeros(ops.layout.n_dofs)
    degree = 2 * ops.layout.k + 6 if degree is None else degree
    pts, wts = cell_quadrature(mesh, c, degree)
    fv = np.asarray(f(pts), dtype=float) * np.ones(len(pts))
    moments = ops.basis.values(pts).T @ (wts * fv)
    return ops.P_0.T @ moments


@dataclass(frozen=True, eq=False)
class ElementOperators:
    cell: int
    layout: ElementDofLayout
    basis: ScaledMonomialBasis
    geometry: CellGeometry
    D: np.ndarray
    P_nabla: np.ndarray
    P_0: np.ndarray
    P_delta: np.ndarray
    G_grad: np.ndarray
    G_hess: np.ndarray
    H: np.ndarray
    A_loc: np.ndarray
    B_loc: np.ndarray

    def in_monomials(self):
        """``(D, P_nabla, P_0, P_delta)`` re-expressed in scaled monomials."""
        T = self.basis.to_monomial
        D = np.linalg.solve(T.T, self.D.T).T
        return D, T @ self.P_nabla, T @ self.P_0, T @ self.P_delta


BASIS_KINDS = ("auto", "monomial", "orthonormal")
# monomial mass-matrix condition above which "auto" orthonormalises a cell
ORTHO_COND_THRESHOLD = 1e6


def cell_basis(mesh, c, k, kind="auto", geo=None):
    """Polynomial basis of P_k on cell ``c``.

    ``"monomial"`` gives scaled monomials; ``"orthonormal"`` their
    L2(K)-orthonormalisation (same DoFs, same discrete method, better
    conditioned Gram systems on stretched cells); ``"auto"`` keeps
    monomials unless their mass matrix condition exceeds
    ``ORTHO_COND_THRESHOLD``.
    """
    if kind not in BASIS_KINDS:
        raise ValueError(f"basis must be one of {BASIS_KINDS}, got {kind!r}")
    geo = cell_geometry(mesh, c) if geo is None else geo
    mono = ScaledMonomialBasis(k, geo.centroid, geo.diameter)
    if kind == "monomial":
        return mono
    pts, wts = cell_quadrature(mesh, c, 2 * k)
    if kind == "auto":
        V = mono.values(pts)
        if np.linalg.cond((V * wts[:, None]).T @ V) <= ORTHO_COND_THRESHOLD:
            return mono
    return OrthonormalBasis.from_quadrature(k, geo.centroid, geo.diameter, pts, wts)


def element_operators(mesh, c, k, basis="auto"):
    """Build every local matrix of cell ``c``; ``basis`` as in :func:`cell_basis`."""
    geo = cell_geometry(mesh, c)
    layout = dof_layout(mesh, c, k)
    basis = cell_basis(mesh, c, k, basis, geo)
    D = dofs_of_polynomial(mesh, c, layout, basis, np.eye(len(basis)))
    P_nabla, G_grad = h1_projector(mesh, c, layout, basis, geo)
    P_0, H = l2_projector(mesh, c, layout, basis, P_nabla, geo)
    P_delta, G_hess = h2_projector(mesh, c, layout, basis, P_nabla, geo)
    A, B = local_forms(D, P_nabla, P_delta, G_grad, G_hess, geo.diameter)
    return ElementOperators(c, layout, basis, geo, D, P_nabla, P_0, P_delta,
                            G_grad, G_hess, H, A, B)
