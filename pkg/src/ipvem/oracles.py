"""Brute-force reference constructions used only by the test-suite.

Nothing here reuses the numeric kernels of the solver: polynomials are kept
as 2-D coefficient arrays in the scaled variables, volume integrals are
exact (Green's theorem on each edge, integrated symbolically in the edge
parameter), Gauss-Lobatto nodes come from the companion matrix of P_k' with
moment-matched weights, and the projector kernels are closed the other way
round (multipliers for the elliptic projection, row substitution for the
Hessian one).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from numpy.polynomial import polynomial as P
from scipy.signal import convolve2d

__all__ = [
    "OracleConfig",
    "lobatto_rule",
    "legendre_rule",
    "oracle_edge_integral",
    "oracle_cell_integral",
    "oracle_projectors",
]


@dataclass(frozen=True)
class OracleConfig:
    refinement: int = 10          # fan subdivision for the refinement oracle
    edge_panels: int = 8
    edge_order: int = 12
    tol: float = 1e-10


def lobatto_rule(k):
    """(nodes, weights) on [0, 1] for k + 1 Lobatto points, built independently."""
    inner = Legendre.basis(k).deriv().roots() if k > 1 else np.array([])
    x = np.sort(np.concatenate([[-1.0], np.real(inner), [1.0]]))
    s = 0.5 * (x + 1.0)
    V = np.vander(s, k + 1, increasing=True).T
    w = np.linalg.solve(V, 1.0 / np.arange(1, k + 2))
    return s, w


def legendre_rule(n):
    x = np.sort(np.real(Legendre.basis(n).roots()))
    s = 0.5 * (x + 1.0)
    V = np.vander(s, n, increasing=True).T
    return s, np.linalg.solve(V, 1.0 / np.arange(1, n + 1))


def oracle_edge_integral(a, b, integrand, order=None, config=OracleConfig()):
    """Composite Gauss integral of ``integrand(points)`` over segment ab."""
    order = config.edge_order if order is None else order
    s, w = legendre_rule(order)
    a, b = np.asarray(a, float), np.asarray(b, float)
    L = np.hypot(*(b - a))
    total = 0.0
    for j in range(config.edge_panels):
        t = (j + s) / config.edge_panels
        pts = a + t[:, None] * (b - a)
        total += (w / config.edge_panels) @ np.asarray(integrand(pts), dtype=float)
    return L * total


def oracle_cell_integral(poly, integrand, config=OracleConfig(), order=12):
    """Integrate over a polygon by a refined centroid fan with a tensor rule."""
    poly = np.asarray(poly, dtype=float)
    c = poly.mean(axis=0)
    s, w = legendre_rule(order)
    n = config.refinement
    total = 0.0
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        # split the triangle (c, a, b) into n^2 pieces via a Duffy map per strip
        for p in range(n):
            for q in range(n):
                u0, u1 = p / n, (p + 1) / n
                v0, v1 = q / n, (q + 1) / n
                U = u0 + (u1 - u0) * s
                V = v0 + (v1 - v0) * s
                UU, VV = np.meshgrid(U, V, indexing="ij")
                # x = c + u (a - c) + u v (b - a),  Jacobian u |det|
                pts = (c + UU[..., None] * (a - c) + (UU * VV)[..., None] * (b - a)).reshape(-1, 2)
                det = abs((a - c)[0] * (b - a)[1] - (a - c)[1] * (b - a)[0])
                W = np.outer(w * (u1 - u0), w * (v1 - v0)) * UU * det
                total += W.ravel() @ np.asarray(integrand(pts), dtype=float)
    return total


class _Cell:
    """Polygon geometry in the scaled variables xi = (x - x_K) / h_K."""

    def __init__(self, poly):
        self.poly = np.asarray(poly, dtype=float)
        x, y = self.poly[:, 0], self.poly[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        self.area = 0.5 * cr.sum()
        self.center = np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6 * self.area)
        d = self.poly[:, None] - self.poly[None]
        self.h = float(np.sqrt((d ** 2).sum(-1)).max())
        self.hat = (self.poly - self.center) / self.h
        self.nv = len(self.poly)

    def edge(self, i):
        a, b = self.poly[i], self.poly[(i + 1) % self.nv]
        L = np.hypot(*(b - a))
        t = (b - a) / L
        return a, b, L, np.array([t[1], -t[0]]), t

    def _tables(self, size):
        if getattr(self, "_size", None) == size:
            return
        # exact moments int_K xi^a eta^b and int_e xi^a eta^b (unit parameter)
        self._size = size
        self._area_tab = np.zeros((size, size))
        self._edge_tab = np.zeros((self.nv, size, size))
        for i in range(self.nv):
            p0, p1 = self.hat[i], self.hat[(i + 1) % self.nv]
            xi = Polynomial([p0[0], p1[0] - p0[0]])
            eta = Polynomial([p0[1], p1[1] - p0[1]])
            deta = p1[1] - p0[1]
            xp = [xi ** a for a in range(size + 1)]
            ep = [eta ** b for b in range(size)]
            for a in range(size):
                for b in range(size):
                    anti = (xp[a + 1] * ep[b] * (deta / (a + 1))).integ()
                    self._area_tab[a, b] += anti(1.0) - anti(0.0)
                    anti = (xp[a] * ep[b]).integ()
                    self._edge_tab[i, a, b] = anti(1.0) - anti(0.0)

    def integrate(self, C):
        """Exact integral over K of the polynomial with coefficients C[a, b] in (xi, eta)."""
        self._tables(C.shape[0])
        return float((C * self._area_tab).sum()) * self.h ** 2

    def edge_integral(self, i, C):
        """Exact integral along edge i of a polynomial in (xi, eta)."""
        self._tables(C.shape[0])
        return float((C * self._edge_tab[i]).sum()) * self.edge(i)[2]

    def at(self, C, pts):
        z = (np.atleast_2d(pts) - self.center) / self.h
        return P.polyval2d(z[:, 0], z[:, 1], C)


def _monomials(k):
    return [(r - j, j) for r in range(k + 1) for j in range(r + 1)]


def _coef(a, b, size):
    C = np.zeros((size, size))
    C[a, b] = 1.0
    return C


def _d(C, dx, dy, h):
    out = C
    if dx:
        out = P.polyder(out, dx, axis=0)
    if dy:
        out = P.polyder(out, dy, axis=1)
    return _pad(out, C.shape[0]) / h ** (dx + dy)


def _pad(C, size):
    out = np.zeros((size, size))
    out[:C.shape[0], :C.shape[1]] = C[:size, :size]
    return out


def oracle_projectors(poly, k, lobatto_perturb=0.0):
    """Reference (D, P_nabla, P_0, P_delta) for a single polygon.

    Uses the same DoF ordering as :mod:`ipvem.element`.  ``lobatto_perturb``
    adds to the first interior Lobatto weight (sensitivity checks).
    """
    cell = _Cell(poly)
    nv, h = cell.nv, cell.h
    mons = _monomials(k)
    nk = len(mons)
    nm = k * (k - 1) // 2
    ndof = nv * k + nm
    size = 2 * k + 2
    basis = [_coef(a, b, size) for a, b in mons]

    s_lob, w_lob = lobatto_rule(k)
    if lobatto_perturb:
        w_lob = w_lob.copy()
        w_lob[1 if k > 1 else 0] += lobatto_perturb
    s_gl, w_gl = legendre_rule(k + 1)

    edge_ids, edge_pts = [], []
    pts = np.zeros((nv * k, 2))
    pts[:nv] = cell.poly
    for i in range(nv):
        a, b, *_ = cell.edge(i)
        inner = nv + i * (k - 1) + np.arange(k - 1)
        pts[inner] = a + s_lob[1:-1, None] * (b - a)
        edge_ids.append(np.concatenate([[i], inner, [(i + 1) % nv]]))
        edge_pts.append(a + s_lob[:, None] * (b - a))

    def mult(A, B):
        return _pad(convolve2d(A, B), size)

    # DoF matrix
    D = np.zeros((ndof, nk))
    for j, m in enumerate(basis):
        D[:nv * k, j] = cell.at(m, pts)
        for g in range(nm):
            D[nv * k + g, j] = cell.integrate(mult(basis[g], m)) / cell.area

    # elliptic projection with a Lagrange multiplier on the vertex mean
    G = np.array([[cell.integrate(mult(_d(mi, 1, 0, h), _d(mj, 1, 0, h))
                                  + mult(_d(mi, 0, 1, h), _d(mj, 0, 1, h)))
                   for mj in basis] for mi in basis])
    B = np.zeros((nk, ndof))
    for j, m in enumerate(basis):
        lap = _d(m, 2, 0, h) + _d(m, 0, 2, h)
        for g in range(nm):
            ga, gb = mons[g]
            B[j, nv * k + g] -= cell.area * lap[ga, gb]
        for i in range(nv):
            _, _, L, n, _ = cell.edge(i)
            dn = n[0] * _d(m, 1, 0, h) + n[1] * _d(m, 0, 1, h)
            B[j, edge_ids[i]] += L * w_lob * cell.at(dn, edge_pts[i])
    cvec = np.array([cell.at(m, cell.poly).mean() for m in basis])
    kkt = np.zeros((nk + 1, nk + 1))
    kkt[:nk, :nk] = G
    kkt[:nk, nk] = cvec
    kkt[nk, :nk] = cvec
    rhs = np.zeros((nk + 1, ndof))
    rhs[:nk] = B
    rhs[nk, :nv] = 1.0 / nv
    P_nabla = np.linalg.solve(kkt, rhs)[:nk]

    # enhanced L2 projection
    H = np.array([[cell.integrate(mult(mi, mj)) for mj in basis] for mi in basis])
    C = H @ P_nabla
    C[:nm] = 0.0
    C[:nm, nv * k:] = cell.area * np.eye(nm)
    P_0 = np.linalg.solve(H, C)

    # Hessian projection, kernel closed by substituting the first three rows
    def hess_pair(mi, mj):
        return (mult(_d(mi, 2, 0, h), _d(mj, 2, 0, h)) + 2 * mult(_d(mi, 1, 1, h), _d(mj, 1, 1, h))
                + mult(_d(mi, 0, 2, h), _d(mj, 0, 2, h)))

    G2 = np.array([[cell.integrate(hess_pair(mi, mj)) for mj in basis] for mi in basis])
    R = np.zeros((nk, ndof))
    perim = sum(cell.edge(i)[2] for i in range(nv))
    avg_v = np.zeros(ndof)
    avg_grad = np.zeros((2, ndof))
    for i in range(nv):
        _, _, L, n, t = cell.edge(i)
        np.add.at(avg_v, edge_ids[i], L * w_lob / perim)
    for j, m in enumerate(basis):
        lap = _d(m, 2, 0, h) + _d(m, 0, 2, h)
        bilap = _d(lap, 2, 0, h) + _d(lap, 0, 2, h)
        for g in range(nm):
            ga, gb = mons[g]
            R[j, nv * k + g] += cell.area * bilap[ga, gb]
        for i in range(nv):
            a, b, L, n, t = cell.edge(i)
            dn_lap = n[0] * _d(lap, 1, 0, h) + n[1] * _d(lap, 0, 1, h)
            hxx, hxy, hyy = _d(m, 2, 0, h), _d(m, 1, 1, h), _d(m, 0, 2, h)
            g_nt = n[0] * t[0] * hxx + (n[0] * t[1] + n[1] * t[0]) * hxy + n[1] * t[1] * hyy
            g_nn = n[0] ** 2 * hxx + 2 * n[0] * n[1] * hxy + n[1] ** 2 * hyy
            dt_gnt = t[0] * _d(g_nt, 1, 0, h) + t[1] * _d(g_nt, 0, 1, h)
            vals = cell.at(dn_lap + dt_gnt, edge_pts[i])
            R[j, edge_ids[i]] -= L * w_lob * vals
            R[j, edge_ids[i][-1]] += cell.at(g_nt, b)[0]
            R[j, edge_ids[i][0]] -= cell.at(g_nt, a)[0]
            # normal derivative of the elliptic projection, exact product integral
            xg = a + s_gl[:, None] * (b - a)
            gnn = cell.at(g_nn, xg)
            dn_basis = np.array([cell.at(n[0] * _d(mm, 1, 0, h) + n[1] * _d(mm, 0, 1, h), xg)
                                 for mm in basis]).T
            R[j] += L * (w_gl * gnn) @ dn_basis @ P_nabla
    for i in range(nv):
        a, b, L, n, t = cell.edge(i)
        flux = np.array([cell.edge_integral(i, n[0] * _d(mm, 1, 0, h) + n[1] * _d(mm, 0, 1, h))
                         for mm in basis]) @ P_nabla
        avg_grad += np.outer(n, flux) / perim
        avg_grad[:, edge_ids[i][-1]] += t / perim
        avg_grad[:, edge_ids[i][0]] -= t / perim
    Crows = np.zeros((3, nk))
    for j, m in enumerate(basis):
        Crows[0, j] = sum(cell.edge(i)[2] * w_lob @ cell.at(m, edge_pts[i]) for i in range(nv)) / perim
        Crows[1, j] = sum(cell.edge_integral(i, _d(m, 1, 0, h)) for i in range(nv)) / perim
        Crows[2, j] = sum(cell.edge_integral(i, _d(m, 0, 1, h)) for i in range(nv)) / perim
    G2s = G2.copy()
    G2s[:3] = Crows
    R[:3] = np.vstack([avg_v, avg_grad])
    P_delta = np.linalg.solve(G2s, R)
    return D, P_nabla, P_0, P_delta
