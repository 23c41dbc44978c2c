import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipvem.basis import ScaledMonomialBasis
from ipvem.element import (
    dof_layout,
    dofs_of_polynomial,
    element_operators,
    local_load,
)
from ipvem.mesh import generate_cvt_polygonal, generate_rectangle_grid
from ipvem.oracles import oracle_cell_integral, oracle_projectors
from ipvem.quadrature import integrate_cell
from conftest import random_polygon, single_cell

UNIT = generate_rectangle_grid(1, 1)


def test_dof_counts():
    tri = single_cell([[0, 0], [1, 0], [0, 1.0]])
    assert dof_layout(tri, 0, 2).n_dofs == 7
    pent = single_cell(random_polygon(np.random.default_rng(1), 5))
    assert dof_layout(pent, 0, 3).n_dofs == 18
    lay = dof_layout(UNIT, 0, 2)
    assert lay.n_dofs == 9 and lay.n_moments == 1


def test_dofs_of_simple_polynomials():
    op = element_operators(UNIT, 0, 2)
    d1 = op.D[:, 0]
    assert np.allclose(d1[:8], 1.0) and d1[8] == pytest.approx(1.0)
    xi = op.D[:, 1]
    assert np.allclose(xi[:4], (UNIT.cell_polygon(0)[:, 0] - 0.5) / op.basis.h)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_moments_against_refinement_oracle(seed):
    rng = np.random.default_rng(seed)
    poly = random_polygon(rng, 5)
    m = single_cell(poly)
    op = element_operators(m, 0, 4)
    q = ScaledMonomialBasis(2, op.basis.center, op.basis.h)
    c = rng.normal(size=len(q))
    got = dofs_of_polynomial(m, 0, op.layout, q, c)[op.layout.moment_slice]
    mb = ScaledMonomialBasis(2, op.basis.center, op.basis.h)
    ref = oracle_cell_integral(poly, lambda p: mb.values(p) * (q.values(p) @ c)[:, None], order=6)
    assert np.allclose(got, ref / m.areas[0], atol=1e-12)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_projectors_reproduce_polynomials(k):
    rng = np.random.default_rng(k)
    for _ in range(5):
        m = single_cell(random_polygon(rng, 6))
        op = element_operators(m, 0, k)
        I = np.eye(len(op.basis))
        tol = 1e-11
        for P in (op.P_nabla, op.P_0, op.P_delta):
            assert np.abs(P @ op.D - I).max() < tol


def test_constant_input_maps_to_constant():
    op = element_operators(generate_cvt_polygonal(8, rng_seed=2, lloyd_iters=5), 3, 3)
    v = np.zeros(op.layout.n_dofs)
    v[:op.layout.n_boundary] = 2.5
    v[op.layout.moment_slice] = op.D[op.layout.moment_slice, 0] * 2.5
    e0 = np.eye(len(op.basis))[0] * 2.5
    for P in (op.P_nabla, op.P_0, op.P_delta):
        assert np.allclose(P @ v, e0, atol=1e-12)


def test_l2_projection_keeps_moments():
    rng = np.random.default_rng(5)
    m = single_cell(random_polygon(rng, 6))
    op = element_operators(m, 0, 3)
    v = rng.normal(size=op.layout.n_dofs)
    low = ScaledMonomialBasis(1, op.basis.center, op.basis.h)
    proj = integrate_cell(m, 0, lambda p: low.values(p) * (op.basis.values(p) @ (op.P_0 @ v))[:, None], 8)
    assert np.allclose(proj, m.areas[0] * v[op.layout.moment_slice], atol=1e-12)


def test_local_kernels():
    op = element_operators(generate_cvt_polygonal(8, rng_seed=2, lloyd_iters=5), 0, 2)
    for j in range(3):  # 1, xi, eta
        assert np.abs(op.A_loc @ op.D[:, j]).max() < 1e-10 * np.abs(op.A_loc).max()
    assert np.abs(op.B_loc @ op.D[:, 0]).max() < 1e-12 * np.abs(op.B_loc).max()
    ev = np.linalg.eigvalsh(op.A_loc)
    assert (ev < 1e-10 * ev.max()).sum() == 3


def test_hessian_energy_on_unit_square():
    op = element_operators(UNIT, 0, 2)
    rng = np.random.default_rng(0)
    c = rng.normal(size=6)
    Dq = op.D @ c
    H = c @ op.basis.hessians(np.array([[0.5, 0.5]]))[0]    # constant Hessian
    exact = H[0] ** 2 + 2 * H[1] ** 2 + H[2] ** 2
    assert Dq @ op.A_loc @ Dq == pytest.approx(exact, rel=1e-12)


def test_scaling_invariance():
    # A scales like h^-2, B is invariant under x -> s x
    poly = random_polygon(np.random.default_rng(3), 6)
    a = element_operators(single_cell(poly), 0, 2)
    b = element_operators(single_cell(4.0 * poly), 0, 2)
    assert np.allclose(b.B_loc, a.B_loc, atol=1e-11)
    assert np.allclose(16.0 * b.A_loc, a.A_loc, rtol=1e-10, atol=1e-10 * np.abs(a.A_loc).max())


def test_local_load():
    op = element_operators(UNIT, 0, 2)
    one = op.D[:, 0]
    assert np.allclose(local_load(UNIT, 0, op, None), 0)
    assert local_load(UNIT, 0, op, lambda p: np.ones(len(p))) @ one == pytest.approx(1.0, abs=1e-13)
    assert local_load(UNIT, 0, op, lambda p: 2 * p[:, 1]) @ one == pytest.approx(1.0, abs=1e-13)


def test_unit_square_matches_oracle():
    op = element_operators(UNIT, 0, 2)
    D, Pn, P0, Pd = oracle_projectors(UNIT.cell_polygon(0), 2)
    assert np.abs(op.P_nabla - Pn).max() < 1e-12
    assert np.abs(op.P_delta - Pd).max() < 1e-11
    assert np.abs(op.P_0 - P0).max() < 1e-12


def test_k_below_two_rejected():
    with pytest.raises(ValueError):
        dof_layout(UNIT, 0, 1)


def test_orthonormal_basis_properties():
    from ipvem.basis import OrthonormalBasis
    from ipvem.quadrature import cell_quadrature
    m = single_cell(random_polygon(np.random.default_rng(9), 6))
    pts, w = cell_quadrature(m, 0, 8)
    b = OrthonormalBasis.from_quadrature(3, m.centroids[0], m.diameters[0], pts, w)
    V = b.values(pts)
    assert np.allclose((V * w[:, None]).T @ V, np.eye(10), atol=1e-13)
    assert np.allclose(b.transform, np.tril(b.transform))     # graded prefixes kept
    c = np.random.default_rng(0).normal(size=10)
    for dx, dy in ((1, 0), (0, 1), (2, 0), (1, 2)):
        got = b.values(pts) @ (b.derivative_matrix(dx, dy) @ c)
        mono = ScaledMonomialBasis(3, b.center, b.h)
        ev = mono.evaluate(pts, dx + dy)[:, :, dy] @ (b.to_monomial @ c)
        assert np.allclose(got, ev, atol=1e-9 * np.abs(ev).max())


@pytest.mark.parametrize("k", [2, 3])
def test_basis_modes_give_same_local_matrices(k):
    from ipvem.mesh import generate_distorted_grid
    m = generate_distorted_grid(6, 6, 0.1)
    for c in (0, 13, 27):
        a = element_operators(m, c, k, basis="monomial")
        b = element_operators(m, c, k, basis="orthonormal")
        assert np.allclose(a.A_loc, b.A_loc, rtol=1e-9, atol=1e-9 * np.abs(a.A_loc).max())
        assert np.allclose(a.B_loc, b.B_loc, rtol=1e-9, atol=1e-9 * np.abs(a.B_loc).max())
        assert np.allclose(a.D @ a.P_delta, b.D @ b.P_delta, atol=1e-9)


def test_auto_mode_switches_only_stretched_cells():
    from ipvem.basis import OrthonormalBasis
    from ipvem.mesh import generate_distorted_grid
    assert type(element_operators(UNIT, 0, 3).basis) is ScaledMonomialBasis
    thin = single_cell([[0, 0], [1, 0], [1, 0.02], [0, 0.02]])
    assert isinstance(element_operators(thin, 0, 3).basis, OrthonormalBasis)
    with pytest.raises(ValueError):
        element_operators(UNIT, 0, 2, basis="legendre")
    # stretched quadrilateral: monomial residual above 1e-11, orthonormal far below
    m = generate_distorted_grid(23, 23, 0.1)
    op = element_operators(m, 522, 3)
    assert max(np.abs(P @ op.D - np.eye(10)).max() for P in (op.P_nabla, op.P_0, op.P_delta)) < 1e-12
