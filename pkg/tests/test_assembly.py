import numpy as np
import pytest
import scipy.sparse as sp

from ipvem.analysis import example_case
from ipvem.assembly import (
    BoundaryData,
    LinearSystem,
    PenaltyConfig,
    SolverError,
    apply_boundary_conditions,
    assemble,
    assemble_penalty,
    assemble_volume,
    build_dof_map,
    compute_operators,
    dump_system,
    edge_penalty_block,
    is_positive_definite,
    solve,
)
from ipvem.mesh import generate_cvt_polygonal, generate_distorted_grid, generate_rectangle_grid
from ipvem.oracles import oracle_edge_integral
from conftest import POLY, interpolate


def setup(mesh, k):
    return build_dof_map(mesh, k), compute_operators(mesh, k)


def test_global_dof_counts():
    assert build_dof_map(generate_rectangle_grid(2, 2), 2).n_dofs == 25
    assert build_dof_map(generate_rectangle_grid(1, 1), 2).n_dofs == 9
    assert build_dof_map(generate_rectangle_grid(2, 2), 3).n_dofs == 45


def test_shared_edge_points_coincide():
    m = generate_cvt_polygonal(16, rng_seed=4, lloyd_iters=10)
    dm, ops = setup(m, 3)
    for c, op in enumerate(ops):
        pts = op.layout.points
        assert np.allclose(dm.points[dm.cell_dofs[c][:len(pts)]], pts, atol=1e-14)


def test_volume_assembly():
    m = generate_rectangle_grid(1, 1)
    dm, ops = setup(m, 2)
    vol = assemble_volume(m, dm, 2, 0.3, None, ops)
    assert np.allclose(vol.rhs, 0)
    perm = dm.cell_dofs[0]
    A = vol.matrix.toarray()[np.ix_(perm, perm)]
    assert np.allclose(A, 0.09 * ops[0].A_loc + ops[0].B_loc, atol=1e-14)
    B = assemble_volume(m, dm, 2, 0.0, None, ops).matrix.toarray()[np.ix_(perm, perm)]
    assert np.allclose(B, ops[0].B_loc, atol=1e-15)


def test_consistency_terms_vanish_for_linear_projection_on_single_cell():
    m = generate_rectangle_grid(1, 1)
    dm, ops = setup(m, 2)
    v = np.zeros(dm.n_dofs)
    v[dm.cell_dofs[0]] = ops[0].D[:, 1] + 2 * ops[0].D[:, 2]   # Pi^nabla v is linear
    for e in range(m.n_edges):
        _, ids, _, _, _, avg = edge_penalty_block(m, dm, e, ops, 1.0, 2)
        assert np.abs(avg @ v[ids]).max() < 1e-12
    pen = assemble_penalty(m, dm, 2, 1.0, ops)
    # only the J1 part survives: v^T J v = lambda/|e| * int (d_n v)^2
    expect = sum(m.edge_length(e) * (np.array([1.0, 2.0]) @ m.edge_normal(e)) ** 2 / m.edge_length(e)
                 for e in range(m.n_edges)) / ops[0].basis.h ** 2
    assert v @ pen.matrix @ v == pytest.approx(expect, rel=1e-12)


def test_jumps_vanish_for_smooth_polynomial():
    m = generate_cvt_polygonal(12, rng_seed=5, lloyd_iters=20)
    for k in (2, 3):
        dm, ops = setup(m, k)
        q = POLY[k][0]
        v = interpolate(m, dm, ops, q)
        for e in np.flatnonzero(~m.boundary_edges):
            M, ids, _, w, jump, _ = edge_penalty_block(m, dm, e, ops, 1.0, k)
            scale = np.abs(M).max() * np.abs(v).max()
            assert np.abs(jump @ v[ids]).max() < 1e-11 * max(1, np.abs(v).max())
            assert abs(v[ids] @ M @ v[ids]) < 1e-11 * scale


def test_j1_block_against_edge_oracle():
    m = generate_cvt_polygonal(12, rng_seed=5, lloyd_iters=20)
    dm, ops = setup(m, 2)
    e = int(np.flatnonzero(~m.boundary_edges)[0])
    lam = 1.7
    M, ids, _, _, jump, avg = edge_penalty_block(m, dm, e, ops, lam, 2)
    km, kp = m.edge_cells[e]
    n = m.edge_normal(e)

    def jump_rows(p):
        a = (ops[km].basis.gradients(p) @ n) @ ops[km].P_nabla
        b = (ops[kp].basis.gradients(p) @ n) @ ops[kp].P_nabla
        J = np.hstack([a, -b])
        return np.einsum("qi,qj->qij", J, J).reshape(len(p), -1)

    a, b = m.vertices[m.edges[e]]
    le = m.edge_length(e)
    J1 = lam / le * oracle_edge_integral(a, b, jump_rows).reshape(len(ids), len(ids))
    # M is affine in lambda; the lambda-dependent part is J1
    J1_code = edge_penalty_block(m, dm, e, ops, 2 * lam, 2)[0] - M
    assert np.abs(J1_code - J1).max() < 1e-12 * np.abs(J1).max()


def test_example1_dirichlet_value_at_origin():
    case = example_case(1, 1e-6)
    assert case.boundary.g_D(np.array([[0.0, 0.0]]))[0] == pytest.approx(2e-6, rel=1e-12)


def test_boundary_reduction():
    m = generate_cvt_polygonal(16, rng_seed=2, lloyd_iters=20)
    dm, ops = setup(m, 2)
    s = assemble(m, dm, 2, 1e-2, lambda p: 1 + 0 * p[:, 0], ops)
    r = apply_boundary_conditions(s, dm)
    b = dm.boundary
    A = r.matrix.toarray()
    assert np.allclose(A[b][:, b], np.eye(b.sum()))
    assert np.allclose(A[b][:, ~b], 0) and np.allclose(r.rhs[b], 0)
    assert abs(r.matrix - r.matrix.T).max() <= 1e-12 * abs(r.matrix).max()


def test_solve_trivial_systems():
    I = sp.identity(5, format="csr")
    b = np.arange(5.0)
    assert np.allclose(solve(LinearSystem(I, b, np.ones(5, bool))), b)
    m = generate_rectangle_grid(1, 1)
    dm, ops = setup(m, 2)
    r = apply_boundary_conditions(assemble(m, dm, 2, 0.1, None, ops), dm)
    assert np.all(solve(r) == 0)


@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("eps", [1.0, 1e-4])
def test_k_consistency(distorted4, k, eps):
    q, gq, f = POLY[k]
    dm, ops = setup(distorted4, k)
    bd = BoundaryData(g_D=q, g_N=lambda p, n: gq(p) @ n)
    s = assemble(distorted4, dm, k, eps, f, ops, PenaltyConfig(20.0), bd)
    u = solve(apply_boundary_conditions(s, dm, bd))
    ex = interpolate(distorted4, dm, ops, q)
    assert np.abs(u - ex).max() <= 1e-8 * np.abs(ex).max()


def test_non_pd_diagnostic_mentions_lambda():
    m = generate_rectangle_grid(4, 4)
    dm, ops = setup(m, 2)
    r = apply_boundary_conditions(assemble(m, dm, 2, 1.0, lambda p: 1 + 0 * p[:, 0], ops), dm)
    assert not is_positive_definite(r.matrix)
    with pytest.raises(SolverError, match="lambda"):
        solve(r, lam=1.0)
    r = apply_boundary_conditions(
        assemble(m, dm, 2, 1.0, lambda p: 1 + 0 * p[:, 0], ops, PenaltyConfig(5.0)), dm)
    assert is_positive_definite(r.matrix)


def test_cg_agrees_with_direct():
    m = generate_cvt_polygonal(32, rng_seed=1, lloyd_iters=20)
    case = example_case(1, 1e-6)
    dm, ops = setup(m, 2)
    r = apply_boundary_conditions(assemble(m, dm, 2, case.epsilon, case.f, ops, None, case.boundary),
                                  dm, case.boundary)
    a, b = solve(r), solve(r, method="cg", tol=1e-13)
    assert np.abs(a - b).max() < 1e-9 * np.abs(a).max()
    with pytest.raises(ValueError):
        solve(r, method="qr")


def test_thread_count_does_not_change_matrix():
    m = generate_cvt_polygonal(32, rng_seed=1, lloyd_iters=20)
    case = example_case(1, 1e-6)
    dm = build_dof_map(m, 2)
    mats = []
    for jobs in (1, 1, 4):
        ops = compute_operators(m, 2, n_jobs=jobs)
        mats.append(assemble(m, dm, 2, 1e-6, case.f, ops, None, case.boundary))
    assert (mats[0].matrix != mats[1].matrix).nnz == 0
    assert np.array_equal(mats[0].rhs, mats[1].rhs)
    assert abs(mats[0].matrix - mats[2].matrix).max() <= 1e-12 * abs(mats[0].matrix).max()


def test_penalty_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(lam=0.0)


def test_dump_system_symmetric(tmp_path):
    m = generate_rectangle_grid(1, 1)
    dm, ops = setup(m, 2)
    r = apply_boundary_conditions(assemble(m, dm, 2, 0.5, None, ops), dm)
    dump_system(r, tmp_path / "A.txt")
    rows = np.loadtxt(tmp_path / "A.txt", comments="#")
    A = sp.coo_matrix((rows[:, 2], (rows[:, 0].astype(int), rows[:, 1].astype(int)))).toarray()
    assert np.allclose(A, A.T, atol=1e-14) and np.allclose(A, r.matrix.toarray())
