import numpy as np
import pytest

from ipvem.basis import ScaledMonomialBasis
from ipvem.mesh import build_topology, generate_distorted_grid
from ipvem.quadrature import cell_quadrature


def random_polygon(rng, n=None, max_vertices=6):
    """Star-shaped counter-clockwise polygon with 3..max_vertices vertices."""
    n = int(rng.integers(3, max_vertices + 1)) if n is None else n
    while True:
        ang = np.sort(rng.uniform(0.0, 2 * np.pi, n))
        if np.diff(np.r_[ang, ang[0] + 2 * np.pi]).max() < 0.8 * np.pi:
            break
    r = rng.uniform(0.5, 1.0, n)
    pts = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    return pts * rng.uniform(0.1, 2.0) + rng.uniform(-1.0, 1.0, 2)


def single_cell(poly):
    return build_topology(np.asarray(poly, float), [list(range(len(poly)))])


def interpolate(mesh, dof_map, operators, q, degree=12):
    """Global DoF vector of the smooth function ``q``."""
    out = np.zeros(dof_map.n_dofs)
    out[:len(dof_map.points)] = q(dof_map.points)
    k = dof_map.k
    for c, op in enumerate(operators):
        pts, w = cell_quadrature(mesh, c, degree)
        m = ScaledMonomialBasis(k - 2, op.basis.center, op.basis.h).values(pts)
        out[dof_map.moment_dofs(c)] = (m * w[:, None]).T @ q(pts) / mesh.areas[c]
    return out


# polynomial fixtures for the k-consistency solve: (q, grad q, -lap q); Δ²q = 0 for k <= 3
POLY = {
    2: (lambda p: 1 + p[:, 0] - 2 * p[:, 1] + 3 * p[:, 0] ** 2 - p[:, 0] * p[:, 1] + 0.5 * p[:, 1] ** 2,
        lambda p: np.column_stack([1 + 6 * p[:, 0] - p[:, 1], -2 - p[:, 0] + p[:, 1]]),
        lambda p: -7.0 + 0 * p[:, 0]),
    3: (lambda p: p[:, 0] ** 3 - 2 * p[:, 0] * p[:, 1] ** 2 + p[:, 1] ** 3 + p[:, 0],
        lambda p: np.column_stack([3 * p[:, 0] ** 2 - 2 * p[:, 1] ** 2 + 1,
                                   -4 * p[:, 0] * p[:, 1] + 3 * p[:, 1] ** 2]),
        lambda p: -(2 * p[:, 0] + 6 * p[:, 1])),
}


@pytest.fixture(scope="session")
def distorted4():
    return generate_distorted_grid(4, 4, 0.1)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    lines = [RESULTS[n] for n in sorted(k for k in RESULTS if isinstance(k, int))]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
