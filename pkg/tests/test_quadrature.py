import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipvem.mesh import build_topology, generate_rectangle_grid
from ipvem.oracles import legendre_rule, lobatto_rule, oracle_cell_integral
from ipvem.quadrature import gauss_legendre, gauss_lobatto, integrate_cell, triangle_rule
from ipvem.basis import ScaledMonomialBasis
from conftest import random_polygon


def test_lobatto_small_cases():
    r = gauss_lobatto(2)
    assert np.allclose(r.nodes, [0, 0.5, 1], atol=1e-15)
    assert np.allclose(r.weights, [1 / 6, 4 / 6, 1 / 6], atol=1e-15)
    r = gauss_lobatto(3)
    assert np.allclose(r.nodes[1:-1], [(1 - 1 / np.sqrt(5)) / 2, (1 + 1 / np.sqrt(5)) / 2], atol=1e-15)


@pytest.mark.parametrize("k", range(1, 9))
def test_lobatto_exactness_and_oracle(k):
    r = gauss_lobatto(k)
    assert r.weights @ r.nodes ** (2 * k - 1) == pytest.approx(1 / (2 * k), abs=1e-14)
    s, w = lobatto_rule(k)
    assert np.allclose(r.nodes, s, atol=1e-13) and np.allclose(r.weights, w, atol=1e-13)


def test_legendre():
    r = gauss_legendre(1)
    assert np.allclose(r.nodes, [0.5]) and np.allclose(r.weights, [1.0])
    r = gauss_legendre(2)
    assert np.allclose(r.nodes, [(1 - 1 / np.sqrt(3)) / 2, (1 + 1 / np.sqrt(3)) / 2], atol=1e-15)
    assert gauss_legendre(5).weights @ gauss_legendre(5).nodes ** 9 == pytest.approx(0.1, abs=1e-14)
    for n in range(1, 8):
        s, w = legendre_rule(n)
        assert np.allclose(gauss_legendre(n).nodes, s, atol=1e-13)


def test_rule_errors():
    with pytest.raises(ValueError):
        gauss_lobatto(0)
    with pytest.raises(ValueError):
        triangle_rule(21)


@pytest.mark.parametrize("deg", [0, 3, 8, 14, 20])
def test_triangle_rule_exact(deg):
    r = triangle_rule(deg)
    x, y = r.nodes[:, 1], r.nodes[:, 2]
    assert np.all(r.weights > 0) and np.all(r.nodes > 0)
    from math import factorial
    for a in range(deg + 1):
        b = deg - a
        exact = 2 * factorial(a) * factorial(b) / factorial(a + b + 2)
        assert r.weights @ (x ** a * y ** b) == pytest.approx(exact, rel=1e-12)


def test_cell_integrals():
    m = generate_rectangle_grid(1, 1)
    assert integrate_cell(m, 0, lambda p: np.ones(len(p)), 0) == pytest.approx(1.0, abs=1e-13)
    assert integrate_cell(m, 0, lambda p: p[:, 0] * p[:, 1], 2) == pytest.approx(0.25, abs=1e-15)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_mass_matrix_against_refined_fan(seed):
    rng = np.random.default_rng(seed)
    poly = random_polygon(rng, 5)
    m = build_topology(poly, [list(range(5))])
    b = ScaledMonomialBasis(2, m.centroids[0], m.diameters[0])
    outer = lambda p: np.einsum("qi,qj->qij", b.values(p), b.values(p)).reshape(len(p), -1)
    got = integrate_cell(m, 0, outer, 4)
    ref = oracle_cell_integral(poly, outer, order=4)
    assert np.abs(got - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())
