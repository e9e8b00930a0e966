"""Meshes, assembly and lumped norms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hystera.errors import ConfigError, DegeneracyError
from hystera.grid import (
    assemble_step_system,
    build_grid,
    check_field,
    flux_load,
    grad_norm_sq,
    l2_inner,
    l2_norm_sq,
    lumped_mass,
    stiffness,
)


def test_grid_1d_basic():
    g = build_grid(1.0, 5)
    assert g.h == (0.25,)
    assert list(g.boundary_nodes) == [0, 4]
    assert list(g.interior) == [1, 2, 3]


def test_grid_spacing():
    assert build_grid(2.0, 3).h == (1.0,)


def test_grid_2d_perimeter():
    g = build_grid((1.0, 1.0), (4, 4))
    assert g.boundary.sum() == 12
    assert g.n_nodes == 16
    # x varies fastest
    assert g.coords[1, 0] > g.coords[0, 0] and g.coords[1, 1] == g.coords[0, 1]


@pytest.mark.parametrize("nodes", [2, 0, (5, 2)])
def test_grid_too_few_nodes(nodes):
    extent = (1.0, 1.0) if isinstance(nodes, tuple) else 1.0
    with pytest.raises(ConfigError):
        build_grid(extent, nodes)


def test_grid_csv(tmp_path):
    g = build_grid(1.0, 3)
    path = tmp_path / "nodes.csv"
    g.to_csv(path)
    lines = path.read_bytes().decode().split("\n")
    assert lines[0] == "node_index,x,boundary"
    assert lines[2] == "1,0.5,0"


def test_stiffness_second_difference():
    g = build_grid(1.0, 6)
    h = g.h[0]
    K = stiffness(g).toarray()
    expected = (2 * np.eye(6) - np.eye(6, k=1) - np.eye(6, k=-1)) / h
    expected[0, 0] = expected[-1, -1] = 1 / h
    np.testing.assert_allclose(K, expected, rtol=1e-14)


@pytest.mark.parametrize("extent,nodes", [(1.0, 7), ((1.0, 2.0), (4, 5))])
def test_stiffness_row_sums_zero(extent, nodes, rng):
    g = build_grid(extent, nodes)
    K = stiffness(g, rng.uniform(0.5, 2.0, g.n_nodes))
    np.testing.assert_allclose(np.asarray(K.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    assert abs(K - K.T).max() < 1e-14


def test_stiffness_reproduces_quadratic():
    """Weak Laplacian of x^2 over the lumped mass gives -2 at interior nodes."""
    errs = []
    for n in (11, 21, 41):
        g = build_grid(1.0, n)
        u = g.x**2
        lap = -(stiffness(g) @ u) / lumped_mass(g)
        errs.append(np.max(np.abs(lap[g.interior] - 2.0)))
    # Exact on uniform meshes, so no observable error to take an order from.
    assert max(errs) < 1e-9


def test_stiffness_quadratic_2d():
    g = build_grid((1.0, 1.0), (9, 9))
    u = g.coords[:, 0] ** 2 + g.coords[:, 1] ** 2
    lap = -(stiffness(g) @ u) / lumped_mass(g)
    np.testing.assert_allclose(lap[g.interior], 4.0, rtol=1e-10)


def test_constant_flux_load():
    g = build_grid(1.0, 9)
    F = np.full(g.n_nodes, 0.7)
    full = flux_load(g, F)
    np.testing.assert_allclose(full[g.interior], 0.0, atol=1e-15)
    assert full[0] == pytest.approx(-0.7) and full[-1] == pytest.approx(0.7)
    _, load = assemble_step_system(g, np.ones(g.n_nodes), F, 0.1)
    np.testing.assert_allclose(load, 0.0, atol=1e-15)


def test_linear_flux_load():
    # F = x: int F phi_i' = -h on every interior node.
    g = build_grid(1.0, 11)
    load = flux_load(g, g.x)
    np.testing.assert_allclose(load[g.interior], -g.h[0], rtol=1e-12)


def test_step_system_spd_dense_oracle(rng):
    """Random D: the condensed operator is symmetric positive definite (numpy eigvalsh)."""
    g = build_grid(1.0, 12)  # 10 interior unknowns
    op, _ = assemble_step_system(g, rng.uniform(1e-3, 5.0, g.n_nodes), None, 0.05)
    A = op.toarray()
    assert A.shape == (10, 10)
    np.testing.assert_array_equal(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0
    np.testing.assert_allclose(op.banded[1], np.diag(A))


def test_step_system_m_matrix(rng):
    g = build_grid(1.0, 30)
    op, _ = assemble_step_system(g, rng.uniform(1e-4, 10.0, g.n_nodes), None, 0.3)
    A = op.toarray()
    off = A - np.diag(np.diag(A))
    assert np.all(np.diag(A) > 0) and np.all(off <= 0)


def test_step_system_2d(rng):
    g = build_grid((1.0, 1.0), (5, 6))
    op, load = assemble_step_system(g, rng.uniform(0.1, 1.0, g.n_nodes), None, 0.01)
    assert op.banded is None
    assert op.shape == (g.interior.size,) * 2
    assert np.linalg.eigvalsh(op.toarray()).min() > 0


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_step_system_degenerate(bad):
    g = build_grid(1.0, 5)
    D = np.ones(5)
    D[2] = bad
    with pytest.raises(DegeneracyError, match="node 2"):
        assemble_step_system(g, D, None, 0.1)


def test_l2_of_ones():
    g = build_grid(1.0, 17)
    one = np.ones(g.n_nodes)
    assert l2_inner(one, one, g) == 1.0


def test_l2_hat_three_nodes():
    # Middle hat on [0, 1], h = 1/2: exact integral 2h/3 = 1/3 by hand,
    # the lumped (trapezoid) value is h = 1/2; neighbouring hats are
    # orthogonal under lumping (exact value h/6).
    g = build_grid(1.0, 3)
    hat = np.array([0.0, 1.0, 0.0])
    assert l2_inner(hat, hat, g) == 0.5
    assert l2_inner(hat, np.array([1.0, 0.0, 0.0]), g) == 0.0
    assert grad_norm_sq(hat, g) == pytest.approx(4.0)  # exact: 2 / h


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 9, elements=st.floats(-1e3, 1e3)))
def test_l2_nonnegative(f):
    g = build_grid(1.0, 9)
    assert l2_norm_sq(f, g) >= 0.0
    assert grad_norm_sq(f, g) >= -1e-9 * max(1.0, float(np.dot(f, f)))


def test_l2_length_mismatch():
    g = build_grid(1.0, 5)
    with pytest.raises(ValueError):
        l2_inner(np.ones(5), np.ones(4), g)


def test_check_field():
    g = build_grid(1.0, 5)
    assert check_field([0, 1, 2, 3, 4], g, "p").dtype == float
    with pytest.raises(ValueError):
        check_field(np.ones(3), g)
    with pytest.raises(ValueError):
        check_field(np.ones(5), g, role="w")
