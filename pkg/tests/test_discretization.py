"""Meshes, assembly operators, quadrature, and the p-Laplacian residual."""

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from thermodamage.discretization import (
    AssemblyError,
    FieldState,
    assemble_elasticity,
    assemble_mass,
    assemble_weighted_mass,
    assemble_weighted_stiffness,
    divergence_matrix,
    field_at_gauss,
    gauss_weights,
    grad_on_elements,
    integrate_gauss,
    interpolate,
    interval_mesh,
    load_vector,
    p_laplacian_energy,
    p_laplacian_residual,
    rectangle_mesh,
)


def sym_error(mat):
    return abs(mat - mat.T).max()


# ---------------------------------------------------------------------------
# mass
# ---------------------------------------------------------------------------

def test_lumped_mass_two_elements():
    mesh = interval_mesh(3)  # two elements of length 1/2
    diag = assemble_mass(mesh, lumped=True).diagonal()
    assert np.allclose(diag, [0.25, 0.5, 0.25])


def test_mass_row_sums_equal_lumped_and_total_is_domain_measure():
    mesh = interval_mesh(17)
    consistent = assemble_mass(mesh)
    lumped = assemble_mass(mesh, lumped=True)
    rows = np.asarray(consistent.sum(axis=1)).ravel()
    assert np.allclose(rows, lumped.diagonal(), atol=1e-15)
    assert consistent.sum() == pytest.approx(1.0, abs=1e-14)
    assert sym_error(consistent) < 1e-14


def test_weighted_mass_constant_weight_matches_mass():
    mesh = interval_mesh(11)
    assert abs(assemble_weighted_mass(mesh, 1.0) - assemble_mass(mesh)).max() < 1e-14


# ---------------------------------------------------------------------------
# weighted stiffness
# ---------------------------------------------------------------------------

def test_stiffness_unit_weight_tridiagonal_pattern():
    mesh = interval_mesh(5)
    h = 0.25
    a = assemble_weighted_stiffness(mesh, 1.0).toarray()
    expected = np.diag([1, 2, 2, 2, 1]) / h
    expected -= np.diag(np.ones(4), 1) / h
    expected -= np.diag(np.ones(4), -1) / h
    assert np.allclose(a, expected, atol=1e-13)


def test_stiffness_neumann_kernel_and_linearity():
    mesh = interval_mesh(33)
    a1 = assemble_weighted_stiffness(mesh, 1.0)
    assert np.linalg.norm(a1 @ np.ones(mesh.n_nodes)) <= 1e-12
    a2 = assemble_weighted_stiffness(mesh, 2.0)
    assert abs(a2 - 2.0 * a1).max() < 1e-13
    assert sym_error(a1) < 1e-13


def test_stiffness_patch_test_linear_field():
    mesh = interval_mesh(29)
    a = assemble_weighted_stiffness(mesh, 1.0)
    lin = 0.3 + 1.7 * mesh.coords
    resid = a @ lin
    assert np.max(np.abs(resid[1:-1])) < 1e-12  # constant flux: interior rows vanish


def test_stiffness_rejects_negative_weight():
    mesh = interval_mesh(9)
    weight = np.ones(mesh.n_nodes)
    weight[4] = -0.5
    with pytest.raises(AssemblyError):
        assemble_weighted_stiffness(mesh, weight)


# ---------------------------------------------------------------------------
# elasticity
# ---------------------------------------------------------------------------

def test_elasticity_matches_interior_restricted_stiffness():
    mesh = interval_mesh(13)
    k = assemble_elasticity(mesh, 1.0, 1.0)
    full = assemble_weighted_stiffness(mesh, 1.0)
    idx = mesh.interior
    assert abs(k - full[np.ix_(idx, idx)]).max() < 1e-14


def test_elasticity_definite_and_linear_in_coefficient():
    mesh = interval_mesh(21)
    k = assemble_elasticity(mesh, 1.0, 1.0)
    eigs = np.linalg.eigvalsh(k.toarray())
    assert eigs.min() > 0.0
    k3 = assemble_elasticity(mesh, 3.0, 1.0)
    assert abs(k3 - 3.0 * k).max() < 1e-12


def test_elasticity_floor_violation_raises():
    mesh = interval_mesh(9)
    with pytest.raises(AssemblyError):
        assemble_elasticity(mesh, 0.1, 1.0, floor=0.5)


# ---------------------------------------------------------------------------
# divergence pairing
# ---------------------------------------------------------------------------

def test_divergence_of_identity_field_gives_lumped_mass():
    mesh = interval_mesh(15)
    q = divergence_matrix(mesh)
    m = assemble_mass(mesh, lumped=True).diagonal()
    assert np.allclose(q @ mesh.coords, m, atol=1e-14)


def test_divergence_constant_field_interior_adjoint_rows_vanish():
    # (Q^T n)_j = n * int phi_j' dx = 0 at interior nodes for constant n
    mesh = interval_mesh(15)
    q = divergence_matrix(mesh)
    n = 0.7 * np.ones(mesh.n_nodes)
    forcing = q.T @ n
    assert np.max(np.abs(forcing[mesh.interior])) < 1e-14


# ---------------------------------------------------------------------------
# p-Laplacian
# ---------------------------------------------------------------------------

def test_p_laplacian_constant_field_zero_residual():
    mesh = interval_mesh(21)
    chi = 0.4 * np.ones(mesh.n_nodes)
    assert np.max(np.abs(p_laplacian_residual(mesh, chi, 4.0))) == 0.0


def test_p_laplacian_p2_is_linear_stiffness():
    mesh = interval_mesh(21)
    rng = np.random.default_rng(3)
    chi = rng.standard_normal(mesh.n_nodes)
    res = p_laplacian_residual(mesh, chi, 2.0, eps_p=0.0)
    a = assemble_weighted_stiffness(mesh, 1.0)
    assert np.allclose(res, a @ chi, atol=1e-13)


def test_p_laplacian_p4_linear_profile_boundary_flux():
    mesh = interval_mesh(41)
    res = p_laplacian_residual(mesh, mesh.coords.copy(), 4.0, eps_p=0.0)
    expected = np.zeros(mesh.n_nodes)
    expected[0] = -1.0
    expected[-1] = 1.0
    assert np.max(np.abs(res - expected)) < 1e-10


def test_p_laplacian_residual_is_energy_gradient():
    mesh = interval_mesh(17)
    rng = np.random.default_rng(11)
    chi = rng.uniform(0.0, 1.0, mesh.n_nodes)
    p, eps_p = 4.0, 1e-10
    res = p_laplacian_residual(mesh, chi, p, eps_p)
    direction = rng.standard_normal(mesh.n_nodes)
    h = 1e-6
    fd = (p_laplacian_energy(mesh, chi + h * direction, p, eps_p)
          - p_laplacian_energy(mesh, chi - h * direction, p, eps_p)) / (2 * h)
    assert fd == pytest.approx(float(res @ direction), rel=1e-5)


def test_p_laplacian_jacobian_symmetric_psd_and_consistent():
    mesh = interval_mesh(15)
    rng = np.random.default_rng(5)
    chi = rng.uniform(0.0, 1.0, mesh.n_nodes)
    res, jac = p_laplacian_residual(mesh, chi, 4.0, eps_p=1e-8, jacobian=True)
    assert sym_error(jac) < 1e-13
    eigs = np.linalg.eigvalsh(jac.toarray())
    assert eigs.min() > -1e-11
    d = rng.standard_normal(mesh.n_nodes) * 1e-7
    res2 = p_laplacian_residual(mesh, chi + d, 4.0, eps_p=1e-8)
    assert np.allclose(res2 - res, jac @ d, atol=1e-11)


# ---------------------------------------------------------------------------
# interpolation and quadrature
# ---------------------------------------------------------------------------

def test_interpolation_exact_for_affine_fields():
    mesh = interval_mesh(19)
    nodal = 2.0 - 3.0 * mesh.coords
    xq = np.array([0.0, 0.123, 0.5, 0.987, 1.0])
    assert np.allclose(interpolate(mesh, nodal, xq), 2.0 - 3.0 * xq, atol=1e-14)
    gq = field_at_gauss(mesh, nodal)
    from thermodamage.discretization import gauss_points
    assert np.allclose(gq, 2.0 - 3.0 * gauss_points(mesh), atol=1e-14)


def test_interpolation_outside_domain_raises():
    mesh = interval_mesh(9)
    with pytest.raises(AssemblyError):
        interpolate(mesh, mesh.coords.copy(), np.array([1.5]))


def test_quadrature_of_one_is_domain_measure():
    mesh = interval_mesh(27)
    ones = np.ones((mesh.n_elements, 3))
    assert integrate_gauss(mesh, ones) == pytest.approx(1.0, abs=1e-14)


def test_load_vector_constant_equals_lumped_mass_scaled():
    mesh = interval_mesh(13)
    vals = 0.9 * np.ones((mesh.n_elements, 3))
    lv = load_vector(mesh, vals)
    m = assemble_mass(mesh, lumped=True).diagonal()
    assert np.allclose(lv, 0.9 * m, atol=1e-14)


def test_grad_on_elements_affine():
    mesh = interval_mesh(31)
    nodal = 5.0 * mesh.coords - 1.0
    assert np.allclose(grad_on_elements(mesh, nodal), 5.0, atol=1e-12)


# ---------------------------------------------------------------------------
# field state admissibility
# ---------------------------------------------------------------------------

def test_field_state_validation():
    mesh = interval_mesh(9)
    n = mesh.n_nodes
    good = FieldState(0.0, np.zeros(n), np.zeros(n), np.ones(n), 0.5 * np.ones(n))
    assert good.validate(mesh) == []
    bad_u = FieldState(0.0, np.ones(n), np.zeros(n), np.ones(n), 0.5 * np.ones(n))
    assert any("Dirichlet" in m for m in bad_u.validate(mesh))
    bad_chi = FieldState(0.0, np.zeros(n), np.zeros(n), np.ones(n), 1.5 * np.ones(n))
    assert any("chi" in m for m in bad_chi.validate(mesh))
    bad_w = FieldState(0.0, np.zeros(n), np.zeros(n), np.full(n, np.nan), 0.5 * np.ones(n))
    assert any("w" in m for m in bad_w.validate(mesh))


# ---------------------------------------------------------------------------
# 2-D structured meshes (scalar operators)
# ---------------------------------------------------------------------------

def test_q1_mass_total_and_symmetry():
    mesh = rectangle_mesh(5, 4)
    m = assemble_mass(mesh)
    assert m.sum() == pytest.approx(1.0, abs=1e-13)
    assert sym_error(m) < 1e-14
    lumped = assemble_mass(mesh, lumped=True)
    assert np.allclose(np.asarray(m.sum(axis=1)).ravel(), lumped.diagonal())


def test_q1_stiffness_kernel_patch_and_positivity():
    mesh = rectangle_mesh(6, 5)
    a = assemble_weighted_stiffness(mesh, 1.0)
    assert sym_error(a) < 1e-13
    assert np.linalg.norm(a @ np.ones(mesh.n_nodes)) < 1e-12
    lin = 0.2 + 1.3 * mesh.coords[:, 0] - 0.7 * mesh.coords[:, 1]
    resid = a @ lin
    assert np.max(np.abs(resid[mesh.interior])) < 1e-12
    eigs = np.linalg.eigvalsh(a.toarray())
    assert eigs.min() > -1e-11


def test_q1_weighted_stiffness_rejects_negative_weight():
    mesh = rectangle_mesh(4, 4)
    weight = np.ones(mesh.n_nodes)
    weight[5] = -1.0
    with pytest.raises(AssemblyError):
        assemble_weighted_stiffness(mesh, weight)
