"""Meshes, nodal fields, quadrature, and assembly of the spatial operators.

The simulator runs on the unit interval with P1 elements; structured Q1
quadrilaterals on the unit square are supported for the scalar operators
(mass and weighted stiffness) so the same audits can be exercised in 2-D.
Every nonlinear or coupled form is integrated with one shared 3-point
Gauss rule per element: the remainder-cancellation identity of the time
stepper holds exactly only because the three equations agree on the
quadrature of each coupling pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp


class AssemblyError(RuntimeError):
    """Degenerate geometry or inadmissible coefficient data during assembly."""


# 3-point Gauss-Legendre rule on the reference interval [0, 1]
_GPTS = np.array([0.5 * (1.0 - math.sqrt(3.0 / 5.0)), 0.5, 0.5 * (1.0 + math.sqrt(3.0 / 5.0))])
_GWTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mesh:
    """Structured mesh of the unit interval (P1) or unit square (Q1).

    ``coords`` has shape (n,) in 1-D and (n, 2) in 2-D; ``elements`` lists
    node indices per element (2 or 4 columns); ``boundary`` flags boundary
    nodes.  Element measures are positive by construction and checked.
    """

    dimension: int
    coords: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise AssemblyError("only d = 1 and d = 2 meshes are supported")
        if np.any(self.measures() <= 0.0):
            raise AssemblyError("mesh has non-positive element measures")

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    def measures(self) -> np.ndarray:
        if self.dimension == 1:
            return self.coords[self.elements[:, 1]] - self.coords[self.elements[:, 0]]
        p0 = self.coords[self.elements[:, 0]]
        p2 = self.coords[self.elements[:, 2]]
        return np.prod(p2 - p0, axis=1)


def interval_mesh(n_nodes: int) -> Mesh:
    """Uniform P1 mesh of [0, 1] with ``n_nodes`` nodes."""
    if n_nodes < 3:
        raise AssemblyError("need at least 3 nodes")
    coords = np.linspace(0.0, 1.0, n_nodes)
    elements = np.column_stack([np.arange(n_nodes - 1), np.arange(1, n_nodes)])
    boundary = np.zeros(n_nodes, dtype=bool)
    boundary[0] = boundary[-1] = True
    return Mesh(1, coords, elements, boundary)


def rectangle_mesh(nx: int, ny: int) -> Mesh:
    """Structured Q1 mesh of the unit square with nx x ny nodes."""
    if nx < 2 or ny < 2:
        raise AssemblyError("need at least 2 nodes per axis")
    x = np.linspace(0.0, 1.0, nx)
    y = np.linspace(0.0, 1.0, ny)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    coords = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return i * ny + j

    quads = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            quads.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    elements = np.asarray(quads, dtype=int)
    boundary = np.zeros(nx * ny, dtype=bool)
    boundary[coords[:, 0] == 0.0] = True
    boundary[coords[:, 0] == 1.0] = True
    boundary[coords[:, 1] == 0.0] = True
    boundary[coords[:, 1] == 1.0] = True
    return Mesh(2, coords, elements, boundary)


# ---------------------------------------------------------------------------
# Nodal state
# ---------------------------------------------------------------------------

@dataclass
class FieldState:
    """Nodal fields at one time level.

    ``xi`` carries the (density-normalized) lower-bound multiplier of the
    damage update produced by the obstacle solver; it is zero for states
    that never passed through the solver (e.g. initial data).
    """

    t: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    chi: np.ndarray
    xi: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.u.shape[0]
        if self.xi is None:
            self.xi = np.zeros(n)

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.u.copy(), self.v.copy(), self.w.copy(),
                          self.chi.copy(), self.xi.copy())

    def validate(self, mesh: Mesh, tol: float = 1e-12) -> list:
        """Admissibility of the fields; returns violation messages."""
        msgs = []
        if np.max(np.abs(self.u[mesh.boundary])) > tol:
            msgs.append("u does not vanish on the Dirichlet boundary")
        if np.max(np.abs(self.v[mesh.boundary])) > tol:
            msgs.append("v does not vanish on the Dirichlet boundary")
        if np.min(self.chi) < -tol or np.max(self.chi) > 1.0 + tol:
            msgs.append("chi escapes [0, 1]")
        if not np.all(np.isfinite(self.w)):
            msgs.append("w has non-finite entries")
        return msgs


# ---------------------------------------------------------------------------
# Quadrature helpers (1-D)
# ---------------------------------------------------------------------------

def gauss_points(mesh: Mesh) -> np.ndarray:
    """Physical coordinates of the shared Gauss points, shape (ne, nq)."""
    _require_1d(mesh)
    x0 = mesh.coords[mesh.elements[:, 0]]
    h = mesh.measures()
    return x0[:, None] + h[:, None] * _GPTS[None, :]

def gauss_weights(mesh: Mesh) -> np.ndarray:
    """Physical quadrature weights, shape (ne, nq); rows sum to h_e."""
    _require_1d(mesh)
    return mesh.measures()[:, None] * _GWTS[None, :]


def field_at_gauss(mesh: Mesh, nodal: np.ndarray) -> np.ndarray:
    """P1 interpolation of a nodal field at the Gauss points, (ne, nq)."""
    _require_1d(mesh)
    left = nodal[mesh.elements[:, 0]]
    right = nodal[mesh.elements[:, 1]]
    return left[:, None] * (1.0 - _GPTS)[None, :] + right[:, None] * _GPTS[None, :]


def grad_on_elements(mesh: Mesh, nodal: np.ndarray) -> np.ndarray:
    """Elementwise (constant) gradient of a P1 field, shape (ne,)."""
    _require_1d(mesh)
    h = mesh.measures()
    return (nodal[mesh.elements[:, 1]] - nodal[mesh.elements[:, 0]]) / h


def integrate_gauss(mesh: Mesh, values_at_gauss: np.ndarray) -> float:
    """Integral over the domain of values given at the shared Gauss points."""
    return float(np.sum(gauss_weights(mesh) * values_at_gauss))


def load_vector(mesh: Mesh, values_at_gauss: np.ndarray) -> np.ndarray:
    """Nodal load vector int f phi_i dx with f given at Gauss points."""
    _require_1d(mesh)
    wq = gauss_weights(mesh)
    contrib_left = np.sum(wq * values_at_gauss * (1.0 - _GPTS)[None, :], axis=1)
    contrib_right = np.sum(wq * values_at_gauss * _GPTS[None, :], axis=1)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.elements[:, 0], contrib_left)
    np.add.at(out, mesh.elements[:, 1], contrib_right)
    return out


def interpolate(mesh: Mesh, nodal: np.ndarray, x_query) -> np.ndarray:
    """Evaluate the P1 interpolant at query points inside the domain."""
    _require_1d(mesh)
    xq = np.asarray(x_query, dtype=float)
    if np.any(xq < mesh.coords[0] - 1e-14) or np.any(xq > mesh.coords[-1] + 1e-14):
        raise AssemblyError("query point outside the domain")
    return np.interp(xq, mesh.coords, nodal)


def _require_1d(mesh: Mesh):
    if mesh.dimension != 1:
        raise AssemblyError("this operation is implemented for 1-D meshes only")


def _coeff_at_gauss(mesh: Mesh, coeff) -> np.ndarray:
    """Normalize scalar / nodal / per-Gauss coefficient data to (ne, nq)."""
    ne = mesh.n_elements
    if np.isscalar(coeff):
        return np.full((ne, _GPTS.size), float(coeff))
    arr = np.asarray(coeff, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == mesh.n_nodes:
        return field_at_gauss(mesh, arr)
    if arr.shape == (ne, _GPTS.size):
        return arr
    raise AssemblyError(f"coefficient shape {arr.shape} not understood")


# ---------------------------------------------------------------------------
# Matrix assembly
# ---------------------------------------------------------------------------

def assemble_mass(mesh: Mesh, lumped: bool = False) -> sp.csr_matrix:
    """Consistent or row-sum lumped mass matrix."""
    if mesh.dimension == 1:
        h = mesh.measures()
        i0, i1 = mesh.elements[:, 0], mesh.elements[:, 1]
        if lumped:
            diag = np.zeros(mesh.n_nodes)
            np.add.at(diag, i0, h / 2.0)
            np.add.at(diag, i1, h / 2.0)
            return sp.diags(diag).tocsr()
        data = np.concatenate([h / 3.0, h / 3.0, h / 6.0, h / 6.0])
        rows = np.concatenate([i0, i1, i0, i1])
        cols = np.concatenate([i0, i1, i1, i0])
        return sp.coo_matrix((data, (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    return _assemble_q1(mesh, kind="mass", lumped=lumped)


def assemble_weighted_stiffness(mesh: Mesh, weight) -> sp.csr_matrix:
    """Stiffness matrix of the form int k grad(u) . grad(v) dx.

    ``weight`` may be a scalar, a nodal array (interpolated to the shared
    Gauss points), or a per-Gauss array.  A negative weight at any
    quadrature point is rejected: with truncated conductivities it can
    only mean a truncation bug upstream.
    """
    if mesh.dimension == 1:
        kq = _coeff_at_gauss(mesh, weight)
        if np.min(kq) < 0.0:
            raise AssemblyError("negative weight at a quadrature point")
        h = mesh.measures()
        kbar = np.sum(gauss_weights(mesh) * kq, axis=1)  # int_e k
        coef = kbar / h**2
        i0, i1 = mesh.elements[:, 0], mesh.elements[:, 1]
        data = np.concatenate([coef, coef, -coef, -coef])
        rows = np.concatenate([i0, i1, i0, i1])
        cols = np.concatenate([i0, i1, i1, i0])
        return sp.coo_matrix((data, (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    return _assemble_q1(mesh, kind="stiffness", weight=weight)


def assemble_weighted_mass(mesh: Mesh, coeff) -> sp.csr_matrix:
    """Weighted L2 form int c phi_i phi_j dx with the shared Gauss rule (1-D)."""
    _require_1d(mesh)
    cq = _coeff_at_gauss(mesh, coeff)
    wq = gauss_weights(mesh)
    i0, i1 = mesh.elements[:, 0], mesh.elements[:, 1]
    phi_l = (1.0 - _GPTS)[None, :]
    phi_r = _GPTS[None, :]
    m00 = np.sum(wq * cq * phi_l * phi_l, axis=1)
    m01 = np.sum(wq * cq * phi_l * phi_r, axis=1)
    m11 = np.sum(wq * cq * phi_r * phi_r, axis=1)
    data = np.concatenate([m00, m11, m01, m01])
    rows = np.concatenate([i0, i1, i0, i1])
    cols = np.concatenate([i0, i1, i1, i0])
    return sp.coo_matrix((data, (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()


def assemble_elasticity(mesh: Mesh, coeff, stiffness_tensor: float,
                        floor: float = 0.0) -> sp.csr_matrix:
    """Elastic operator int m(x) C u_x v_x dx on the Dirichlet space.

    Returns the matrix restricted to interior nodes (homogeneous Dirichlet
    data for the displacement).  ``coeff`` follows the same conventions as
    in :func:`assemble_weighted_stiffness` and must stay above ``floor``.
    """
    _require_1d(mesh)
    mq = _coeff_at_gauss(mesh, coeff)
    if np.min(mq) < floor:
        raise AssemblyError(
            f"elastic coefficient {np.min(mq):.3e} below the admissible floor {floor:.3e}")
    if stiffness_tensor <= 0.0:
        raise AssemblyError("stiffness tensor must be positive definite")
    full = assemble_weighted_stiffness(mesh, mq * stiffness_tensor)
    idx = mesh.interior
    return full[np.ix_(idx, idx)].tocsr()


def divergence_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Pairing matrix Q with (Q u)_i = int u_x phi_i dx (1-D)."""
    _require_1d(mesh)
    h = mesh.measures()
    i0, i1 = mesh.elements[:, 0], mesh.elements[:, 1]
    # u_x is elementwise constant; int_e phi = h/2 at both nodes
    data = np.concatenate([-0.5 * np.ones_like(h), 0.5 * np.ones_like(h),
                           -0.5 * np.ones_like(h), 0.5 * np.ones_like(h)])
    rows = np.concatenate([i0, i0, i1, i1])
    cols = np.concatenate([i0, i1, i0, i1])
    return sp.coo_matrix((data, (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()


# ---------------------------------------------------------------------------
# p-Laplacian operator
# ---------------------------------------------------------------------------

def p_laplacian_flux(grad: np.ndarray, p: float, eps_p: float) -> np.ndarray:
    """Regularized flux (|g|^2 + eps_p)^{(p-2)/2} g."""
    return (grad**2 + eps_p) ** ((p - 2.0) / 2.0) * grad


def p_laplacian_energy(mesh: Mesh, chi: np.ndarray, p: float, eps_p: float = 0.0) -> float:
    """Discrete regularized energy int (|grad chi|^2 + eps_p)^{p/2} / p dx."""
    _require_1d(mesh)
    g = grad_on_elements(mesh, chi)
    return float(np.sum(mesh.measures() * (g**2 + eps_p) ** (p / 2.0)) / p)


def p_laplacian_residual(mesh: Mesh, chi: np.ndarray, p: float, eps_p: float = 0.0,
                         jacobian: bool = False):
    """Weak residual of the (regularized) p-Laplacian with no-flux boundary.

    Returns the nodal vector r_i = int (|chi_x|^2 + eps_p)^{(p-2)/2} chi_x
    phi_i' dx, and optionally the symmetric positive semidefinite Jacobian.
    The residual is the exact gradient of :func:`p_laplacian_energy`.
    """
    _require_1d(mesh)
    if not p > mesh.dimension:
        raise AssemblyError(f"p-Laplacian requires p > d, got p = {p}")
    if eps_p < 0.0:
        raise AssemblyError("regularization must be nonnegative")
    h = mesh.measures()
    g = grad_on_elements(mesh, chi)
    flux = p_laplacian_flux(g, p, eps_p)
    res = np.zeros(mesh.n_nodes)
    i0, i1 = mesh.elements[:, 0], mesh.elements[:, 1]
    np.add.at(res, i0, -flux)
    np.add.at(res, i1, flux)
    if not jacobian:
        return res
    s = g**2 + eps_p
    dflux = s ** ((p - 2.0) / 2.0) + (p - 2.0) * s ** ((p - 4.0) / 2.0) * g**2 if p != 2.0 \
        else np.ones_like(g)
    coef = dflux / h
    data = np.concatenate([coef, coef, -coef, -coef])
    rows = np.concatenate([i0, i1, i0, i1])
    cols = np.concatenate([i0, i1, i1, i0])
    jac = sp.coo_matrix((data, (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    return res, jac


# ---------------------------------------------------------------------------
# Q1 assembly on the unit square (scalar operators only)
# ---------------------------------------------------------------------------

def _q1_reference():
    """Reference basis/gradient values at a tensor Gauss rule on [0,1]^2."""
    pts, wts = _GPTS, _GWTS
    gx, gy = np.meshgrid(pts, pts, indexing="ij")
    wq = np.outer(wts, wts).ravel()
    x = gx.ravel()
    y = gy.ravel()
    phi = np.stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y], axis=0)
    dphix = np.stack([-(1 - y), (1 - y), y, -y], axis=0)
    dphiy = np.stack([-(1 - x), -x, x, (1 - x)], axis=0)
    return phi, dphix, dphiy, wq


def _assemble_q1(mesh: Mesh, kind: str, weight=1.0, lumped: bool = False) -> sp.csr_matrix:
    phi, dphix, dphiy, wq = _q1_reference()
    p0 = mesh.coords[mesh.elements[:, 0]]
    p2 = mesh.coords[mesh.elements[:, 2]]
    hx = p2[:, 0] - p0[:, 0]
    hy = p2[:, 1] - p0[:, 1]
    area = hx * hy
    if np.isscalar(weight):
        wgt = np.full((mesh.n_elements, wq.size), float(weight))
    else:
        arr = np.asarray(weight, dtype=float)
        if arr.ndim == 1 and arr.shape[0] == mesh.n_nodes:
            nodal = arr[mesh.elements]  # (ne, 4)
            wgt = np.einsum("ek,kq->eq", nodal, phi)
        elif arr.shape == (mesh.n_elements, wq.size):
            wgt = arr
        else:
            raise AssemblyError(f"coefficient shape {arr.shape} not understood")
    if kind == "stiffness" and np.min(wgt) < 0.0:
        raise AssemblyError("negative weight at a quadrature point")
    rows, cols, data = [], [], []
    for a in range(4):
        for b in range(4):
            if kind == "mass":
                val = area * float(np.sum(phi[a] * phi[b] * wq))
            else:
                gax = dphix[a][None, :] / hx[:, None]
                gay = dphiy[a][None, :] / hy[:, None]
                gbx = dphix[b][None, :] / hx[:, None]
                gby = dphiy[b][None, :] / hy[:, None]
                val = np.sum(wgt * (gax * gbx + gay * gby) * wq[None, :], axis=1) * area
            rows.append(mesh.elements[:, a])
            cols.append(mesh.elements[:, b])
            data.append(val if np.ndim(val) else np.full(mesh.n_elements, val))
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_nodes,) * 2,
    ).tocsr()
    if kind == "mass" and lumped:
        return sp.diags(np.asarray(mat.sum(axis=1)).ravel()).tocsr()
    return mat
