"""Trajectory audits: every structural property of the scheme, re-checked.

All functions here are pure evaluations over stored snapshots; nothing
needs live solver state, so a reloaded trajectory reproduces the verdicts
bit for bit.  The audited properties:

* positivity of the enthalpy, irreversibility and box constraints on the
  damage field (exact, projection-enforced);
* the per-step energy ledger inequality and the remainder cancellation
  R1 + R2 + R3 = gamma term;
* the windowed (partial) energy inequality over every pair of grid times;
* weak residuals of the three equations, the one-sided inequality in
  nonpositive test directions, and the sign/complementarity of the
  damage multiplier, including the explicit max-with-zero formula for it
  on the fully damaged set;
* the weighted gradient estimate driven by the singular test function
  -(T_M(w)+1)^{-alpha}, with its constants computed numerically;
* sub/superlevel measures of w at the truncation height and the table of
  a priori norms tracked across refinement sweeps.

The f(theta)-dependent summand of the free energy is analysis-only (the
model never fixes f) and is omitted; reports carry an explicit flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .constitutive import (
    CoefficientSet,
    ConstitutiveError,
    ConvexConcaveSplit,
    EnthalpyModel,
    growth_ratio_bound,
    theta_ratio_bound,
    truncate,
    validate_exponents,
)
from .discretization import (
    FieldState,
    Mesh,
    assemble_elasticity,
    assemble_mass,
    assemble_weighted_stiffness,
    divergence_matrix,
    field_at_gauss,
    gauss_points,
    gauss_weights,
    grad_on_elements,
    load_vector,
    p_laplacian_energy,
    p_laplacian_residual,
)
from .stepper import Trajectory, evaluate_step_ledger


# ---------------------------------------------------------------------------
# Free energy and dissipation
# ---------------------------------------------------------------------------

def free_energy(mesh: Mesh, state: FieldState, coeffs: CoefficientSet,
                model: Optional[EnthalpyModel] = None, eps_p: float = 0.0) -> dict:
    """Per-term breakdown of the stored free energy at one state.

    Mechanical part: gradient term, damage potential, elastic energy.
    Thermal parts use the untruncated inverse map when a model is given
    and are reported separately; the f(theta) summand is omitted and
    flagged.  The indicator of {chi >= 0} contributes a verdict, not a
    number.
    """
    wq = gauss_weights(mesh)
    chi_g = field_at_gauss(mesh, state.chi)
    strain_sq = coeffs.stiffness * grad_on_elements(mesh, state.u) ** 2
    gradient = p_laplacian_energy(mesh, state.chi, coeffs.p_exponent, eps_p)
    potential = float(np.sum(wq * coeffs.damage_potential_derivative.antiderivative(chi_g)))
    elastic = 0.5 * float(np.sum(wq * coeffs.elastic_coeff(chi_g) * strain_sq[:, None]))
    out = {
        "gradient": gradient,
        "damage_potential": potential,
        "elastic": elastic,
        "mechanical_total": gradient + potential + elastic,
        "indicator_ok": bool(np.min(state.chi) >= -1e-12),
        "f_term_omitted": True,
    }
    if model is not None:
        theta_g = field_at_gauss(mesh, np.asarray(model.theta(state.w)))
        div_u = grad_on_elements(mesh, state.u)[:, None]
        out["thermal_chi"] = -float(np.sum(wq * theta_g * chi_g))
        out["thermal_expansion"] = -float(
            np.sum(wq * coeffs.thermal_expansion(chi_g) * theta_g * div_u))
    return out


def dissipation_integrals(mesh: Mesh, prev: FieldState, new: FieldState,
                          coeffs: CoefficientSet, model: EnthalpyModel,
                          tau: float) -> dict:
    """Computable analogues of the dissipation-potential terms for one step."""
    wq = gauss_weights(mesh)
    chi_g = field_at_gauss(mesh, new.chi)
    rate_sq = grad_on_elements(mesh, (new.u - prev.u) / tau) ** 2
    viscous = float(np.sum(
        wq * coeffs.viscosity_coeff(chi_g) * coeffs.viscosity_ratio
        * coeffs.stiffness * rate_sq[:, None]))
    m = np.asarray(assemble_mass(mesh, lumped=True).diagonal())
    damage_rate = float(m @ (((new.chi - prev.chi) / tau) ** 2))
    k_g = model.k_M(field_at_gauss(mesh, prev.w))
    thermal = float(np.sum(wq * k_g * grad_on_elements(mesh, new.w)[:, None] ** 2))
    return {"viscous": viscous, "damage_rate": damage_rate, "thermal_conduction": thermal}


# ---------------------------------------------------------------------------
# Level sets
# ---------------------------------------------------------------------------

def superlevel_stats(mesh: Mesh, w: np.ndarray, level: float):
    """Quadrature measures of {w <= M} and {w > M} plus M^2 |{w > M}|."""
    wq = gauss_weights(mesh)
    w_g = field_at_gauss(mesh, w)
    above = w_g > level
    meas_above = float(np.sum(wq * above))
    meas_below = float(np.sum(wq * (~above)))
    return meas_below, meas_above, level**2 * meas_above


# ---------------------------------------------------------------------------
# Weak residuals of the scheme, evaluated offline
# ---------------------------------------------------------------------------

def heat_residual_offline(mesh, coeffs, model, prev, new, tau,
                          heat_source=None) -> float:
    m = np.asarray(assemble_mass(mesh, lumped=True).diagonal())
    Q = divergence_matrix(mesh)
    d_chi = (new.chi - prev.chi) / tau
    theta_new = model.theta_M(new.w)
    rhs = m * prev.w / tau - m * model.theta_M(prev.w) * d_chi
    rhs = rhs - coeffs.thermal_expansion(prev.chi) * theta_new * (Q @ ((new.u - prev.u) / tau))
    rhs = rhs - coeffs.thermal_expansion.deriv(prev.chi) * theta_new * (Q @ prev.u) * d_chi
    if heat_source is not None:
        gx = gauss_points(mesh)
        rhs = rhs + load_vector(mesh, np.broadcast_to(heat_source(gx, new.t), gx.shape))
    k_g = model.k_M(field_at_gauss(mesh, prev.w))
    matrix = sp.diags(m / tau) + assemble_weighted_stiffness(mesh, k_g)
    resid = matrix @ new.w - rhs
    return float(np.max(np.abs(resid)) / (1.0 + np.max(np.abs(rhs))))


def momentum_residual_offline(mesh, coeffs, model, prev, new, tau,
                              body_force=None) -> float:
    idx = mesh.interior
    chi_g = field_at_gauss(mesh, new.chi)
    k_b = assemble_elasticity(mesh, coeffs.elastic_coeff(chi_g), coeffs.stiffness)
    k_a = assemble_elasticity(mesh, coeffs.viscosity_coeff(chi_g),
                              coeffs.stiffness * coeffs.viscosity_ratio)
    mass = assemble_mass(mesh, lumped=False)[np.ix_(idx, idx)]
    Q = divergence_matrix(mesh)
    u_prev2 = prev.u - tau * prev.v
    n_vec = coeffs.thermal_expansion(prev.chi) * model.theta_M(new.w)
    lhs = (mass @ (new.u[idx] - 2.0 * prev.u[idx] + u_prev2[idx])) / tau**2
    lhs = lhs + k_b @ new.u[idx] + (k_a @ (new.u[idx] - prev.u[idx])) / tau
    rhs = (Q.T @ n_vec)[idx]
    if body_force is not None:
        gx = gauss_points(mesh)
        rhs = rhs + load_vector(mesh, np.broadcast_to(body_force(gx, new.t), gx.shape))[idx]
    scale = 1.0 + np.max(np.abs(rhs)) + np.max(np.abs(mass @ new.v[idx])) / tau
    return float(np.max(np.abs(lhs - rhs)) / scale)


def damage_residual_offline(mesh, coeffs, split, model, prev, new, tau, eps_p):
    """Nodal residual F(chi_new) of the damage equation (without multiplier)."""
    m = np.asarray(assemble_mass(mesh, lumped=True).diagonal())
    Q = divergence_matrix(mesh)
    chi_g = field_at_gauss(mesh, new.chi)
    chi_prev_g = field_at_gauss(mesh, prev.chi)
    strain_g = coeffs.stiffness * grad_on_elements(mesh, prev.u)[:, None] ** 2
    s_g = 0.5 * (split.b1_prime(chi_g) + split.b2_prime(chi_prev_g)) * strain_g
    r = m * (new.chi - prev.chi) / tau
    r = r + p_laplacian_residual(mesh, new.chi, coeffs.p_exponent, eps_p)
    r = r + load_vector(mesh, coeffs.damage_potential_derivative(chi_g) + s_g)
    r = r - m * model.theta_M(prev.w)
    r = r - coeffs.thermal_expansion.deriv(prev.chi) * model.theta_M(new.w) * (Q @ prev.u)
    return r


@dataclass
class WeakResidualReport:
    heat_max: float
    momentum_max: float
    vi_onesided_max: float      # max_i (F + xi)_i, must be <= tol (equals -xi_upper)
    xi_sign_max: float          # max_i xi_i, must be <= tol (xi <= 0)
    xi_complementarity_max: float  # max_i |xi_i chi_i|
    tolerance: float = 1e-8

    @property
    def passes(self) -> bool:
        return (self.heat_max <= self.tolerance and self.momentum_max <= self.tolerance
                and self.vi_onesided_max <= self.tolerance
                and self.xi_sign_max <= self.tolerance
                and self.xi_complementarity_max <= self.tolerance)


def weak_residuals(trajectory: Trajectory, coeffs, split, model, eps_p,
                   heat_source=None, body_force=None,
                   tolerance: float = 1e-8) -> WeakResidualReport:
    """Re-verify the discrete equations and inequalities over a trajectory."""
    mesh = trajectory.mesh
    m = np.asarray(assemble_mass(mesh, lumped=True).diagonal())
    heat_max = momentum_max = vi_max = sign_max = comp_max = 0.0
    for prev, new in zip(trajectory.states[:-1], trajectory.states[1:]):
        tau = new.t - prev.t
        heat_max = max(heat_max, heat_residual_offline(
            mesh, coeffs, model, prev, new, tau, heat_source))
        momentum_max = max(momentum_max, momentum_residual_offline(
            mesh, coeffs, model, prev, new, tau, body_force))
        F = damage_residual_offline(mesh, coeffs, split, model, prev, new, tau, eps_p)
        xi_assembled = m * new.xi
        scale = 1.0 + np.max(np.abs(F))
        vi_max = max(vi_max, float(np.max(F + xi_assembled) / scale))
        sign_max = max(sign_max, float(np.max(xi_assembled) / scale))
        comp_max = max(comp_max, float(np.max(np.abs(xi_assembled * new.chi)) / scale))
    return WeakResidualReport(heat_max, momentum_max, vi_max, sign_max, comp_max, tolerance)


# ---------------------------------------------------------------------------
# Multiplier formula on the fully damaged set
# ---------------------------------------------------------------------------

@dataclass
class XiConsistencyReport:
    max_discrepancy_interior: float  # against the max-with-zero formula, settled nodes
    max_discrepancy_active: float    # over the whole lower-active set (interface included)
    max_xi_off_active: float
    n_interior_nodes: int
    n_active_nodes: int


def xi_formula_check(mesh, prev: FieldState, new: FieldState, coeffs, split,
                     model, threshold: float = 1e-12) -> XiConsistencyReport:
    """Compare the stored multiplier with its explicit max-with-zero formula.

    The formula holds pointwise inside the fully damaged region, where the
    damage rate and the gradient flux vanish; discrete interface nodes see
    both, so the sharp comparison runs over *settled interior* nodes of
    the active set (node and both neighbours at zero in the previous and
    the current state).  The full-active-set maximum is reported as well.
    """
    m = np.asarray(assemble_mass(mesh, lumped=True).diagonal())
    Q = divergence_matrix(mesh)
    chi_g = field_at_gauss(mesh, new.chi)
    chi_prev_g = field_at_gauss(mesh, prev.chi)
    strain_g = coeffs.stiffness * grad_on_elements(mesh, prev.u)[:, None] ** 2
    s_g = 0.5 * (split.b1_prime(chi_g) + split.b2_prime(chi_prev_g)) * strain_g
    drive = load_vector(mesh, coeffs.damage_potential_derivative(chi_g) + s_g) / m
    drive = drive - model.theta_M(prev.w)
    drive = drive - coeffs.thermal_expansion.deriv(prev.chi) * model.theta_M(new.w) \
        * (Q @ prev.u) / m
    xi_ref = -np.maximum(drive, 0.0)

    active = new.chi <= threshold
    settled = active & (prev.chi <= threshold)
    interior = settled.copy()
    interior[1:] &= settled[:-1]
    interior[:-1] &= settled[1:]
    interior[0] = interior[0] and settled[1] if len(settled) > 1 else interior[0]

    diff = np.abs(new.xi - xi_ref)
    max_int = float(np.max(diff[interior])) if np.any(interior) else 0.0
    max_act = float(np.max(diff[active])) if np.any(active) else 0.0
    off = float(np.max(np.abs(new.xi[~active]))) if np.any(~active) else 0.0
    return XiConsistencyReport(max_int, max_act, off,
                               int(np.count_nonzero(interior)),
                               int(np.count_nonzero(active)))


# ---------------------------------------------------------------------------
# Windowed (partial) energy inequality
# ---------------------------------------------------------------------------

def partial_energy_increments(trajectory, coeffs, split, model, eps_p) -> np.ndarray:
    """Per-step increments whose prefix sums drive the windowed inequality."""
    mesh = trajectory.mesh
    out = []
    for prev, new in zip(trajectory.states[:-1], trajectory.states[1:]):
        tau = new.t - prev.t
        led = evaluate_step_ledger(mesh, coeffs, split, model, tau, prev, new, eps_p=eps_p)
        out.append(led["partial_energy_increment"])
    return np.asarray(out)


def partial_energy_inequality_audit(trajectory, coeffs, split, model, eps_p,
                                    s_index: int, t_index: int) -> float:
    """Signed slack of the windowed energy inequality between two grid times.

    Nonpositive (up to solver slack) on every accepted trajectory; zero
    when the window is empty.
    """
    if not 0 <= s_index <= t_index < len(trajectory.states):
        raise ValueError("window indices out of range")
    if s_index == t_index:
        return 0.0
    mesh = trajectory.mesh
    inc = partial_energy_increments(trajectory, coeffs, split, model, eps_p)
    phi = [p_laplacian_energy(mesh, s.chi, coeffs.p_exponent, eps_p)
           for s in trajectory.states]
    return float(phi[t_index] - phi[s_index] + np.sum(inc[s_index:t_index]))


def windowed_energy_max_slack(trajectory, coeffs, split, model, eps_p):
    """Max slack over all grid pairs s <= t, via prefix sums (O(K^2) pairs)."""
    mesh = trajectory.mesh
    inc = partial_energy_increments(trajectory, coeffs, split, model, eps_p)
    phi = np.array([p_laplacian_energy(mesh, s.chi, coeffs.p_exponent, eps_p)
                    for s in trajectory.states])
    prefix = np.concatenate([[0.0], np.cumsum(inc)])
    g = phi + prefix  # slack(j, k) = g[k] - g[j] for j <= k
    running_min = np.minimum.accumulate(g)
    slack = g - running_min
    return float(np.max(slack)), float(np.max(phi))


# ---------------------------------------------------------------------------
# Singular-test-function estimate
# ---------------------------------------------------------------------------

@dataclass
class SingularTestReport:
    lhs: float
    rhs: float
    rhs_coarse: float
    boundary_terms: float
    coupling_bound: float
    l1_coupling: float
    ratio_sup: float
    ratio_envelope: float
    alpha: float
    passes: bool


def _psi_alpha(x, level, alpha):
    """Primitive of -(T_M(s)+1)^{-alpha} vanishing at 0, for x >= 0."""
    x = np.asarray(x, dtype=float)
    xm = np.minimum(x, level)
    if abs(alpha - 1.0) < 1e-14:
        base = -np.log1p(xm)
    else:
        base = -((xm + 1.0) ** (1.0 - alpha) - 1.0) / (1.0 - alpha)
    tail = np.where(x > level, -((level + 1.0) ** (-alpha)) * (x - level), 0.0)
    return base + tail


def singular_test_estimate(trajectory, coeffs, model, alpha: float) -> SingularTestReport:
    """Audit of the weighted gradient estimate behind the second a priori bound.

    Tests each discrete heat equation with -(T_M(w)+1)^{-alpha} and checks
    that the accumulated conduction pairing stays below the exact triangle
    bound of the coupling terms plus the primitive boundary terms.  The
    pointwise boundedness of Theta_M(w)/(T_M(w)+1)^alpha is verified
    against the growth envelope, and the coarser sup-constant bound is
    reported alongside.
    """
    if not (1.0 / coeffs.sigma <= alpha + 1e-12 and alpha <= 2.0 * coeffs.q - 1.0 + 1e-12):
        raise ConstitutiveError(
            f"alpha = {alpha} outside the admissible band [1/sigma, 2q-1]")
    mesh = trajectory.mesh
    m = np.asarray(assemble_mass(mesh, lumped=True).diagonal())
    Q = divergence_matrix(mesh)
    level = model.truncation_level
    rho = coeffs.thermal_expansion
    lhs = 0.0
    bound3 = 0.0
    l1 = 0.0
    ratio_sup = 0.0
    for prev, new in zip(trajectory.states[:-1], trajectory.states[1:]):
        tau = new.t - prev.t
        zeta = -((truncate(new.w, level) + 1.0) ** (-alpha))
        k_g = model.k_M(field_at_gauss(mesh, prev.w))
        stiff = assemble_weighted_stiffness(mesh, k_g)
        lhs += tau * float(zeta @ (stiff @ new.w))
        d_chi = (new.chi - prev.chi) / tau
        qv = Q @ ((new.u - prev.u) / tau)
        theta_prev = model.theta_M(prev.w)
        theta_new = model.theta_M(new.w)
        weight = (truncate(new.w, level) + 1.0) ** (-alpha)
        bound3 += tau * float(np.sum(weight * (
            theta_prev * m * np.abs(d_chi)
            + theta_new * np.abs(rho(prev.chi) * qv)
            + theta_new * np.abs(rho.deriv(prev.chi) * (Q @ prev.u) * d_chi))))
        l1 += tau * float(np.sum(
            m * np.abs(d_chi + rho(prev.chi) * qv / m
                       + rho.deriv(prev.chi) * (Q @ prev.u) / m * d_chi)))
        ratio_sup = max(ratio_sup, float(np.max(
            np.where(theta_new > 0.0, theta_new * weight, 0.0))))
    w0 = trajectory.states[0].w
    wK = trajectory.states[-1].w
    boundary = float(m @ (_psi_alpha(np.maximum(w0, 0.0), level, alpha)
                          - _psi_alpha(np.maximum(wK, 0.0), level, alpha)))
    rhs = boundary + bound3
    envelope = growth_ratio_bound(coeffs.growth.c0, coeffs.sigma, alpha)
    c_ratio = theta_ratio_bound(model, alpha)
    rhs_coarse = boundary + c_ratio * l1
    passes = (lhs <= rhs * (1.0 + 1e-6) + 1e-10) and (ratio_sup <= envelope * (1.0 + 1e-6))
    return SingularTestReport(lhs, rhs, rhs_coarse, boundary, bound3, l1,
                              ratio_sup, envelope, alpha, passes)


# ---------------------------------------------------------------------------
# A priori norm table
# ---------------------------------------------------------------------------

def _space_lp(mesh, nodal, p):
    wq = gauss_weights(mesh)
    vals = np.abs(field_at_gauss(mesh, nodal)) ** p
    return float(np.sum(wq * vals)) ** (1.0 / p)


def _space_h1(mesh, nodal):
    wq = gauss_weights(mesh)
    sq = float(np.sum(wq * field_at_gauss(mesh, nodal) ** 2))
    gsq = float(np.sum(wq * grad_on_elements(mesh, nodal)[:, None] ** 2))
    return math.sqrt(sq + gsq)


def a_priori_norm_table(trajectory: Trajectory, coeffs: CoefficientSet,
                        model: EnthalpyModel) -> dict:
    """Computable entries of the uniform-bound table, per trajectory.

    Time integrals use the right-continuous piecewise-constant interpolant
    consistent with the scheme (value at the end of each step).
    """
    mesh = trajectory.mesh
    rep = validate_exponents(coeffs.sigma, coeffs.q, coeffs.q0)
    q, q0 = coeffs.q, coeffs.q0
    r = rep.r if rep.admissible else 1.5
    p_exp = coeffs.p_exponent
    taus = np.diff(trajectory.times)
    states = trajectory.states

    def time_lp(vals_per_state, p):
        v = np.asarray(vals_per_state[1:])
        return float(np.sum(taus * v**p)) ** (1.0 / p)

    w_l1 = [_space_lp(mesh, s.w, 1.0) for s in states]
    w_l2 = [_space_lp(mesh, s.w, 2.0) for s in states]
    w_h1 = [_space_h1(mesh, s.w) for s in states]
    tm_w = [truncate(s.w, model.truncation_level) for s in states]
    tm_h1 = [_space_h1(mesh, t) for t in tm_w]
    tm_l2 = [_space_lp(mesh, t, 2.0) for t in tm_w]
    tm_l6q = [_space_lp(mesh, t, 6.0 * (q + 1.0)) for t in tm_w]
    chi_w1p = [
        (_space_lp(mesh, s.chi, p_exp) ** p_exp
         + float(np.sum(gauss_weights(mesh)
                        * np.abs(grad_on_elements(mesh, s.chi))[:, None] ** p_exp))) ** (1.0 / p_exp)
        for s in states]
    u_h1 = [_space_h1(mesh, s.u) for s in states]
    v_l2 = [_space_lp(mesh, s.v, 2.0) for s in states]
    v_h1 = [_space_h1(mesh, s.v) for s in states]
    dchi_l2 = [
        _space_lp(mesh, (b.chi - a.chi) / (b.t - a.t), 2.0)
        for a, b in zip(states[:-1], states[1:])]
    lam = (6.0 * q + 6.0) / (2.0 * q0 + 1.0)
    khat = [_space_lp(mesh, np.asarray(model.k_hat_M(np.maximum(s.w, 0.0))), lam)
            for s in states]
    theta_m = [_space_lp(mesh, np.asarray(model.theta_M(s.w)), lam) for s in states]
    exp_theta = 2.0 * r / (2.0 - r)
    return {
        "w_LinfL1": float(np.max(w_l1)),
        "w_LinfL2": float(np.max(w_l2)),
        "w_L2H1": time_lp(w_h1, 2.0),
        "TMw_L2H1": time_lp(tm_h1, 2.0),
        "TMw_LinfL2": float(np.max(tm_l2)),
        "TMw_L2q2L6q6": time_lp(tm_l6q, 2.0 * (q + 1.0)),
        "chi_LinfW1p": float(np.max(chi_w1p)),
        "dchi_L2L2": float(math.sqrt(np.sum(taus * np.asarray(dchi_l2) ** 2))),
        "u_LinfH1": float(np.max(u_h1)),
        "v_LinfL2": float(np.max(v_l2)),
        "v_L2H1": time_lp(v_h1, 2.0),
        "KhatM_LrLs": time_lp(khat, r),
        "ThetaM_L2r2mrLs": time_lp(theta_m, exp_theta),
    }


# ---------------------------------------------------------------------------
# Whole-trajectory audit
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    """Invariant verdicts plus the numbers behind them."""

    verdicts: dict
    metrics: dict
    norm_table: dict
    notes: tuple = ()

    @property
    def passes(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
            "metrics": {k: float(v) for k, v in self.metrics.items()},
            "norm_table": {k: float(v) for k, v in self.norm_table.items()},
            "notes": list(self.notes),
            "passes": self.passes,
        }


def audit_trajectory(trajectory: Trajectory, coeffs: CoefficientSet,
                     split: ConvexConcaveSplit, model: EnthalpyModel,
                     eps_p: float = 1e-10,
                     heat_source=None, body_force=None,
                     positivity_tol: float = 1e-12,
                     energy_tol: float = 1e-8,
                     window_tol: float = 1e-6,
                     cancel_tol: float = 1e-8,
                     weak_tol: float = 1e-8,
                     alpha: Optional[float] = None) -> DiagnosticsReport:
    """Recompute every invariant of a trajectory from its snapshots alone."""
    mesh = trajectory.mesh
    states = trajectory.states
    w_min = min(float(np.min(s.w)) for s in states)
    irr_viol = max(
        (float(np.max(b.chi - a.chi)) for a, b in zip(states[:-1], states[1:])),
        default=0.0)
    box_low = min(float(np.min(s.chi)) for s in states)
    box_high = max(float(np.max(s.chi)) for s in states)

    cancel_rel = 0.0
    slack_rel = 0.0
    bgap_min = 0.0
    for prev, new in zip(states[:-1], states[1:]):
        tau = new.t - prev.t
        led = evaluate_step_ledger(mesh, coeffs, split, model, tau, prev, new,
                                   eps_p=eps_p, heat_source=heat_source,
                                   body_force=body_force)
        r_scale = max(abs(led["R1"]) + abs(led["R2"]) + abs(led["R3"])
                      + abs(led["gamma_term"]), 1e-300)
        cancel_rel = max(cancel_rel, abs(led["cancel_resid"]) / r_scale)
        slack_rel = max(slack_rel, led["energy_slack"] / led["energy_scale"])
        bgap_min = min(bgap_min, led["bconv_gap_min"])

    window_slack, phi_max = windowed_energy_max_slack(
        trajectory, coeffs, split, model, eps_p)
    window_scale = max(1.0, phi_max)

    weak = weak_residuals(trajectory, coeffs, split, model, eps_p,
                          heat_source=heat_source, body_force=body_force,
                          tolerance=weak_tol)
    xi_rep = xi_formula_check(mesh, states[-2], states[-1], coeffs, split, model) \
        if len(states) >= 2 else None

    verdicts = {
        "positivity": w_min >= -positivity_tol,
        "irreversibility": irr_viol <= 0.0,
        "box_constraint": box_low >= 0.0 and box_high <= 1.0,
        "per_step_energy_inequality": slack_rel <= energy_tol,
        "remainder_cancellation": cancel_rel <= cancel_tol,
        "convex_concave_termwise": bgap_min >= -1e-12,
        "windowed_energy_inequality": window_slack <= window_tol * window_scale,
        "weak_residuals": weak.passes,
    }
    metrics = {
        "w_min": w_min,
        "irreversibility_violation": irr_viol,
        "chi_min": box_low,
        "chi_max": box_high,
        "cancel_residual_rel_max": cancel_rel,
        "energy_slack_rel_max": slack_rel,
        "bconv_gap_min": bgap_min,
        "windowed_slack_max": window_slack,
        "windowed_scale": window_scale,
        "heat_residual_max": weak.heat_max,
        "momentum_residual_max": weak.momentum_max,
        "vi_onesided_max": weak.vi_onesided_max,
        "xi_sign_max": weak.xi_sign_max,
        "xi_complementarity_max": weak.xi_complementarity_max,
    }
    notes = ["free-energy f(theta) summand omitted (analysis-only)"]
    if xi_rep is not None:
        metrics["xi_formula_interior_max"] = xi_rep.max_discrepancy_interior
        metrics["xi_off_active_max"] = xi_rep.max_xi_off_active
        metrics["xi_interior_nodes"] = float(xi_rep.n_interior_nodes)
    if alpha is not None:
        st = singular_test_estimate(trajectory, coeffs, model, alpha)
        verdicts["singular_test_estimate"] = st.passes
        metrics["singular_lhs"] = st.lhs
        metrics["singular_rhs"] = st.rhs
        metrics["singular_ratio_sup"] = st.ratio_sup
    mb, ma, m2 = superlevel_stats(mesh, states[-1].w, model.truncation_level) \
        if math.isfinite(model.truncation_level) else (1.0, 0.0, 0.0)
    metrics["sublevel_measure_final"] = mb
    metrics["superlevel_measure_final"] = ma
    metrics["superlevel_bound_final"] = m2

    table = a_priori_norm_table(trajectory, coeffs, model)
    return DiagnosticsReport(verdicts=verdicts, metrics=metrics,
                             norm_table=table, notes=tuple(notes))
