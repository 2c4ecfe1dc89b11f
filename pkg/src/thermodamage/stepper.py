"""Semi-implicit time stepping for the coupled enthalpy/momentum/damage system.

One step advances the nodal fields (u, v, w, chi) by a Gauss-Seidel fixed
point over three substeps, with the exact explicit/implicit coefficient
placement of the energy-stable scheme:

* damage: implicit difference quotient and p-Laplacian, implicit convex
  part b1' and explicit concave part b2' of the elastic modulus, strain
  energy at the previous displacement, explicit Theta_M(w_prev), and the
  thermal-expansion coupling with Theta_M at the current enthalpy iterate;
  solved as a bilateral obstacle problem over 0 <= chi <= chi_prev;
* momentum: implicit elasticity/viscosity with coefficients at the current
  damage iterate, inertia through the second difference quotient, thermal
  forcing with rho(chi_prev) Theta_M(w);
* heat: implicit diffusion with explicit conductivity K_M(w_prev), lumped
  mass, and nodally lumped coupling terms whose Theta_M(w) factor is
  resolved implicitly by a cheap diagonal Picard refresh.

The coupling terms are integrated so that each pairing appears with the
*identical* quadrature in the two equations it couples; the three
remainder terms R1, R2, R3 of the summed energy identity then cancel
against the gamma term to rounding, and the per-step energy ledger is an
exact inequality up to solver tolerances.  With the lumped heat couplings
the converged enthalpy iterate is nonnegative whenever the previous one
was (discrete maximum principle).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp

from .constitutive import CoefficientSet, ConvexConcaveSplit, EnthalpyModel, split_convex_concave
from .discretization import (
    FieldState,
    Mesh,
    assemble_elasticity,
    assemble_mass,
    assemble_weighted_mass,
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
from .solver_core import ObstacleProblem, ObstacleResult, SolverError, SpdOperator, solve_obstacle, solve_spd


class StepRejected(Exception):
    """A substep failed; the driver reacts by halving the time step."""


class RunAborted(RuntimeError):
    """Time step underflow; carries the trajectory computed so far."""

    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class StepControls:
    """Knobs of one time step and of the fixed-point coupling loop."""

    tau: float
    fixed_point_tol: float = 1e-10
    max_outer: int = 50
    relaxation: float = 1.0
    min_tau: float = 1e-8
    truncation_M: Optional[float] = None  # overrides the model level when set
    eps_p: float = 1e-10
    obstacle_tol: float = 1e-11
    obstacle_max_iter: int = 100
    heat_refresh_tol: float = 1e-13
    heat_refresh_max: int = 80
    spd_tol: float = 1e-10

    def __post_init__(self):
        if not (self.tau > 0.0 and self.min_tau > 0.0 and self.fixed_point_tol > 0.0):
            raise ValueError("tau, min_tau and fixed_point_tol must be positive")
        if not (0.0 < self.relaxation <= 1.0):
            raise ValueError("relaxation must lie in (0, 1]")


@dataclass
class StepReport:
    """Per-step telemetry: solver effort, residuals, and the energy ledger."""

    tau: float
    outer_iters: int
    converged: bool
    tau_halved: bool = False
    residual_heat: float = 0.0
    residual_momentum: float = 0.0
    kkt_residual: float = 0.0
    obstacle_iterations: int = 0
    heat_refresh_iters: int = 0
    R1: float = 0.0
    R2: float = 0.0
    R3: float = 0.0
    gamma_term: float = 0.0
    cancel_resid: float = 0.0
    ledger: dict = field(default_factory=dict)
    ledger_sum: float = 0.0
    source_work: float = 0.0
    energy_slack: float = 0.0
    energy_scale: float = 1.0
    partial_energy_increment: float = 0.0
    bconv_gap_min: float = 0.0
    active_lower_fraction: float = 0.0
    active_upper_fraction: float = 0.0
    w_min: float = 0.0
    chi_min: float = 0.0
    chi_max: float = 0.0


@dataclass
class Trajectory:
    """Immutable snapshots of an entire run plus per-step reports."""

    mesh: Mesh
    states: List[FieldState]
    reports: List[StepReport]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> FieldState:
        return self.states[-1]


# ---------------------------------------------------------------------------
# The stepper
# ---------------------------------------------------------------------------

class SemiImplicitStepper:
    """Carries the mesh-level operators and advances one state at a time."""

    def __init__(self, mesh: Mesh, coeffs: CoefficientSet, model: EnthalpyModel,
                 controls: StepControls, split: Optional[ConvexConcaveSplit] = None,
                 heat_source: Optional[Callable] = None,
                 body_force: Optional[Callable] = None):
        if mesh.dimension != 1:
            raise NotImplementedError("the coupled stepper runs on 1-D meshes in this build")
        self.mesh = mesh
        self.coeffs = coeffs
        self.model = (model.with_truncation(controls.truncation_M)
                      if controls.truncation_M is not None else model)
        self.controls = controls
        self.split = split if split is not None else split_convex_concave(coeffs.elastic_coeff)
        self.heat_source = heat_source
        self.body_force = body_force

        self.mass_lumped = np.asarray(
            assemble_mass(mesh, lumped=True).diagonal(), dtype=float)
        self.mass_consistent = assemble_mass(mesh, lumped=False)
        self.Q = divergence_matrix(mesh)
        self.interior = mesh.interior
        self._gauss_x = gauss_points(mesh)

    # -- per-step cached data --------------------------------------------

    def _step_cache(self, prev: FieldState, tau: float):
        c = self.coeffs
        cache = {
            "tau": tau,
            "chi_prev_g": field_at_gauss(self.mesh, prev.chi),
            "theta_prev": self.model.theta_M(prev.w),
            "rho_prev": c.thermal_expansion(prev.chi),
            "rho_prime_prev": c.thermal_expansion.deriv(prev.chi),
            "Qu_prev": self.Q @ prev.u,
            "strain_sq_g": c.stiffness * grad_on_elements(self.mesh, prev.u)[:, None] ** 2
            * np.ones((1, self._gauss_x.shape[1])),
        }
        k_gauss = self.model.k_M(field_at_gauss(self.mesh, prev.w))
        diffusion = assemble_weighted_stiffness(self.mesh, k_gauss)
        heat_matrix = sp.diags(self.mass_lumped / tau) + diffusion
        cache["heat_op"] = SpdOperator(heat_matrix, tol=self.controls.spd_tol)
        cache["heat_matrix"] = heat_matrix.tocsr()
        return cache

    # -- substeps ----------------------------------------------------------

    def heat_substep(self, prev: FieldState, u_it: np.ndarray, chi_it: np.ndarray,
                     w_guess: np.ndarray, cache: dict, t_new: float):
        """Advance the enthalpy: one factorized solve plus a diagonal refresh.

        The conductivity and the Theta_M(w_prev) source are explicit; the
        two thermal-expansion couplings carry Theta_M at the new enthalpy,
        resolved by Picard iteration on the factorized system (the matrix
        does not change, only the diagonal source).
        """
        tau = cache["tau"]
        m = self.mass_lumped
        d_chi = (chi_it - prev.chi) / tau
        qdu = self.Q @ ((u_it - prev.u) / tau)
        base = m * prev.w / tau - m * cache["theta_prev"] * d_chi
        if self.heat_source is not None:
            gq = self.heat_source(self._gauss_x, t_new)
            base = base + load_vector(self.mesh, np.broadcast_to(gq, self._gauss_x.shape))
        coef = cache["rho_prev"] * qdu + cache["rho_prime_prev"] * cache["Qu_prev"] * d_chi
        w = np.asarray(w_guess, dtype=float)
        refresh_iters = 0
        for refresh_iters in range(1, self.controls.heat_refresh_max + 1):
            rhs = base - coef * self.model.theta_M(w)
            w_new = cache["heat_op"].solve(rhs)
            if np.max(np.abs(w_new - w)) <= self.controls.heat_refresh_tol * (
                    1.0 + np.max(np.abs(w_new))):
                w = w_new
                break
            w = w_new
        else:
            raise StepRejected("heat substep: implicit Theta refresh did not converge")
        return w, refresh_iters

    def momentum_substep(self, prev: FieldState, u_prev2: np.ndarray,
                         chi_it: np.ndarray, w_it: np.ndarray, cache: dict, t_new: float):
        """Advance displacement/velocity with coefficients at the damage iterate."""
        c = self.coeffs
        tau = cache["tau"]
        idx = self.interior
        chi_g = field_at_gauss(self.mesh, chi_it)
        k_b = assemble_elasticity(self.mesh, c.elastic_coeff(chi_g), c.stiffness)
        k_a = assemble_elasticity(
            self.mesh, c.viscosity_coeff(chi_g), c.stiffness * c.viscosity_ratio)
        m_int = self.mass_consistent[np.ix_(idx, idx)]
        system = m_int / tau**2 + k_b + k_a / tau
        n_vec = cache["rho_prev"] * self.model.theta_M(w_it)
        rhs = (m_int @ (2.0 * prev.u[idx] - u_prev2[idx])) / tau**2
        rhs = rhs + (k_a @ prev.u[idx]) / tau
        rhs = rhs + (self.Q.T @ n_vec)[idx]
        if self.body_force is not None:
            lq = self.body_force(self._gauss_x, t_new)
            rhs = rhs + load_vector(self.mesh, np.broadcast_to(lq, self._gauss_x.shape))[idx]
        try:
            u_int = solve_spd(system, rhs, tol=self.controls.spd_tol)
        except SolverError as exc:
            raise StepRejected(f"momentum solve failed: {exc}") from exc
        u = np.zeros(self.mesh.n_nodes)
        u[idx] = u_int
        v = (u - prev.u) / tau
        return u, v

    def damage_substep(self, prev: FieldState, w_it: np.ndarray, chi_guess: np.ndarray,
                       cache: dict) -> ObstacleResult:
        """Solve the damage obstacle problem over the band [0, chi_prev]."""
        c = self.coeffs
        tau = cache["tau"]
        m = self.mass_lumped
        p = c.p_exponent
        eps_p = self.controls.eps_p
        theta_new = self.model.theta_M(w_it)
        force_const = (
            -m * cache["theta_prev"]
            - cache["rho_prime_prev"] * theta_new * cache["Qu_prev"]
        )
        b2p_prev_g = self.split.b2_prime(cache["chi_prev_g"])
        strain_g = cache["strain_sq_g"]

        def residual(chi):
            chi_g = field_at_gauss(self.mesh, chi)
            s_g = 0.5 * (self.split.b1_prime(chi_g) + b2p_prev_g) * strain_g
            r = m * (chi - prev.chi) / tau
            r = r + p_laplacian_residual(self.mesh, chi, p, eps_p)
            r = r + load_vector(self.mesh, c.damage_potential_derivative(chi_g) + s_g)
            return r + force_const

        def jacobian(chi):
            chi_g = field_at_gauss(self.mesh, chi)
            _, j_p = p_laplacian_residual(self.mesh, chi, p, eps_p, jacobian=True)
            curv = c.damage_potential_derivative.deriv(chi_g)
            curv = curv + 0.5 * np.maximum(c.elastic_coeff.deriv2(chi_g), 0.0) * strain_g
            return sp.diags(m / tau) + j_p + assemble_weighted_mass(self.mesh, curv)

        problem = ObstacleProblem(
            residual=residual,
            jacobian=jacobian,
            lower=np.zeros(self.mesh.n_nodes),
            upper=prev.chi.copy(),
            tol=self.controls.obstacle_tol,
            max_iter=self.controls.obstacle_max_iter,
        )
        try:
            return solve_obstacle(problem, chi_guess)
        except SolverError as exc:
            raise StepRejected(f"damage solve failed: {exc}") from exc

    # -- one full step -----------------------------------------------------

    def do_step(self, prev: FieldState, prev2: Optional[FieldState] = None,
                tau: Optional[float] = None):
        """Gauss-Seidel sweep damage -> momentum -> heat until the combined
        relative update drops below the fixed-point tolerance.

        Returns ``(state, report)``; raises :class:`StepRejected` when a
        substep fails or the coupling iteration does not converge.
        """
        tau = self.controls.tau if tau is None else tau
        u_prev2 = prev2.u if prev2 is not None else prev.u - tau * prev.v
        cache = self._step_cache(prev, tau)
        t_new = prev.t + tau
        relax = self.controls.relaxation

        u_it, w_it, chi_it = prev.u.copy(), prev.w.copy(), prev.chi.copy()
        obstacle: Optional[ObstacleResult] = None
        refresh_total = 0
        outer = 0
        converged = False
        for outer in range(1, self.controls.max_outer + 1):
            u_old, w_old, chi_old = u_it, w_it, chi_it

            obstacle = self.damage_substep(prev, w_it, chi_it, cache)
            chi_it = chi_old + relax * (obstacle.x - chi_old) if relax != 1.0 else obstacle.x

            u_new, v_new = self.momentum_substep(prev, u_prev2, chi_it, w_it, cache, t_new)
            u_it = u_old + relax * (u_new - u_old) if relax != 1.0 else u_new

            w_new, refresh = self.heat_substep(prev, u_it, chi_it, w_it, cache, t_new)
            refresh_total += refresh
            w_it = w_old + relax * (w_new - w_old) if relax != 1.0 else w_new

            delta = max(
                np.max(np.abs(u_it - u_old)) / (1.0 + np.max(np.abs(u_it))),
                np.max(np.abs(w_it - w_old)) / (1.0 + np.max(np.abs(w_it))),
                np.max(np.abs(chi_it - chi_old)) / (1.0 + np.max(np.abs(chi_it))),
            )
            if delta < self.controls.fixed_point_tol and outer >= 2:
                converged = True
                break
        if not converged:
            raise StepRejected(
                f"coupling fixed point stalled after {outer} sweeps")

        v_it = (u_it - prev.u) / tau
        xi_density = obstacle.xi_lower / self.mass_lumped
        state = FieldState(t=t_new, u=u_it, v=v_it, w=w_it, chi=chi_it, xi=xi_density)

        report = self._build_report(prev, state, u_prev2, tau, outer, obstacle,
                                    refresh_total, t_new)
        return state, report

    # -- reporting ---------------------------------------------------------

    def _build_report(self, prev, state, u_prev2, tau, outer, obstacle,
                      refresh_total, t_new) -> StepReport:
        ledger = evaluate_step_ledger(
            self.mesh, self.coeffs, self.split, self.model, tau, prev, state,
            eps_p=self.controls.eps_p, heat_source=self.heat_source,
            body_force=self.body_force, mass_lumped=self.mass_lumped,
            mass_consistent=self.mass_consistent, Q=self.Q)
        res_heat = self._heat_residual(prev, state, tau, t_new)
        res_mom = self._momentum_residual(prev, state, u_prev2, tau, t_new)
        n = self.mesh.n_nodes
        return StepReport(
            tau=tau,
            outer_iters=outer,
            converged=True,
            residual_heat=res_heat,
            residual_momentum=res_mom,
            kkt_residual=obstacle.kkt_residual,
            obstacle_iterations=obstacle.iterations,
            heat_refresh_iters=refresh_total,
            R1=ledger["R1"], R2=ledger["R2"], R3=ledger["R3"],
            gamma_term=ledger["gamma_term"],
            cancel_resid=ledger["cancel_resid"],
            ledger=ledger["terms"],
            ledger_sum=ledger["ledger_sum"],
            source_work=ledger["source_work"],
            energy_slack=ledger["energy_slack"],
            energy_scale=ledger["energy_scale"],
            partial_energy_increment=ledger["partial_energy_increment"],
            bconv_gap_min=ledger["bconv_gap_min"],
            active_lower_fraction=float(np.count_nonzero(obstacle.active_lower)) / n,
            active_upper_fraction=float(np.count_nonzero(obstacle.active_upper)) / n,
            w_min=float(np.min(state.w)),
            chi_min=float(np.min(state.chi)),
            chi_max=float(np.max(state.chi)),
        )

    def _heat_residual(self, prev, state, tau, t_new) -> float:
        m = self.mass_lumped
        d_chi = (state.chi - prev.chi) / tau
        theta_new = self.model.theta_M(state.w)
        rhs = m * prev.w / tau - m * self.model.theta_M(prev.w) * d_chi
        cache_rho = self.coeffs.thermal_expansion(prev.chi)
        cache_rhop = self.coeffs.thermal_expansion.deriv(prev.chi)
        rhs = rhs - cache_rho * theta_new * (self.Q @ state.v)
        rhs = rhs - cache_rhop * theta_new * (self.Q @ prev.u) * d_chi
        if self.heat_source is not None:
            gq = self.heat_source(self._gauss_x, t_new)
            rhs = rhs + load_vector(self.mesh, np.broadcast_to(gq, self._gauss_x.shape))
        k_gauss = self.model.k_M(field_at_gauss(self.mesh, prev.w))
        heat_matrix = sp.diags(m / tau) + assemble_weighted_stiffness(self.mesh, k_gauss)
        resid = heat_matrix @ state.w - rhs
        return float(np.max(np.abs(resid)) / (1.0 + np.max(np.abs(rhs))))

    def _momentum_residual(self, prev, state, u_prev2, tau, t_new) -> float:
        c = self.coeffs
        idx = self.interior
        chi_g = field_at_gauss(self.mesh, state.chi)
        k_b = assemble_elasticity(self.mesh, c.elastic_coeff(chi_g), c.stiffness)
        k_a = assemble_elasticity(self.mesh, c.viscosity_coeff(chi_g),
                                  c.stiffness * c.viscosity_ratio)
        m_int = self.mass_consistent[np.ix_(idx, idx)]
        n_vec = self.coeffs.thermal_expansion(prev.chi) * self.model.theta_M(state.w)
        lhs = (m_int @ (state.u[idx] - 2.0 * prev.u[idx] + u_prev2[idx])) / tau**2
        lhs = lhs + k_b @ state.u[idx] + (k_a @ (state.u[idx] - prev.u[idx])) / tau
        rhs = (self.Q.T @ n_vec)[idx]
        if self.body_force is not None:
            lq = self.body_force(self._gauss_x, t_new)
            rhs = rhs + load_vector(self.mesh, np.broadcast_to(lq, self._gauss_x.shape))[idx]
        scale = 1.0 + np.max(np.abs(rhs)) + np.max(np.abs(m_int @ state.v[idx])) / tau
        return float(np.max(np.abs(lhs - rhs)) / scale)


# ---------------------------------------------------------------------------
# Energy ledger (pure evaluation on a pair of states)
# ---------------------------------------------------------------------------

def evaluate_step_ledger(mesh, coeffs, split, model, tau, prev, new,
                         eps_p=0.0, heat_source=None, body_force=None,
                         mass_lumped=None, mass_consistent=None, Q=None) -> dict:
    """Evaluate every term of the summed per-step energy identity.

    All quantities come from the two states alone, with each coupling pair
    integrated by the quadrature of the equation it belongs to, so the
    remainder identity R1 + R2 + R3 = gamma term holds to rounding and the
    ledger inequality carries only solver-tolerance slack.
    """
    if mass_lumped is None:
        mass_lumped = np.asarray(assemble_mass(mesh, lumped=True).diagonal())
    if mass_consistent is None:
        mass_consistent = assemble_mass(mesh, lumped=False)
    if Q is None:
        Q = divergence_matrix(mesh)
    c = coeffs
    m = mass_lumped
    d_chi_vec = new.chi - prev.chi
    d_u_vec = new.u - prev.u
    chi_new_g = field_at_gauss(mesh, new.chi)
    chi_prev_g = field_at_gauss(mesh, prev.chi)
    strain_prev_sq = c.stiffness * grad_on_elements(mesh, prev.u) ** 2
    strain_prev_g = strain_prev_sq[:, None] * np.ones((1, 3))
    theta_prev = model.theta_M(prev.w)
    theta_new = model.theta_M(new.w)
    rho_prev = c.thermal_expansion(prev.chi)
    rho_prime_prev = c.thermal_expansion.deriv(prev.chi)
    n_vec = rho_prev * theta_new
    qu_prev = Q @ prev.u

    # damage-equation paths
    s_g = 0.5 * (split.b1_prime(chi_new_g) + split.b2_prime(chi_prev_g)) * strain_prev_g
    vec_strain = load_vector(mesh, s_g)
    vec_gamma = load_vector(mesh, c.damage_potential_derivative(chi_new_g))
    t_s = float(vec_strain @ d_chi_vec)
    gamma_term = float(vec_gamma @ d_chi_vec)
    t_a_damage = float((m * theta_prev) @ d_chi_vec)
    t_c_damage = float((rho_prime_prev * theta_new * qu_prev) @ d_chi_vec)

    # heat-equation paths (same quadrature, independent float path)
    d_chi_rate = d_chi_vec / tau
    t_a_heat = tau * float((m * theta_prev) @ d_chi_rate)
    t_b_heat = tau * float(n_vec @ (Q @ (d_u_vec / tau)))
    t_c_heat = tau * float((rho_prime_prev * theta_new * qu_prev) @ d_chi_rate)

    # momentum-equation path for the thermal forcing
    t_b_momentum = float((Q.T @ n_vec) @ d_u_vec)

    r1 = -t_s - t_b_momentum
    r2 = gamma_term + t_s - t_a_damage - t_c_damage
    r3 = t_a_heat + t_b_heat + t_c_heat
    cancel = r1 + r2 + r3 - gamma_term

    # ledger terms
    kin_new = 0.5 * float(new.v @ (mass_consistent @ new.v))
    kin_old = 0.5 * float(prev.v @ (mass_consistent @ prev.v))
    wq = gauss_weights(mesh)
    b_new_g = c.elastic_coeff(chi_new_g)
    b_prev_g = c.elastic_coeff(chi_prev_g)
    elastic_new = 0.5 * float(np.sum(wq * b_new_g * c.stiffness
                                     * grad_on_elements(mesh, new.u)[:, None] ** 2))
    elastic_old = 0.5 * float(np.sum(wq * b_prev_g * strain_prev_g))
    a_new_g = c.viscosity_coeff(chi_new_g)
    viscous = tau * float(np.sum(
        wq * a_new_g * c.viscosity_ratio * c.stiffness
        * grad_on_elements(mesh, d_u_vec / tau)[:, None] ** 2))
    damage_rate = tau * float(m @ (d_chi_rate**2))
    grad_new = p_laplacian_energy(mesh, new.chi, c.p_exponent, eps_p)
    grad_old = p_laplacian_energy(mesh, prev.chi, c.p_exponent, eps_p)
    enthalpy_diff = float(m @ (new.w - prev.w))

    terms = {
        "kinetic_new": kin_new, "kinetic_old": kin_old,
        "elastic_new": elastic_new, "elastic_old": elastic_old,
        "viscous_dissipation": viscous, "damage_rate_dissipation": damage_rate,
        "gradient_new": grad_new, "gradient_old": grad_old,
        "enthalpy_difference": enthalpy_diff,
    }
    ledger_sum = (kin_new - kin_old + elastic_new - elastic_old + viscous
                  + damage_rate + grad_new - grad_old + enthalpy_diff)

    source_work = 0.0
    gx = gauss_points(mesh)
    if heat_source is not None:
        gq = np.broadcast_to(heat_source(gx, new.t), gx.shape)
        source_work += tau * float(np.sum(wq * gq))
    if body_force is not None:
        lq = np.broadcast_to(body_force(gx, new.t), gx.shape)
        source_work += float(load_vector(mesh, lq) @ d_u_vec)

    energy_scale = max(1.0, sum(abs(v) for v in terms.values()) + abs(gamma_term))
    energy_slack = ledger_sum + gamma_term - source_work

    # termwise convex-concave gap (should be nonnegative at every gauss point)
    gap = (b_prev_g - b_new_g
           - (split.b1_prime(chi_new_g) + split.b2_prime(chi_prev_g))
           * (chi_prev_g - chi_new_g))
    bconv_gap_min = float(np.min(gap))

    partial_energy_increment = (gamma_term + t_s - t_a_damage - t_c_damage
                                + tau * float(m @ (d_chi_rate**2)))

    return {
        "R1": r1, "R2": r2, "R3": r3, "gamma_term": gamma_term,
        "cancel_resid": cancel, "terms": terms, "ledger_sum": ledger_sum,
        "source_work": source_work, "energy_slack": energy_slack,
        "energy_scale": energy_scale,
        "partial_energy_increment": partial_energy_increment,
        "bconv_gap_min": bconv_gap_min,
    }


# ---------------------------------------------------------------------------
# Trajectory driver
# ---------------------------------------------------------------------------

def run(mesh: Mesh, coeffs: CoefficientSet, model: EnthalpyModel,
        initial: FieldState, controls: StepControls, t_end: float,
        split: Optional[ConvexConcaveSplit] = None,
        heat_source: Optional[Callable] = None,
        body_force: Optional[Callable] = None) -> Trajectory:
    """March the coupled system from the initial state to ``t_end``.

    The first momentum step uses the backward extension u(-tau) = u0 - tau v0.
    On substep failure the step is retried with half the step size; the
    step size never grows back.  Underflow below ``min_tau`` aborts the
    run, carrying the partial trajectory in the exception.
    """
    violations = initial.validate(mesh)
    if np.min(initial.w) < -1e-12:
        violations.append("initial enthalpy must be nonnegative")
    if violations:
        raise ValueError("inadmissible initial data: " + "; ".join(violations))

    stepper = SemiImplicitStepper(mesh, coeffs, model, controls, split=split,
                                  heat_source=heat_source, body_force=body_force)
    states = [initial.copy()]
    reports: List[StepReport] = []
    tau = controls.tau
    state = states[0]
    while state.t < t_end - 1e-12:
        tau = min(tau, t_end - state.t)
        halved = False
        while True:
            try:
                new_state, report = stepper.do_step(state, tau=tau)
                break
            except StepRejected:
                tau *= 0.5
                halved = True
                if tau < controls.min_tau:
                    raise RunAborted(
                        f"time step underflow at t = {state.t:.6g}",
                        Trajectory(mesh, states, reports)) from None
        report.tau_halved = halved
        states.append(new_state)
        reports.append(report)
        state = new_state
    return Trajectory(mesh, states, reports)
