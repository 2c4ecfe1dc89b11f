"""Sparse SPD linear solves and the bilateral obstacle solver.

The damage update is a variational inequality over the band
``0 <= chi <= chi_prev``: stationarity of a (possibly nonconvex) nodal
residual F subject to bilateral bounds.  It is solved by a primal-dual
active-set method (semismooth Newton on the projected equation
``x - P(x - F(x)/c) = 0``) with a projected-gradient fallback; projected
gradient is also exposed on its own because the tests use it as an
independent oracle.  Non-convergence is reported through
:class:`SolverError` so the time stepper can react by halving the step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Linear or constrained solve failed; carries diagnostic detail."""


# ---------------------------------------------------------------------------
# SPD linear solves
# ---------------------------------------------------------------------------

def solve_spd(matrix: sp.spmatrix, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Direct solve of a symmetric positive-definite sparse system.

    Verifies the relative residual afterwards; a residual above ``tol`` or
    non-finite entries raise :class:`SolverError` with diagnostics.
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(rhs)):
        raise SolverError("solve_spd: right-hand side has non-finite entries")
    try:
        lu = spla.splu(sp.csc_matrix(matrix))
        x = lu.solve(rhs)
    except Exception as exc:  # factorization breakdown
        raise SolverError(f"solve_spd: factorization failed ({exc})") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("solve_spd: solution has non-finite entries")
    resid = np.linalg.norm(matrix @ x - rhs)
    scale = np.linalg.norm(rhs) + 1e-300
    if resid / scale > tol:
        raise SolverError(
            f"solve_spd: relative residual {resid / scale:.3e} exceeds tolerance {tol:.1e}"
        )
    return x


class SpdOperator:
    """Factorized SPD operator for repeated solves against one matrix."""

    def __init__(self, matrix: sp.spmatrix, tol: float = 1e-10):
        self.matrix = sp.csr_matrix(matrix)
        self.tol = tol
        try:
            self._lu = spla.splu(sp.csc_matrix(matrix))
        except Exception as exc:
            raise SolverError(f"factorization failed ({exc})") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self._lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SolverError("factorized solve returned non-finite entries")
        resid = np.linalg.norm(self.matrix @ x - rhs)
        scale = np.linalg.norm(rhs) + 1e-300
        if resid / scale > self.tol:
            raise SolverError(f"factorized solve residual {resid / scale:.3e} too large")
        return x


# ---------------------------------------------------------------------------
# Bilateral obstacle problems
# ---------------------------------------------------------------------------

@dataclass
class ObstacleProblem:
    """Nodal residual/Jacobian with bilateral bounds ``lower <= x <= upper``."""

    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], sp.spmatrix]
    lower: np.ndarray
    upper: np.ndarray
    tol: float = 1e-9
    max_iter: int = 100

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.upper < self.lower - 1e-15):
            raise SolverError("obstacle bounds are inconsistent (upper < lower)")


@dataclass
class ObstacleResult:
    x: np.ndarray
    xi_lower: np.ndarray      # <= 0, supported on the lower-active set
    xi_upper: np.ndarray      # >= 0, supported on the upper-active set
    active_lower: np.ndarray  # bool masks
    active_upper: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool


def _kkt_residual(F, x, lower, upper, xi_low, xi_up):
    """Max-norm of stationarity, sign, and complementarity violations."""
    stat = np.max(np.abs(F + xi_low + xi_up))
    sign = max(np.max(xi_low, initial=0.0), np.max(-xi_up, initial=0.0))
    comp = max(
        np.max(np.abs(xi_low * (x - lower)), initial=0.0),
        np.max(np.abs(xi_up * (upper - x)), initial=0.0),
    )
    feas = max(np.max(lower - x, initial=0.0), np.max(x - upper, initial=0.0))
    return max(stat, sign, comp, feas)


def _split_multiplier(F, x, lower, upper, band_tol):
    """Multiplier from stationarity: xi = -F, assigned to the active bounds."""
    xi = -F
    on_low = x <= lower + band_tol
    on_up = x >= upper - band_tol
    xi_low = np.where(on_low, np.minimum(xi, 0.0), 0.0)
    xi_up = np.where(on_up, np.maximum(xi, 0.0), 0.0)
    return xi_low, xi_up, on_low, on_up


def solve_obstacle(problem: ObstacleProblem, x0: np.ndarray) -> ObstacleResult:
    """Primal-dual active-set (semismooth Newton) solve of the obstacle problem.

    Iterates: classify nodes by the projected step ``x - F(x)/c``, pin the
    active ones to their bounds, take one Newton step of ``F = 0`` on the
    inactive block, project, repeat.  Feasibility of the returned iterate
    is exact (final projection onto the band).  If the active sets cycle
    or Newton stalls, a projected-gradient fallback runs; if that also
    fails to reach ``problem.tol`` a :class:`SolverError` is raised so the
    caller can reject the step.
    """
    lower, upper = problem.lower, problem.upper
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    n = x.size
    band_tol = 1e-12

    degenerate = upper - lower <= band_tol
    if np.all(degenerate):
        x = lower.copy()
        F = problem.residual(x)
        xi_low, xi_up, on_low, on_up = _split_multiplier(F, x, lower, upper, band_tol)
        res = _kkt_residual(F, x, lower, upper, xi_low, xi_up)
        return ObstacleResult(x, xi_low, xi_up, on_low, on_up, res, 0, True)

    best = None
    for it in range(1, problem.max_iter + 1):
        F = problem.residual(x)
        J = sp.csr_matrix(problem.jacobian(x))
        c = np.maximum(J.diagonal(), 1e-8)
        s = x - F / c
        act_low = s < lower
        act_up = s > upper
        fixed = act_low | act_up | degenerate
        free = ~fixed

        x_new = x.copy()
        x_new[act_low | degenerate] = lower[act_low | degenerate]
        x_new[act_up & ~degenerate] = upper[act_up & ~degenerate]
        if np.any(free):
            idx = np.flatnonzero(free)
            # residual at the pinned configuration, restricted to free dofs
            F_pin = problem.residual(x_new)
            J_pin = sp.csr_matrix(problem.jacobian(x_new))
            sub = J_pin[np.ix_(idx, idx)]
            try:
                delta = spla.splu(sp.csc_matrix(sub)).solve(-F_pin[idx])
            except Exception:
                break  # singular inactive block: defer to projected gradient
            if not np.all(np.isfinite(delta)):
                break
            x_new[idx] += delta
        x_new = np.clip(x_new, lower, upper)

        F_new = problem.residual(x_new)
        xi_low, xi_up, on_low, on_up = _split_multiplier(F_new, x_new, lower, upper, band_tol)
        res = _kkt_residual(F_new, x_new, lower, upper, xi_low, xi_up)
        x = x_new
        if best is None or res < best[0]:
            best = (res, x.copy(), xi_low, xi_up, on_low, on_up, it)
        if res <= problem.tol:
            return ObstacleResult(x, xi_low, xi_up, on_low, on_up, res, it, True)

    # fallback: projected gradient from the best iterate so far
    x = best[1] if best is not None else x
    x, pg_iters = projected_gradient(problem, x, tol=problem.tol, max_iter=200_000)
    F = problem.residual(x)
    xi_low, xi_up, on_low, on_up = _split_multiplier(F, x, lower, upper, band_tol)
    res = _kkt_residual(F, x, lower, upper, xi_low, xi_up)
    total = problem.max_iter + pg_iters
    if res <= problem.tol:
        return ObstacleResult(x, xi_low, xi_up, on_low, on_up, res, total, True)
    raise SolverError(
        f"obstacle solver did not converge: kkt residual {res:.3e} > {problem.tol:.1e}"
    )


def projected_gradient(problem: ObstacleProblem, x0: np.ndarray,
                       tol: float = 1e-10, max_iter: int = 200_000,
                       step: Optional[float] = None):
    """Plain projected-gradient iteration on the obstacle problem.

    Slow but simple; serves as the independent oracle for the active-set
    solver and as its fallback.  The step defaults to the inverse of a
    Gershgorin bound for the Jacobian at the initial iterate.
    """
    lower, upper = problem.lower, problem.upper
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    if step is None:
        J = sp.csr_matrix(problem.jacobian(x))
        row_sums = np.asarray(np.abs(J).sum(axis=1)).ravel()
        lip = float(np.max(row_sums))
        step = 1.0 / max(lip, 1e-12)
    it = 0
    for it in range(1, max_iter + 1):
        F = problem.residual(x)
        x_new = np.clip(x - step * F, lower, upper)
        move = np.max(np.abs(x_new - x))
        x = x_new
        # stationarity measure of the projected equation, scaled back by step
        if move / step <= 0.5 * tol or move == 0.0:
            xi_low, xi_up, _, _ = _split_multiplier(problem.residual(x), x, lower, upper, 1e-12)
            res = _kkt_residual(problem.residual(x), x, lower, upper, xi_low, xi_up)
            if res <= tol:
                break
    return x, it
