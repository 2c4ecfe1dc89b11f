"""Material laws, the enthalpy change of variables, and truncation operators.

The simulator works in the enthalpy variable ``w`` obtained from the
temperature ``theta`` through the primitive of the heat capacity,

    w = c_hat(theta),      c_hat(r) = integral of c over [0, r],

so that the inverse map ``Theta = c_hat^{-1}`` (extended by zero on w <= 0)
and the transformed conductivity ``K`` replace the original temperature
coefficients.  Everything the time stepper needs from the material side
lives here:

* ``CoefficientSet`` -- the damage-dependent moduli rho, a, b, gamma, the
  stiffness constant, and the growth/exponent constants, with numerical
  spot checks of the admissibility conditions on sampling grids;
* ``EnthalpyModel`` -- c_hat, its numerically inverted Theta, the
  conductivity K of w, and the truncated variants Theta_M, K_M together
  with the primitive K_hat_M;
* ``split_convex_concave`` -- the convex/concave decomposition of the
  elastic modulus b used by the energy-stable damage update;
* exponent bookkeeping (`validate_exponents`) and the elliptic-regularity
  bootstrap iteration (`h2_bootstrap_iterations`).

All objects are immutable after construction and all operations are pure
functions, so instances can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline


class ConstitutiveError(ValueError):
    """Invalid material data or an evaluation outside the admissible domain."""


#: central-difference step used when a family does not provide derivatives
FD_STEP = 1.0e-5


# ---------------------------------------------------------------------------
# Scalar coefficient functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarFunction:
    """A scalar coefficient function with optional analytic derivatives.

    ``fn`` must accept numpy arrays.  Derivatives fall back to central
    differences with step ``FD_STEP`` when no analytic evaluator is given;
    the antiderivative falls back to a cumulative-Simpson table on demand.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    d1: Optional[Callable[[np.ndarray], np.ndarray]] = None
    d2: Optional[Callable[[np.ndarray], np.ndarray]] = None
    antiderivative_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "scalar"

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.d1 is not None:
            return self.d1(x)
        return (self.fn(x + FD_STEP) - self.fn(x - FD_STEP)) / (2.0 * FD_STEP)

    def deriv2(self, x):
        x = np.asarray(x, dtype=float)
        if self.d2 is not None:
            return self.d2(x)
        return (self.fn(x + FD_STEP) - 2.0 * self.fn(x) + self.fn(x - FD_STEP)) / FD_STEP**2

    def antiderivative(self, x):
        """Primitive vanishing at 0 (analytic when the family provides it)."""
        x = np.asarray(x, dtype=float)
        if self.antiderivative_fn is not None:
            return self.antiderivative_fn(x)
        return _numeric_antiderivative(self, x)


def _numeric_antiderivative(f: ScalarFunction, x: np.ndarray, samples: int = 2049):
    lo = min(0.0, float(np.min(x)))
    hi = max(float(np.max(x)), 1e-12)
    grid = np.linspace(lo, hi, samples)
    vals = f(grid)
    cum = cumulative_simpson(vals, x=grid, initial=0.0)
    offset = np.interp(0.0, grid, cum)
    return np.interp(x, grid, cum) - offset


def _poly(coeffs: Sequence[float]) -> ScalarFunction:
    c = np.asarray(coeffs, dtype=float)
    dc = np.polynomial.polynomial.polyder(c) if len(c) > 1 else np.zeros(1)
    ddc = np.polynomial.polynomial.polyder(c, 2) if len(c) > 2 else np.zeros(1)
    ic = np.polynomial.polynomial.polyint(c)
    pv = np.polynomial.polynomial.polyval
    return ScalarFunction(
        fn=lambda x: pv(x, c),
        d1=lambda x: pv(x, dc) * np.ones_like(x),
        d2=lambda x: pv(x, ddc) * np.ones_like(x),
        antiderivative_fn=lambda x: pv(x, ic),
        name="poly",
    )


def make_function(family: str, **params) -> ScalarFunction:
    """Build a named coefficient function.

    Families (all parameters float unless noted):

    - ``constant``: value
    - ``zero``
    - ``poly``: coeffs (ascending powers)
    - ``affine_power``: base + coef * x**power  (x >= 0)
    - ``sin``: offset + amp * sin(freq * x)
    - ``sin_mix``: a0 + a2 * x**2 + amp * sin(freq * x)
    - ``cosine``: offset + amp * cos(k * pi * x)
    - ``parabola``: amp * x * (1 - x)
    - ``gauss_bump``: amp * exp(-((x - center) / width)**2)
    - ``gauss_dip``: hi - depth * exp(-((x - center) / width)**2)
    """
    if family == "constant":
        v = float(params["value"])
        return ScalarFunction(
            fn=lambda x: np.full_like(x, v),
            d1=lambda x: np.zeros_like(x),
            d2=lambda x: np.zeros_like(x),
            antiderivative_fn=lambda x: v * x,
            name=f"constant({v})",
        )
    if family == "zero":
        return make_function("constant", value=0.0)
    if family == "poly":
        return _poly(params["coeffs"])
    if family == "affine_power":
        base = float(params["base"])
        coef = float(params["coef"])
        power = float(params["power"])
        return ScalarFunction(
            fn=lambda x: base + coef * np.power(np.maximum(x, 0.0), power),
            d1=lambda x: coef * power * np.power(np.maximum(x, 1e-300), power - 1.0),
            antiderivative_fn=lambda x: base * x
            + coef * np.power(np.maximum(x, 0.0), power + 1.0) / (power + 1.0),
            name=f"affine_power({base},{coef},{power})",
        )
    if family == "sin":
        off = float(params.get("offset", 0.0))
        amp = float(params["amp"])
        freq = float(params.get("freq", 1.0))
        return ScalarFunction(
            fn=lambda x: off + amp * np.sin(freq * x),
            d1=lambda x: amp * freq * np.cos(freq * x),
            d2=lambda x: -amp * freq**2 * np.sin(freq * x),
            antiderivative_fn=lambda x: off * x + amp * (1.0 - np.cos(freq * x)) / freq,
            name=f"sin({off},{amp},{freq})",
        )
    if family == "sin_mix":
        a0 = float(params.get("a0", 0.0))
        a2 = float(params.get("a2", 0.0))
        amp = float(params["amp"])
        freq = float(params.get("freq", 1.0))
        return ScalarFunction(
            fn=lambda x: a0 + a2 * x**2 + amp * np.sin(freq * x),
            d1=lambda x: 2.0 * a2 * x + amp * freq * np.cos(freq * x),
            d2=lambda x: 2.0 * a2 - amp * freq**2 * np.sin(freq * x),
            antiderivative_fn=lambda x: a0 * x
            + a2 * x**3 / 3.0
            + amp * (1.0 - np.cos(freq * x)) / freq,
            name=f"sin_mix({a0},{a2},{amp},{freq})",
        )
    if family == "cosine":
        off = float(params.get("offset", 0.0))
        amp = float(params["amp"])
        k = float(params.get("k", 1.0))
        om = k * math.pi
        return ScalarFunction(
            fn=lambda x: off + amp * np.cos(om * x),
            d1=lambda x: -amp * om * np.sin(om * x),
            d2=lambda x: -amp * om**2 * np.cos(om * x),
            antiderivative_fn=lambda x: off * x + amp * np.sin(om * x) / om,
            name=f"cosine({off},{amp},{k})",
        )
    if family == "parabola":
        amp = float(params["amp"])
        return _poly([0.0, amp, -amp])
    if family == "gauss_bump":
        amp = float(params["amp"])
        c0 = float(params.get("center", 0.5))
        wd = float(params.get("width", 0.1))
        return ScalarFunction(
            fn=lambda x: amp * np.exp(-(((x - c0) / wd) ** 2)),
            d1=lambda x: amp * np.exp(-(((x - c0) / wd) ** 2)) * (-2.0 * (x - c0) / wd**2),
            name=f"gauss_bump({amp},{c0},{wd})",
        )
    if family == "gauss_dip":
        hi = float(params["hi"])
        depth = float(params["depth"])
        c0 = float(params.get("center", 0.5))
        wd = float(params.get("width", 0.1))
        return ScalarFunction(
            fn=lambda x: hi - depth * np.exp(-(((x - c0) / wd) ** 2)),
            d1=lambda x: depth * np.exp(-(((x - c0) / wd) ** 2)) * (2.0 * (x - c0) / wd**2),
            name=f"gauss_dip({hi},{depth},{c0},{wd})",
        )
    raise ConstitutiveError(f"unknown coefficient family '{family}'")


# ---------------------------------------------------------------------------
# Truncation at height M
# ---------------------------------------------------------------------------

def truncate(x, level):
    """Clamp ``x`` to the band ``[-level, level]``.

    Idempotent; ``level`` must be positive and finite inputs are required.
    """
    if not level > 0.0:
        raise ConstitutiveError(f"truncation level must be positive, got {level}")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ConstitutiveError("non-finite value passed to truncate")
    out = np.clip(arr, -level, level)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# Exponent bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentReport:
    """Verdict of the growth-exponent admissibility conditions."""

    admissible: bool
    violations: tuple
    r: Optional[float] = None
    s: Optional[float] = None
    s_double_star: Optional[float] = None


def validate_exponents(sigma: float, q: float, q0: float) -> ExponentReport:
    """Check the exponent constraints and return the derived dual exponents.

    Admissible means ``sigma >= 3``, ``1/sigma <= 2q - 1`` and
    ``q <= q0 < q + 1/2``.  In that case the report carries

        r = (2q+2)/(2q0+1),   s = (6q+6)/(6q-2q0+5),
        s** = (6q+6)/(2q-2q0+1),

    and r is guaranteed to lie strictly between 1 and 2.
    """
    if not (sigma > 0 and q > 0 and q0 > 0):
        raise ConstitutiveError("exponents must be positive")
    violations = []
    if not sigma >= 3.0:
        violations.append("(A2): sigma >= 3")
    if not 1.0 / sigma <= 2.0 * q - 1.0:
        violations.append("(A3): 1/sigma <= 2q - 1")
    if not q <= q0:
        violations.append("(A3): q <= q0")
    if not q0 < q + 0.5:
        violations.append("(A3): q0 < q + 1/2")
    if violations:
        return ExponentReport(False, tuple(violations))
    r = (2.0 * q + 2.0) / (2.0 * q0 + 1.0)
    s = (6.0 * q + 6.0) / (6.0 * q - 2.0 * q0 + 5.0)
    s_dd = (6.0 * q + 6.0) / (2.0 * q - 2.0 * q0 + 1.0)
    if not 1.0 < r < 2.0:
        raise ConstitutiveError(f"internal: r = {r} escaped (1, 2) for admissible exponents")
    return ExponentReport(True, (), r=r, s=s, s_double_star=s_dd)


def h2_bootstrap_iterations(p: float):
    """Integrability bootstrap for the displacement regularity argument.

    Starting from s0 = 2p/(2+p), iterates s -> min(3ps/(3p+3s-ps), 2) until
    s = 2 is reached.  Returns ``(count, trace)`` where ``trace`` includes
    the starting value.  Requires p > 3 (the gain per sweep is then bounded
    below by a positive constant, so termination is guaranteed).
    """
    if not p > 3.0:
        raise ConstitutiveError(f"bootstrap requires p > 3, got {p}")
    s = 2.0 * p / (2.0 + p)
    trace = [s]
    while s < 2.0:
        s = 3.0 * p * s / (3.0 * p + 3.0 * s - p * s)
        # the per-sweep gain is bounded below, so only rounding can land
        # marginally short of the target value 2
        s = 2.0 if s >= 2.0 - 1e-12 else s
        if s <= trace[-1]:
            raise ConstitutiveError("bootstrap iteration stalled")
        trace.append(s)
    return len(trace) - 1, tuple(trace)


# ---------------------------------------------------------------------------
# Growth constants and the coefficient set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthConstants:
    """Constants of the growth conditions: c0 for Theta, c1/c2 for K, c3 for C."""

    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0


@dataclass(frozen=True)
class CoefficientSet:
    """All material functions and exponents of one model instance.

    The conductivity is supplied directly in the enthalpy variable (the
    transformed function of w); the corresponding temperature-side
    conductivity is available through :meth:`conductivity_theta`.
    """

    heat_capacity: ScalarFunction        # c(theta), theta >= 0
    conductivity: ScalarFunction         # K(w),    w >= 0 (transformed variable)
    thermal_expansion: ScalarFunction    # rho(chi) on [0, 1]
    viscosity_coeff: ScalarFunction      # a(chi)  >= eta
    elastic_coeff: ScalarFunction        # b(chi)  >= eta
    damage_potential_derivative: ScalarFunction  # gamma(chi)
    stiffness: float = 1.0               # C (scalar elasticity tensor in 1-D)
    viscosity_ratio: float = 1.0         # mu,   D = mu * C
    p_exponent: float = 4.0
    sigma: float = 3.0
    q: float = 1.0
    q0: float = 1.0
    eta: float = 0.5
    growth: GrowthConstants = field(default_factory=GrowthConstants)

    def conductivity_theta(self, theta, model: "EnthalpyModel"):
        """Temperature-side conductivity K(c_hat(theta)) * c(theta)."""
        theta = np.asarray(theta, dtype=float)
        return self.conductivity(model.c_hat(theta)) * self.heat_capacity(theta)

    def check_assumptions(self, dimension: int = 1, grid_points: int = 257,
                          w_max: float = 10.0) -> list:
        """Numerical spot checks of the admissibility conditions.

        Returns a list of violation messages tagged with the assumption
        they break; empty means all sampled checks passed.  These are grid
        checks, not symbolic proofs.
        """
        msgs = []
        xs = np.linspace(0.0, 1.0, grid_points)
        if np.min(self.viscosity_coeff(xs)) < self.eta - 1e-12:
            msgs.append("(A5): a(x) >= eta fails on [0, 1]")
        if np.min(self.elastic_coeff(xs)) < self.eta - 1e-12:
            msgs.append("(A5): b(x) >= eta fails on [0, 1]")
        if not self.stiffness > 0.0:
            msgs.append("(A6): stiffness tensor must be positive definite")
        elif self.stiffness < self.growth.c3 - 1e-12:
            msgs.append("(A6): e:Ce >= c3|e|^2 fails for the declared c3")
        if not self.viscosity_ratio > 0.0:
            msgs.append("(A6): viscosity ratio mu must be positive")
        if not self.p_exponent > dimension:
            msgs.append(f"(A8): p > d fails (p = {self.p_exponent}, d = {dimension})")
        rep = validate_exponents(self.sigma, self.q, self.q0)
        msgs.extend(rep.violations)
        ws = np.linspace(0.0, w_max, grid_points)
        kv = self.conductivity(ws)
        if np.any(kv < self.growth.c1 * (ws ** (2 * self.q) + 1.0) - 1e-12):
            msgs.append("(A3): K(w) >= c1(w^{2q}+1) fails on the sampling grid")
        if np.any(kv > self.growth.c2 * (ws ** (2 * self.q0) + 1.0) + 1e-12):
            msgs.append("(A3): K(w) <= c2(w^{2q0}+1) fails on the sampling grid")
        return msgs


# ---------------------------------------------------------------------------
# Enthalpy model: c_hat, Theta, K and their truncations
# ---------------------------------------------------------------------------

class EnthalpyModel:
    """The transformed temperature functions and their truncated variants.

    ``theta`` inverts the strictly increasing primitive ``c_hat``
    numerically: a monotone sampling table provides the initial guess and a
    safeguarded Newton iteration (bisection bracket, analytic derivative
    ``c``) polishes it to ``inversion_tolerance``.  The inverse is extended
    by zero on w <= 0.
    """

    def __init__(self, c_hat: ScalarFunction, heat_capacity: ScalarFunction,
                 conductivity: ScalarFunction, truncation_level: float = math.inf,
                 theta_table_max: float = 50.0, table_size: int = 1024,
                 inversion_tolerance: float = 1e-12, zero_theta: bool = False):
        if not (truncation_level > 0.0):
            raise ConstitutiveError("truncation level must be positive")
        self.c_hat = c_hat
        self.heat_capacity = heat_capacity
        self.conductivity = conductivity
        self.truncation_level = float(truncation_level)
        self.inversion_tolerance = float(inversion_tolerance)
        self.zero_theta = bool(zero_theta)
        self._theta_grid = np.linspace(0.0, theta_table_max, table_size)
        self._w_grid = np.asarray(c_hat(self._theta_grid), dtype=float)
        if not zero_theta and np.any(np.diff(self._w_grid) <= 0.0):
            raise ConstitutiveError("c_hat must be strictly increasing on the table range")

    @classmethod
    def from_heat_capacity(cls, heat_capacity: ScalarFunction,
                           conductivity: ScalarFunction, **kw) -> "EnthalpyModel":
        c_hat = ScalarFunction(
            fn=heat_capacity.antiderivative,
            d1=heat_capacity.fn,
            name=f"primitive[{heat_capacity.name}]",
        )
        return cls(c_hat, heat_capacity, conductivity, **kw)

    def with_truncation(self, level: float) -> "EnthalpyModel":
        """Copy of this model with a different truncation height."""
        clone = EnthalpyModel.__new__(EnthalpyModel)
        clone.__dict__.update(self.__dict__)
        if not (level > 0.0):
            raise ConstitutiveError("truncation level must be positive")
        clone.truncation_level = float(level)
        return clone

    @classmethod
    def zero_coupling(cls, conductivity: ScalarFunction, **kw) -> "EnthalpyModel":
        """Model with Theta identically zero (decoupled heat physics).

        The zero map satisfies every requirement placed on Theta
        (monotone, Lipschitz, vanishing on w <= 0, trivially within the
        growth bound), so this is an admissible instance, not a hack.
        """
        ident = make_function("poly", coeffs=[0.0, 1.0])
        one = make_function("constant", value=1.0)
        return cls(ident, one, conductivity, zero_theta=True, **kw)

    # -- inverse map ----------------------------------------------------

    def theta(self, w):
        """Theta(w) = c_hat^{-1}(w) for w >= 0, and 0 for w <= 0."""
        scalar = np.isscalar(w) or np.ndim(w) == 0
        w_arr = np.atleast_1d(np.asarray(w, dtype=float))
        out = np.zeros_like(w_arr)
        pos = w_arr > 0.0
        if self.zero_theta or not np.any(pos):
            return float(out[0]) if scalar else out
        wp = w_arr[pos]
        out[pos] = self._invert(wp)
        return float(out[0]) if scalar else out

    def _invert(self, w: np.ndarray) -> np.ndarray:
        lo = np.zeros_like(w)
        hi_scalar = float(self._theta_grid[-1])
        wmax = float(np.max(w))
        while float(self.c_hat(np.asarray(hi_scalar))) < wmax:
            hi_scalar *= 2.0
        hi = np.full_like(w, hi_scalar)
        th = np.interp(w, self._w_grid, self._theta_grid)
        th = np.clip(th, lo, hi)
        tol = self.inversion_tolerance
        for _ in range(200):
            f = np.asarray(self.c_hat(th), dtype=float) - w
            if np.all(np.abs(f) <= tol * (1.0 + np.abs(w))):
                break
            above = f > 0.0
            hi = np.where(above, th, hi)
            lo = np.where(~above, th, lo)
            der = np.asarray(self.heat_capacity(th), dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = th - f / der
            bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
            th = np.where(bad, 0.5 * (lo + hi), newton)
        return th

    # -- truncated variants ---------------------------------------------

    def theta_M(self, w):
        """Theta(T_M(w)): bounded by Theta(M) and vanishing on w <= 0."""
        return self.theta(truncate(w, self.truncation_level))

    def k_of_w(self, w):
        return self.conductivity(np.asarray(w, dtype=float))

    def k_M(self, w):
        """K(T_M(w)): the conductivity with arguments clamped at height M."""
        return self.conductivity(truncate(w, self.truncation_level))

    def k_hat(self, x):
        """Primitive of K vanishing at 0 (analytic when the family has one)."""
        return self.conductivity.antiderivative(np.asarray(x, dtype=float))

    def k_hat_M(self, x):
        """Primitive of the truncated conductivity, for x >= 0.

        Equals k_hat(x) below the truncation height and continues with unit
        slope above it: k_hat(M) + (x - M) for x > M.
        """
        scalar = np.isscalar(x) or np.ndim(x) == 0
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(arr < 0.0):
            raise ConstitutiveError("k_hat_M requires nonnegative arguments")
        m = self.truncation_level
        clipped = np.minimum(arr, m)
        out = np.asarray(self.k_hat(clipped), dtype=float)
        above = arr > m
        if np.any(above):
            out = out + np.where(above, arr - m, 0.0)
        return float(out[0]) if scalar else out

    def lipschitz_estimate(self) -> float:
        """Upper bound for the Lipschitz constant of Theta from the table."""
        if self.zero_theta:
            return 0.0
        dw = np.diff(self._w_grid)
        dth = np.diff(self._theta_grid)
        return float(np.max(dth / np.maximum(dw, 1e-300)))


def theta_M(w, model: EnthalpyModel):
    """Module-level alias for :meth:`EnthalpyModel.theta_M`."""
    return model.theta_M(w)


def k_M(w, model: EnthalpyModel):
    """Module-level alias for :meth:`EnthalpyModel.k_M`."""
    return model.k_M(w)


def k_hat_M(x, model: EnthalpyModel):
    """Module-level alias for :meth:`EnthalpyModel.k_hat_M`."""
    return model.k_hat_M(x)


def k_hat_M_bound_constant(c2: float, q0: float) -> float:
    """Constant in the primitive bound k_hat_M(x) <= C(T_M(x)^{2q0+1}+1) + x.

    Integrating K <= c2 (w^{2q0} + 1) gives k_hat(x) <= c2 x^{2q0+1}/(2q0+1)
    + c2 x and x <= x^{2q0+1} + 1, so C = c2 (1 + 1/(2q0+1)) works for the
    band below M; above M the extension adds exactly x - M <= x.
    """
    return c2 * (1.0 + 1.0 / (2.0 * q0 + 1.0))


def theta_ratio_bound(model: EnthalpyModel, alpha: float,
                      samples: int = 20001) -> float:
    """Numerical sup of Theta(y) / (y + 1)^alpha over y in [0, M].

    This is the constant entering the singular-test-function estimate; it
    is bounded by c0 * sup (y^{1/sigma} + 1)/(y + 1)^alpha whenever the
    growth condition on Theta holds (see `growth_ratio_bound`).
    """
    m = model.truncation_level
    hi = m if math.isfinite(m) else 1e6
    y = np.geomspace(1e-12, hi, samples)
    y = np.concatenate(([0.0], y))
    ratios = model.theta(y) / (y + 1.0) ** alpha
    return float(np.max(ratios))


def growth_ratio_bound(c0: float, sigma: float, alpha: float,
                       samples: int = 200001) -> float:
    """c0 * sup over y >= 0 of (y^{1/sigma} + 1) / (y + 1)^alpha.

    Requires alpha >= 1/sigma so the ratio decays for large y; the sup is
    located by dense sampling on a geometric grid.  The crude estimate
    y^{1/sigma} <= (y + 1)^{1/sigma} <= (y + 1)^alpha shows the result
    never exceeds 2 c0.
    """
    if alpha < 1.0 / sigma:
        raise ConstitutiveError("ratio bound needs alpha >= 1/sigma")
    y = np.concatenate(([0.0], np.geomspace(1e-9, 1e9, samples)))
    vals = (y ** (1.0 / sigma) + 1.0) / (y + 1.0) ** alpha
    return c0 * float(np.max(vals))


# ---------------------------------------------------------------------------
# Convex-concave decomposition of the elastic modulus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexConcaveSplit:
    """b = b1 + b2 with b1 convex and b2 concave on [0, 1]."""

    b1: Callable[[np.ndarray], np.ndarray]
    b2: Callable[[np.ndarray], np.ndarray]
    b1_prime: Callable[[np.ndarray], np.ndarray]
    b2_prime: Callable[[np.ndarray], np.ndarray]

    def __iter__(self):  # convenience unpacking: b1, b2
        return iter((self.b1, self.b2))


def split_convex_concave(b: ScalarFunction, samples: int = 32769) -> ConvexConcaveSplit:
    """Decompose a C^2 modulus into convex and concave parts on [0, 1].

    Uses the double-primitive construction

        b1(r) = b(0) + int_0^r ( b'(0) + int_0^s max(b'', 0) ) ds,
        b2(r) = int_0^r int_0^s min(b'', 0) ds,

    evaluated by cumulative Simpson quadrature on a uniform grid and cubic
    Hermite interpolation between grid nodes.  ``samples`` must be odd; the
    default keeps the split identity below the 1e-12 tolerance and, more
    demanding, keeps the interpolation error of b1'/b2' near kinks of
    max(b'', 0) small enough that the termwise convex-concave audit of the
    stepper resolves at the 1e-12 level.
    """
    if samples < 9 or samples % 2 == 0:
        raise ConstitutiveError("samples must be odd and >= 9")
    x = np.linspace(0.0, 1.0, samples)
    bpp = np.asarray(b.deriv2(x), dtype=float)
    if not np.all(np.isfinite(bpp)):
        raise ConstitutiveError("non-finite second derivative samples of b")
    pos = np.maximum(bpp, 0.0)
    neg = np.minimum(bpp, 0.0)
    b1p = float(b.deriv(np.asarray(0.0))) + cumulative_simpson(pos, x=x, initial=0.0)
    b2p = cumulative_simpson(neg, x=x, initial=0.0)
    b1v = float(b(np.asarray(0.0))) + cumulative_simpson(b1p, x=x, initial=0.0)
    b2v = cumulative_simpson(b2p, x=x, initial=0.0)
    h1 = CubicHermiteSpline(x, b1v, b1p)
    h2 = CubicHermiteSpline(x, b2v, b2p)
    d1 = CubicHermiteSpline(x, b1p, pos)
    d2 = CubicHermiteSpline(x, b2p, neg)
    return ConvexConcaveSplit(
        b1=lambda r: h1(np.asarray(r, dtype=float)),
        b2=lambda r: h2(np.asarray(r, dtype=float)),
        b1_prime=lambda r: d1(np.asarray(r, dtype=float)),
        b2_prime=lambda r: d2(np.asarray(r, dtype=float)),
    )
