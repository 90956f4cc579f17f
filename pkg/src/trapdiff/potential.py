"""Lennard-Jones trap potential and the homogenized boundary coefficients.

The trap is described in the stretched coordinate xi = 1 + x/eps, where the
12-6 well U(xi) = phi*(xi^-12 - 2*xi^-6) has its minimum U(1) = -phi and is
taken to be exactly zero beyond the cutoff xi = L + 1 (compact-support
convention).  Every coefficient of the reduced boundary condition derives
from Boltzmann-weighted integrals of this potential:

* trap capacity       I_L(phi) = integral of exp(-U) over [0, L+1]
* dilute coefficient  M = eps * I_L(phi)
* saturated capacity  I_L(phi, c_B) with Fermi-Dirac style crowding
* Taylor coefficients M_k and a rational surrogate of M(c_B)

All integrals are evaluated by composite Gauss-Legendre quadrature on
[XI_CORE, L+1]; below XI_CORE the factor exp(-U) underflows to zero for any
phi >= 1, so the dropped piece is beyond double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericsError

# Hard-core quadrature cutoff: exp(-U(XI_CORE)) < 1e-300 for phi >= 1.
XI_CORE = 1e-3

# Cap applied to U before exponentiation.  exp(+-200) stays comfortably
# inside double range and the clipped Boltzmann mass (< 2e-87) is negligible.
U_CAP = 200.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class PotentialSpec:
    """Dimensionless well depth phi = E/(k_B T), range eps, cutoff multiplier L."""

    phi: float
    epsilon: float
    L: float = 2.0

    def __post_init__(self):
        if self.phi < 0:
            raise ConfigurationError(f"phi must be >= 0, got {self.phi}")
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if self.L < 1:
            raise ConfigurationError(f"L must be >= 1, got {self.L}")


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite Gauss-Legendre settings for the coefficient integrals."""

    rule: str = "gauss-legendre"
    panels: int = 256
    abs_tol: float = 1e-12

    def __post_init__(self):
        if self.panels < 16:
            raise ConfigurationError(f"panels must be >= 16, got {self.panels}")
        if self.abs_tol <= 0:
            raise ConfigurationError(f"abs_tol must be > 0, got {self.abs_tol}")


DEFAULT_QUAD = QuadratureConfig()


@dataclass
class CapacityTable:
    """Sampled capacity curve M(c_B) on an ascending c_B grid in [0, 1]."""

    c_B_samples: np.ndarray
    M_values: np.ndarray
    rational_fit: "RationalFit | None" = None


@dataclass
class RationalFit:
    """Rational surrogate R_{p,q}(c_B) = P(c_B)/Q(c_B) with Q(0) = 1."""

    num_coeffs: np.ndarray
    den_coeffs: np.ndarray
    max_rel_error: float

    def __call__(self, c_B):
        c_B = np.asarray(c_B, dtype=float)
        num = np.polynomial.polynomial.polyval(c_B, self.num_coeffs)
        den = np.polynomial.polynomial.polyval(c_B, self.den_coeffs)
        return num / den


@dataclass(frozen=True)
class TailRatio:
    """Relative weight of the potential integral beyond the cutoff."""

    value: float
    degenerate: bool = False


def eval_U(spec: PotentialSpec, xi):
    """12-6 well in the stretched coordinate; exactly 0 beyond xi = L + 1."""
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr <= 0):
        raise ConfigurationError("eval_U requires xi > 0 (repulsive core singularity)")
    if spec.phi == 0.0:
        out = np.zeros_like(xi_arr)
        return out if out.ndim else 0.0
    with np.errstate(over="ignore"):
        inv6 = xi_arr ** -6.0
        u = spec.phi * (inv6 * inv6 - 2.0 * inv6)
    out = np.where(xi_arr > spec.L + 1.0, 0.0, u)
    return out if out.ndim else float(out)


def eval_U_prime(spec: PotentialSpec, xi):
    """Analytic derivative dU/dxi; 0 beyond the cutoff."""
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr <= 0):
        raise ConfigurationError("eval_U_prime requires xi > 0")
    if spec.phi == 0.0:
        out = np.zeros_like(xi_arr)
        return out if out.ndim else 0.0
    with np.errstate(over="ignore"):
        inv7 = xi_arr ** -7.0
        du = 12.0 * spec.phi * (inv7 - xi_arr ** -13.0)
    out = np.where(xi_arr > spec.L + 1.0, 0.0, du)
    return out if out.ndim else float(out)


def _composite_gl(f, a: float, b: float, panels: int) -> float:
    """Composite Gauss-Legendre integral of a vectorized integrand on [a, b]."""
    if b <= a:
        return 0.0
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = f(pts.ravel()).reshape(pts.shape)
    return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * vals))


def _integrate_refining(f, a: float, b: float, quad: QuadratureConfig) -> float:
    """Integrate with panel doubling until the estimate stops moving."""
    panels = quad.panels
    prev = _composite_gl(f, a, b, panels)
    for _ in range(8):
        panels *= 2
        cur = _composite_gl(f, a, b, panels)
        if abs(cur - prev) <= max(quad.abs_tol, 1e-13 * abs(cur)):
            return cur
        prev = cur
    raise NumericsError(
        f"quadrature did not converge on [{a}, {b}]; last estimate {prev!r}"
    )


def _boltzmann_factor(phi: float, L: float):
    def f(xi):
        with np.errstate(over="ignore", under="ignore"):
            inv6 = xi ** -6.0
            u = phi * (inv6 * inv6 - 2.0 * inv6)
        u = np.where(xi > L + 1.0, 0.0, u)
        return np.exp(-np.minimum(u, 745.0))

    return f


def trap_capacity_I(phi: float, L: float, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Dimensionless trap capacity I_L(phi) = int_0^{L+1} exp(-U) dxi."""
    if phi < 0:
        raise ConfigurationError("phi must be >= 0")
    if phi == 0.0:
        return L + 1.0
    return _integrate_refining(_boltzmann_factor(phi, L), XI_CORE, L + 1.0, quad)


def trap_coefficient_M(spec: PotentialSpec, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Dilute boundary coefficient M = eps * I_L(phi)."""
    return spec.epsilon * trap_capacity_I(spec.phi, spec.L, quad)


def solve_phi_for_M(
    M_target: float,
    epsilon: float,
    L: float,
    tol: float = 1e-12,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> float:
    """Invert M = eps * I_L(phi) for phi; I_L is strictly increasing in phi."""
    from scipy.optimize import brentq

    target_I = M_target / epsilon
    if target_I < (L + 1.0) * (1.0 - 1e-12):
        raise ConfigurationError(
            f"infeasible capacity: M/eps = {target_I} is below I_L(0) = {L + 1.0}"
        )
    if abs(target_I - (L + 1.0)) <= 1e-12 * (L + 1.0):
        return 0.0

    def g(phi):
        return trap_capacity_I(phi, L, quad) - target_I

    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e4:
            raise NumericsError("could not bracket phi for the requested capacity")
    phi = brentq(g, 0.0, hi, xtol=1e-14, rtol=1e-15)
    if abs(trap_capacity_I(phi, L, quad) - target_I) > tol * target_I:
        raise NumericsError("phi root-solve did not meet the requested tolerance")
    return float(phi)


def saturated_capacity_I(
    phi: float,
    L: float,
    c_B: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> float:
    """Crowding-corrected capacity I_L(phi, c_B) = int f / (1 - c_B (1 - f)) dxi."""
    if not 0.0 <= c_B <= 1.0:
        raise ConfigurationError(f"c_B must lie in [0, 1], got {c_B}")
    if c_B == 1.0:
        return L + 1.0  # integrand is identically 1
    if c_B == 0.0 or phi == 0.0:
        return trap_capacity_I(phi, L, quad)
    fB = _boltzmann_factor(phi, L)

    def integrand(xi):
        f = fB(xi)
        return f / (1.0 - c_B * (1.0 - f))

    return _integrate_refining(integrand, XI_CORE, L + 1.0, quad)


def saturated_M(
    spec: PotentialSpec, c_B: float, quad: QuadratureConfig = DEFAULT_QUAD
) -> float:
    """Saturated boundary coefficient M(c_B) = eps * I_L(phi, c_B)."""
    return spec.epsilon * saturated_capacity_I(spec.phi, spec.L, c_B, quad)


def capacity_table(
    spec: PotentialSpec,
    n_samples: int = 101,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> CapacityTable:
    """Tabulate M(c_B) on a uniform c_B grid over [0, 1]."""
    c = np.linspace(0.0, 1.0, n_samples)
    M = np.array([saturated_M(spec, float(ci), quad) for ci in c])
    return CapacityTable(c_B_samples=c, M_values=M)


def taylor_coefficient_Mk(
    spec: PotentialSpec, k: int, quad: QuadratureConfig = DEFAULT_QUAD
) -> float:
    """Series coefficient M_k = int f (1 - f)^k dxi of the capacity in c_B."""
    if k < 0 or int(k) != k:
        raise ConfigurationError("k must be a nonnegative integer")
    if spec.phi == 0.0:
        return (spec.L + 1.0) if k == 0 else 0.0
    if spec.phi * (k + 1) > 700.0:
        raise NumericsError("Taylor coefficient overflows double precision")
    fB = _boltzmann_factor(spec.phi, spec.L)

    def integrand(xi):
        f = fB(xi)
        return f * (1.0 - f) ** k

    val = _integrate_refining(integrand, XI_CORE, spec.L + 1.0, quad)
    if not math.isfinite(val):
        raise NumericsError("Taylor coefficient overflows double precision")
    return val


def rational_fit(table: CapacityTable, p: int = 3, q: int = 4) -> RationalFit:
    """Least-squares rational surrogate of I(c_B) = M(c_B)/eps over [0, 1].

    Linearized relative least squares (multiply through by the denominator,
    weight rows by 1/y), followed by Gauss-Newton refinement kept only when
    it improves the max relative error.  The denominator is normalized to
    Q(0) = 1 and checked for roots in [0, 1].
    """
    c = np.asarray(table.c_B_samples, dtype=float)
    y = np.asarray(table.M_values, dtype=float)
    if c[0] > 0.0 or c[-1] < 1.0:
        raise ConfigurationError("capacity table must cover c_B in [0, 1]")
    # P(c) - y*(Q(c) - 1) = y, weighted by 1/y.
    cols = [c**j / y for j in range(p + 1)]
    cols += [-(c**j) for j in range(1, q + 1)]
    A = np.column_stack(cols)
    b = np.ones_like(y)
    sol, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < A.shape[1] or sv[0] / sv[-1] > 1e13:
        raise NumericsError(
            f"rational fit is ill-conditioned (cond ~ {sv[0] / sv[-1]:.2e}); "
            "reduce (p, q) or refine the table"
        )
    num = sol[: p + 1]
    den = np.concatenate(([1.0], sol[p + 1 :]))

    def max_rel_err(num_c, den_c):
        fit = np.polynomial.polynomial.polyval(c, num_c) / np.polynomial.polynomial.polyval(c, den_c)
        return float(np.max(np.abs(fit - y) / np.abs(y)))

    best = (num, den, max_rel_err(num, den))
    # One Gauss-Newton pass on the true relative residual.
    for _ in range(3):
        num_c, den_c, err = best
        P = np.polynomial.polynomial.polyval(c, num_c)
        Q = np.polynomial.polynomial.polyval(c, den_c)
        r = (P / Q - y) / y
        Jn = np.column_stack([c**j / (Q * y) for j in range(p + 1)])
        Jd = np.column_stack([-(c**j) * P / (Q**2 * y) for j in range(1, q + 1)])
        J = np.hstack([Jn, Jd])
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        num_new = num_c + step[: p + 1]
        den_new = den_c.copy()
        den_new[1:] += step[p + 1 :]
        err_new = max_rel_err(num_new, den_new)
        if err_new >= err:
            break
        best = (num_new, den_new, err_new)
    num, den, err = best
    dense = np.polynomial.polynomial.polyval(np.linspace(0, 1, 2001), den)
    if np.min(dense) <= 0.0:
        raise NumericsError("fitted denominator has a root in [0, 1]")
    fit = RationalFit(num_coeffs=num, den_coeffs=den, max_rel_error=err)
    table.rational_fit = fit
    return fit


def tail_ratio(
    phi: float,
    L: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    xi_min: float = 0.25,
) -> TailRatio:
    """|int_{L+1}^inf U| / |int_{xi_min}^inf U| with an explicit lower cutoff.

    The integral from 0 diverges at the repulsive core, so a cutoff is
    required; it is exposed rather than chosen silently.  The antiderivative
    of U is closed-form, which fixes the upper truncation error exactly.
    """
    if xi_min <= 0:
        raise ConfigurationError("xi_min must be > 0")
    if phi == 0.0:
        return TailRatio(0.0, degenerate=True)

    def F(xi):
        # antiderivative of phi*(xi^-12 - 2 xi^-6), vanishing at infinity
        return phi * (-(xi**-11.0) / 11.0 + 0.4 * xi**-5.0)

    numerator = -F(L + 1.0)
    denominator = -F(xi_min)
    if denominator == 0.0:
        return TailRatio(0.0, degenerate=True)
    return TailRatio(abs(numerator / denominator), degenerate=False)


def sutherland_constant(spec: PotentialSpec, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Dilute-limit partition constant K = 1/M between bulk and trapped mass."""
    M = trap_coefficient_M(spec, quad)
    if M <= 0:
        raise ConfigurationError("Sutherland constant requires M > 0")
    return 1.0 / M


def max_drift_slope(spec: PotentialSpec) -> float:
    """max |U'(xi)| over the attractive branch xi in [1, L+1].

    The repulsive core (xi < 1) acts as an impenetrable wall where the scheme
    transports no mass, so the stability-relevant drift magnitude is the
    attractive one.  The maximizer xi* = (13/7)^(1/6) is analytic.
    """
    xi_star = (13.0 / 7.0) ** (1.0 / 6.0)
    xi_star = min(xi_star, spec.L + 1.0)
    return abs(float(eval_U_prime(spec, xi_star)))


def peclet_number(spec: PotentialSpec, h: float) -> float:
    """Mesh Peclet number max|dU/dx| * h = max|U'(xi)| / eps * h."""
    if h <= 0:
        raise ConfigurationError("h must be > 0")
    return max_drift_slope(spec) / spec.epsilon * h


def peclet_ok(spec: PotentialSpec, h: float) -> bool:
    """Stability predicate for the centered drift discretization."""
    return peclet_number(spec, h) < 2.0


# ---------------------------------------------------------------------------
# Boltzmann cell averages and face resistances used by the resolved solver.
# ---------------------------------------------------------------------------

def boltzmann_cell_averages(spec: PotentialSpec, xi_faces: np.ndarray, order: int = 24):
    """Per-cell mean Boltzmann weight and Boltzmann-mass centroid in xi.

    For each cell [xi_j, xi_{j+1}] returns w_j = mean of exp(-U) and the
    centroid of exp(-U) over the cell (used to sample initial data at the
    local mass center).  U is clipped at U_CAP before exponentiation.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    lo = np.asarray(xi_faces[:-1], dtype=float)
    hi = np.asarray(xi_faces[1:], dtype=float)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    pts = np.maximum(pts, 1e-8)
    u = np.clip(eval_U(spec, pts), -745.0, U_CAP)
    f = np.exp(-u)
    m0 = np.sum(weights[None, :] * f, axis=1) * half
    m1 = np.sum(weights[None, :] * f * pts, axis=1) * half
    width = hi - lo
    w_mean = np.maximum(m0 / width, 1e-300)
    with np.errstate(invalid="ignore"):
        centroid = np.where(m0 > 0, m1 / np.maximum(m0, 1e-300), mid)
    return w_mean, centroid


def face_resistances(spec: PotentialSpec, xi_points: np.ndarray, order: int = 24):
    """Integrals of exp(+U) between consecutive xi points (clipped at U_CAP).

    These are the diffusive resistances of the exponential-fitting flux: the
    steady two-point flux between cells with centers a and b is
    D * (chat_a - chat_b) / int_a^b exp(U) dxi with chat = c * exp(U).
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    lo = np.asarray(xi_points[:-1], dtype=float)
    hi = np.asarray(xi_points[1:], dtype=float)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    pts = np.maximum(pts, 1e-8)
    u = np.clip(eval_U(spec, pts), -745.0, U_CAP)
    r = np.sum(weights[None, :] * np.exp(u), axis=1) * half
    return np.maximum(r, 1e-300)
