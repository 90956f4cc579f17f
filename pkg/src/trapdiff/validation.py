"""Model-vs-model validation harness.

Quantifies the agreement between the resolved trap-layer model and the
reduced dynamic-boundary model as the layer width eps shrinks: surface and
bulk discrepancy time series, the final relative trapped-mass error, the
grid-independence study, entrapped-fraction curves, analytic steady-state
oracles, degrees-of-freedom estimates, and CSV emitters for all of them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .errors import ConfigurationError
from .geometry import Interval1D
from .potential import PotentialSpec, saturated_M, solve_phi_for_M
from .solver_full import FullConfig, FullSolver1D, GaussianIC
from .solver_multiscale import MultiscaleConfig, MultiscaleSolver1D

FLOAT_FMT = "%.17g"


@dataclass
class ErrorReport:
    """Discrepancy between a resolved run and a reduced run.

    e_S(t): |mass in the trap layer - M c0(0, t)| / v0
    e_B(t): L1 distance of the bulk fields / v0
    final_error: trapped-mass discrepancy at t_final relative to M c0(0, t_final)
    """

    times: np.ndarray
    e_S: np.ndarray
    e_B: np.ndarray
    final_error: float
    meta: dict = field(default_factory=dict)


@dataclass
class DofEstimate:
    """Degrees of freedom needed by adaptive refinement vs the reduced model."""

    dimension: int
    n: int
    N: int
    eps_tilde: float
    dof_amr: float
    dof_multiscale: float


def _conservative_restriction(x_faces_fine, c_fine, x_faces_coarse):
    """Cell averages of a fine piecewise-constant field on a coarse grid."""
    cum = np.concatenate([[0.0], np.cumsum(c_fine * np.diff(x_faces_fine))])
    cum_at = np.interp(x_faces_coarse, x_faces_fine, cum)
    return np.diff(cum_at) / np.diff(x_faces_coarse)


def compare_models_1d(full_solver: FullSolver1D, ms_solver: MultiscaleSolver1D,
                      out_times) -> ErrorReport:
    """Run both 1D models side by side and measure their discrepancy.

    The resolved field is restricted onto the reduced grid by conservative
    cell averaging before the bulk L1 distance is taken; the trap-layer mass
    is compared against M c0(0, t) at every requested output time.
    """
    spec = full_solver.config.spec
    eps, L = spec.epsilon, spec.L
    v0 = full_solver.config.ic.v0
    if full_solver.h > eps * L / 10.0 + 1e-15:
        raise ConfigurationError(
            f"full grid must resolve the trap layer: h = {full_solver.h} "
            f"> eps L/10 = {eps * L / 10.0}"
        )
    out_times = sorted(out_times)
    snaps_f, _ = full_solver.run(out_times)
    snaps_m, _ = ms_solver.run(out_times)
    missing = [t for t in out_times if t not in snaps_f or t not in snaps_m]
    if missing:
        raise ConfigurationError(f"output times not aligned with dt: {missing}")
    M = ms_solver.config.M
    x_f = full_solver.x
    faces_f = full_solver.config.grid.faces()
    faces_m = ms_solver.config.grid.faces()
    trap = x_f <= eps * L
    bulk = ~trap
    # coarse cells fully inside the common bulk region [eps L, 1]
    keep = faces_m[:-1] >= eps * L - 1e-15
    h_m = ms_solver.h
    e_S, e_B = [], []
    for t in out_times:
        c_f = snaps_f[t]
        c_m, c_B = snaps_m[t]
        trap_mass = float(np.sum(c_f[trap]) * full_solver.h)
        e_S.append(abs(trap_mass - M * c_B) / v0)
        restricted = _conservative_restriction(
            faces_f[np.concatenate([bulk, [True]])], c_f[bulk], faces_m
        )
        e_B.append(float(np.sum(np.abs(restricted[keep] - c_m[keep])) * h_m) / v0)
    t_last = out_times[-1]
    c_B_last = snaps_m[t_last][1]
    trap_last = float(np.sum(snaps_f[t_last][trap]) * full_solver.h)
    denom = abs(M * c_B_last)
    final_error = abs(trap_last - M * c_B_last) / denom if denom > 0 else math.inf
    meta = {
        "eps": eps, "L": L, "M": M, "h_full": full_solver.h, "h_ms": h_m,
        "dt": full_solver.config.dt, "v0": v0,
        "sigma": full_solver.config.ic.sigma, "x_m": full_solver.config.ic.x_m,
        "t_final": t_last,
    }
    return ErrorReport(times=np.array(out_times), e_S=np.array(e_S),
                       e_B=np.array(e_B), final_error=final_error, meta=meta)


def build_comparison_pair(M: float, eps: float, ic: GaussianIC, t_final: float,
                          dx: float, L: float = 2.0, D: float = 1.0,
                          dt: float | None = None):
    """Construct matched resolved/reduced 1D solvers for a comparison run.

    The resolved grid covers [~-eps, 1] with uniform spacing dx (the left edge
    lands on the face nearest -eps), and its initial data is the equilibrated
    Gaussian so the comparison starts on the slow manifold of the trap.
    """
    phi = solve_phi_for_M(M, eps, L)
    spec = PotentialSpec(phi=phi, epsilon=eps, L=L)
    n_f = int(round((1.0 + eps) / dx))
    grid_f = Interval1D(x_left=1.0 - n_f * dx, n_cells=n_f, x_right=1.0)
    cfg_f = FullConfig(spec=spec, grid=grid_f, ic=ic, t_final=t_final, dt=dt,
                       D=D, enforce_peclet=False)
    full = FullSolver1D(cfg_f)
    full.state = full.init_gaussian_equilibrated()
    grid_m = Interval1D(x_left=0.0, n_cells=int(round(1.0 / dx)))
    cfg_m = MultiscaleConfig(M=M, grid=grid_m, ic=ic, t_final=t_final, dt=dt, D=D)
    ms = MultiscaleSolver1D(cfg_m)
    return full, ms


def eps_scaling_study(M: float, eps_list, ic: GaussianIC, t_final: float,
                      dx: float, out_times=None, L: float = 2.0):
    """ErrorReport per eps, at shared output times (default: t_final only)."""
    if out_times is None:
        out_times = [t_final]
    reports = []
    for eps in eps_list:
        full, ms = build_comparison_pair(M, eps, ic, t_final, dx, L=L)
        reports.append(compare_models_1d(full, ms, out_times))
    return reports


def dx_independence_study(M: float, eps_list, dx_list, ic: GaussianIC,
                          t_final: float, L: float = 2.0):
    """final_error over the (eps, dx) grid; unresolved cells are flagged.

    Returns (errors, resolved) with errors[i, j] the final_error at
    (eps_list[i], dx_list[j]) and resolved[i, j] False (error NaN) when
    dx does not resolve the layer width eps L.
    """
    errors = np.full((len(eps_list), len(dx_list)), np.nan)
    resolved = np.zeros_like(errors, dtype=bool)
    for i, eps in enumerate(eps_list):
        for j, dx in enumerate(dx_list):
            if dx > eps * L / 10.0:
                continue
            full, ms = build_comparison_pair(M, eps, ic, t_final, dx, L=L)
            rep = compare_models_1d(full, ms, [t_final])
            errors[i, j] = rep.final_error
            resolved[i, j] = True
    return errors, resolved


def entrapped_fraction_series(series: np.ndarray, v0: float) -> np.ndarray:
    """(t, trapped/v0) rows from a solver run series (t, bulk, trapped)."""
    series = np.asarray(series)
    return np.column_stack([series[:, 0], series[:, 2] / v0])


def power_law_exponent(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def steady_state_oracle(M: float, v0: float, dimension: int = 1,
                        R: float | None = None, box_area: float | None = None,
                        spec: PotentialSpec | None = None, L: float = 2.0):
    """Analytic equilibrium (bulk value, trapped fraction) from conservation.

    1D: bulk domain |Omega| = 1, uniform c_inf = v0 / (1 + M), trapped
    fraction M / (1 + M).  2D circle: c_inf = v0 / (|Omega| + 2 pi R M).
    When a potential spec is given, the saturated 1D balance
    v0 = c_inf + M(c_inf) c_inf is solved by bisection instead.
    """
    if dimension == 1:
        if spec is not None:
            def residual(c):
                return c + saturated_M(spec, c) * c - v0

            c_inf = bisect(residual, 0.0, min(1.0, v0), xtol=1e-16, rtol=8.9e-16)
            trapped = saturated_M(spec, c_inf) * c_inf
            return c_inf, trapped / v0
        c_inf = v0 / (1.0 + M)
        return c_inf, M / (1.0 + M)
    if dimension == 2:
        if R is None or box_area is None:
            raise ConfigurationError("2D oracle needs R and the fluid area")
        denom = box_area + 2.0 * math.pi * R * M
        c_inf = v0 / denom
        return c_inf, 2.0 * math.pi * R * M / denom
    raise ConfigurationError("dimension must be 1 or 2")


def dof_estimate(d: int, n: int, N: int, eps_tilde: float) -> DofEstimate:
    """Degrees of freedom: adaptive refinement of the layer vs reduced model.

    Resolving a layer of relative thickness eps_tilde with n points across it
    costs n/eps_tilde points per dimension crossing the layer; the reduced
    model replaces the layer by a boundary field one dimension lower.
    """
    if d not in (1, 2, 3):
        raise ConfigurationError("d must be 1, 2 or 3")
    if n <= 0 or N <= 0 or eps_tilde <= 0:
        raise ConfigurationError("n, N and eps_tilde must be positive")
    if d == 1:
        amr = n + N
        multi = 1 + N
    elif d == 2:
        amr = n**2 / eps_tilde + N**2
        multi = N + N**2
    else:
        amr = n**3 / eps_tilde**2 + N**3
        multi = N**2 + N**3
    return DofEstimate(dimension=d, n=n, N=N, eps_tilde=eps_tilde,
                       dof_amr=float(amr), dof_multiscale=float(multi))


def self_convergence_order(coarse, mid, fine) -> float:
    """Observed order from three nested uniform-grid fields (factor 2)."""
    def restrict(v):
        return 0.5 * (np.asarray(v)[0::2] + np.asarray(v)[1::2])

    # discrete L1 differences on the coarse grid (cell width cancels in the ratio)
    d1 = np.sum(np.abs(restrict(mid) - np.asarray(coarse)))
    d2 = np.sum(np.abs(restrict(restrict(fine)) - restrict(mid)))
    return float(np.log2(d1 / d2))


# -- CSV emitters ------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([FLOAT_FMT % v if isinstance(v, float) else v
                             for v in row])


def write_error_report(report: ErrorReport, path):
    _write_rows(path, ["t", "e_S", "e_B"],
                [(float(t), float(s), float(b))
                 for t, s, b in zip(report.times, report.e_S, report.e_B)])


def write_error_vs_eps(reports, path):
    _write_rows(path, ["eps", "e_S_final", "e_B_final", "final_error"],
                [(float(r.meta["eps"]), float(r.e_S[-1]), float(r.e_B[-1]),
                  float(r.final_error)) for r in reports])


def write_error_vs_dx(eps_list, dx_list, errors, path):
    rows = []
    for i, eps in enumerate(eps_list):
        for j, dx in enumerate(dx_list):
            rows.append((float(eps), float(dx), float(errors[i, j])))
    _write_rows(path, ["eps", "dx", "final_error"], rows)


def write_fraction_series(series, path):
    _write_rows(path, ["t", "trapped_fraction"],
                [(float(t), float(f)) for t, f in series])


def write_boundary_profile(thetas, c_gamma, path):
    _write_rows(path, ["theta", "c_gamma"],
                [(float(t), float(c)) for t, c in zip(thetas, c_gamma)])


def write_dof_table(estimates, path):
    _write_rows(path, ["d", "n", "N", "eps_tilde", "dof_amr", "dof_multiscale"],
                [(e.dimension, e.n, e.N, float(e.eps_tilde), e.dof_amr,
                  e.dof_multiscale) for e in estimates])
