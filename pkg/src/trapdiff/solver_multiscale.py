"""Reduced multiscale solver: bulk diffusion with a dynamic trap boundary.

1D: pure diffusion on [0, 1] with the second-order ghost-cell boundary
condition M d/dt[(c_0 + c_1)/2] = D (c_1 - c_0)/h at x = 0 (Crank-Nicolson
in mass-matrix form, so bulk + trapped mass is conserved to round-off).

2D: diffusion outside a circular bubble on a Cartesian grid, coupled to a
surface concentration c_Gamma(theta) on a uniform periodic angular grid.
The bulk cells, the ghost closure (biquadratic Dirichlet matching at the
orthogonal projections) and the surface equation
    M dc/dt = M D Lap_perp c + D dc/dn    on the circle
are assembled into one monolithic linear system per time step and solved
with a sparse direct factorization.  The normal-flux exchange samples
D dc/dn from the biquadratic interpolants at the ghost projections and
interpolates it onto the angular nodes; a uniform rank-one correction
redistributes the residual mismatch against the exact sum of bulk-ghost
face fluxes, so bulk + trapped mass is conserved to machine precision by
construction.  The first two steps use backward Euler before
switching to Crank-Nicolson, which damps the stiff constraint modes that
appear when M is very small (including M = 0, the reflecting-disk limit).

The saturated variant closes the trapped density with C_B = M(c_B) c_B;
each step advances C_B exactly by the discrete exchanged flux and recovers
c_B through a monotone inversion of the capacity law (two-pass fixed point
on the differential capacity used in the linearized system).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu, spsolve

from .errors import ConfigurationError, NumericsError, SaturationOverflowError
from .geometry import (
    INSIDE,
    CartesianGrid2D,
    CircleLevelSet,
    Interval1D,
    classify,
    ghost_interpolation_stencil,
)
from .potential import PotentialSpec, saturated_M
from .solver_full import GaussianIC, solve_banded_refined

STARTUP_STEPS = 2  # backward-Euler steps before Crank-Nicolson (2D)


class CapacityLaw:
    """Tabulated capacity M(c_B) and trapped density g(c_B) = M(c_B) c_B.

    Dense tabulation with linear interpolation keeps the per-step inversions
    cheap; monotonicity of g is verified numerically at construction.
    """

    def __init__(self, spec: PotentialSpec, n_samples: int = 3000):
        self.spec = spec
        # M(c_B) bends on the scale c_B ~ exp(-phi), so the table must be
        # geometric: a uniform grid on [0, 1] cannot resolve deep wells.
        self.c = np.concatenate([[0.0], np.geomspace(1e-13, 1.0, n_samples)])
        self.M_tab = np.array([saturated_M(spec, float(ci)) for ci in self.c])
        self.g_tab = self.M_tab * self.c
        if np.any(np.diff(self.g_tab) <= 0.0):
            raise ConfigurationError("capacity law M(c_B) c_B is not strictly increasing")
        self.dg_tab = np.gradient(self.g_tab, self.c)
        self.capacity_max = self.g_tab[-1]  # = eps (L + 1)

    def M(self, c_B):
        return np.interp(c_B, self.c, self.M_tab)

    def g(self, c_B):
        return np.interp(c_B, self.c, self.g_tab)

    def dg(self, c_B):
        return np.interp(c_B, self.c, self.dg_tab)

    def invert(self, C_B):
        """Monotone inversion of C_B = g(c_B); errors above the capacity."""
        C_arr = np.atleast_1d(np.asarray(C_B, dtype=float))
        if np.any(C_arr >= self.capacity_max):
            raise SaturationOverflowError(
                f"trapped density exceeds the physical capacity {self.capacity_max:.6g}"
            )
        C_arr = np.maximum(C_arr, 0.0)
        out = np.interp(C_arr, self.g_tab, self.c)
        return out if np.ndim(C_B) else float(out[0])


@dataclass
class MultiscaleConfig:
    """Parameters of a reduced-model run (1D interval or 2D bubble)."""

    M: float
    grid: "Interval1D | CartesianGrid2D"
    ic: GaussianIC
    t_final: float
    dt: float | None = None
    D: float = 1.0
    saturation: bool = False
    spec: PotentialSpec | None = None
    level_set: CircleLevelSet | None = None
    n_b: int | None = None

    def __post_init__(self):
        if self.M < 0:
            raise ConfigurationError("M must be >= 0")
        if self.dt is None:
            self.dt = self.grid.h
        if self.dt <= 0 or self.t_final <= 0:
            raise ConfigurationError("require dt > 0 and t_final > 0")
        if self.saturation and self.spec is None:
            raise ConfigurationError("saturated runs need a PotentialSpec for M(c_B)")
        if isinstance(self.grid, CartesianGrid2D) and self.level_set is None:
            raise ConfigurationError("2D multiscale runs need a circle level set")


@dataclass
class SurfaceState:
    """Trapped boundary state: scalar in 1D, angular profile in 2D."""

    c_B: np.ndarray
    C_B: np.ndarray
    thetas: np.ndarray | None = None


class MultiscaleSolver1D:
    """Crank-Nicolson diffusion on [0, 1] with the dynamic trap condition.

    Unknowns are u = [c_ghost, c_1, ..., c_N] where the ghost cell sits at
    -h/2 and the boundary value is c_B = (c_0 + c_1) / 2.  When M = 0 the
    boundary row degenerates to the reflecting constraint c_0 = c_1.
    """

    def __init__(self, config: MultiscaleConfig):
        if not isinstance(config.grid, Interval1D):
            raise ConfigurationError("MultiscaleSolver1D requires an Interval1D grid")
        if config.grid.x_left != 0.0:
            raise ConfigurationError("the reduced 1D domain is [0, 1]")
        self.config = config
        self.h = config.grid.h
        self.x = config.grid.centers()
        self.N = config.grid.n_cells
        self.reflecting = (config.M == 0.0) and not config.saturation
        self.law = CapacityLaw(config.spec) if config.saturation else None
        self.u = self._initial_vector()
        if config.saturation:
            self.C_B = float(self.law.g(self._c_B_of(self.u)))
        self.t = 0.0
        if not config.saturation:
            self._A, self._Bmat = self._assemble(config.M)

    def _initial_vector(self):
        g = self.config.ic.profile_1d(self.x)
        if self.reflecting:
            ghost = g[0]
        else:
            # The boundary value is initialized at the wall x = 0, not at the
            # first cell center: the trapped phase lives on the boundary.
            g0 = float(self.config.ic.profile_1d(0.0))
            ghost = 2.0 * g0 - g[0]
        return np.concatenate([[ghost], g])

    def _flux_operator(self):
        """Tridiagonal K with Mass du/dt = K u (rows: boundary, cells 1..N)."""
        N, h, D = self.N, self.h, self.config.D
        n = N + 1
        K_low = np.zeros(n - 1)
        K_diag = np.zeros(n)
        K_up = np.zeros(n - 1)
        # boundary row: exchange flux D (c_1 - c_0) / h
        K_diag[0] = -D / h
        K_up[0] = D / h
        # cell 1: the exchange flux leaves through the wall
        K_low[0] = D / h
        K_diag[1] = -D / h
        # right faces of cells 1..N-1
        K_diag[1:-1] += -D / h
        K_up[1:] = D / h
        # left faces of cells 2..N
        K_low[1:] = D / h
        K_diag[2:] += -D / h
        return K_low, K_diag, K_up

    def _assemble(self, M_eff: float):
        """Banded CN matrices: (Mass - dt/2 K) u+ = (Mass + dt/2 K) u."""
        n = self.N + 1
        K_low, K_diag, K_up = self._flux_operator()
        dth = 0.5 * self.config.dt
        A = np.zeros((3, n))
        B = np.zeros((3, n))
        A[0, 1:] = -dth * K_up
        A[1, :] = -dth * K_diag
        A[2, :-1] = -dth * K_low
        B[0, 1:] = dth * K_up
        B[1, :] = dth * K_diag
        B[2, :-1] = dth * K_low
        A[1, 1:] += self.h
        B[1, 1:] += self.h
        if self.reflecting:
            # constraint row c_0 = c_1 at the new time level
            A[1, 0] = -1.0
            A[0, 1] = 1.0
            B[1, 0] = 0.0
            B[0, 1] = 0.0
        else:
            # Mass row 0: M/2 on columns 0 and 1
            A[1, 0] += 0.5 * M_eff
            A[0, 1] += 0.5 * M_eff
            B[1, 0] += 0.5 * M_eff
            B[0, 1] += 0.5 * M_eff
        return A, B

    @staticmethod
    def _apply_band(B, u):
        out = B[1] * u
        out[:-1] += B[0, 1:] * u[1:]
        out[1:] += B[2, :-1] * u[:-1]
        return out

    def _c_B_of(self, u):
        return 0.5 * (u[0] + u[1])

    def step(self):
        if self.config.saturation:
            self._step_saturated()
        else:
            self.u = solve_banded_refined(self._A, self._apply_band(self._Bmat, self.u))
            self.t += self.config.dt

    def _step_saturated(self):
        dt, D, h = self.config.dt, self.config.D, self.h
        u_old = self.u
        cB_old = self._c_B_of(u_old)
        cB_lin = cB_old
        for _ in range(2):  # two-pass fixed point on the linearization point
            M_d = float(self.law.dg(cB_lin))
            A, B = self._assemble(M_d)
            u_new = solve_banded_refined(A, self._apply_band(B, u_old))
            flux = 0.5 * dt * D * ((u_new[1] - u_new[0]) + (u_old[1] - u_old[0])) / h
            C_new = self.C_B + flux
            cB_new = self.law.invert(C_new)
            cB_lin = 0.5 * (cB_old + cB_new)
        # re-anchor the ghost so that (c_0 + c_1)/2 equals the inverted value
        u_new[0] = 2.0 * cB_new - u_new[1]
        self.u = u_new
        self.C_B = C_new
        self.t += dt

    def run(self, out_times=()):
        cfg = self.config
        n_steps = int(round(cfg.t_final / cfg.dt))
        snaps = {}
        series = []
        for _ in range(n_steps):
            self.step()
            series.append((self.t, self.bulk_mass(), self.trapped_total()))
            for ot in out_times:
                if abs(self.t - ot) < 0.5 * cfg.dt and ot not in snaps:
                    snaps[ot] = (self.u[1:].copy(), self.c_B())
        return snaps, np.array(series)

    def c_B(self) -> float:
        return float(self._c_B_of(self.u))

    def bulk_mass(self) -> float:
        return float(np.sum(self.u[1:]) * self.h)

    def trapped_total(self) -> float:
        if self.config.saturation:
            return float(self.C_B)
        return self.config.M * self.c_B()

    def surface_state(self) -> SurfaceState:
        return SurfaceState(c_B=np.asarray(self.c_B()), C_B=np.asarray(self.trapped_total()))


class MultiscaleSolver2D:
    """Monolithic bulk + ghost + surface theta-scheme solver for the bubble."""

    def __init__(self, config: MultiscaleConfig):
        if not isinstance(config.grid, CartesianGrid2D):
            raise ConfigurationError("MultiscaleSolver2D requires a CartesianGrid2D")
        self.config = config
        grid, ls = config.grid, config.level_set
        self.h = grid.h
        self.cls = classify(grid, ls)
        labels = self.cls.labels
        self.inside = np.argwhere(labels == INSIDE)
        self.ghosts = self.cls.ghost_indices
        self.n_I, self.n_G = len(self.inside), len(self.ghosts)
        self.n_b = config.n_b or max(64, int(math.ceil(2.0 * math.pi * ls.radius / self.h)))
        self.dtheta = 2.0 * math.pi / self.n_b
        self.thetas = -math.pi + (np.arange(self.n_b) + 0.5) * self.dtheta
        self.index_of = -np.ones(labels.shape, dtype=int)
        for k, (i, j) in enumerate(self.inside):
            self.index_of[i, j] = k
        for k, (i, j) in enumerate(self.ghosts):
            self.index_of[i, j] = self.n_I + k
        self._surf0 = self.n_I + self.n_G
        self.n_tot = self._surf0 + self.n_b
        # M = 0 is the reflecting-disk limit: ghosts enforce a zero normal
        # derivative at the projections and the surface field is inert.
        self.reflecting = (config.M == 0.0) and not config.saturation
        self.law = CapacityLaw(config.spec) if config.saturation else None
        self._collect_faces()
        self._build_operators()
        self._s = np.zeros(self.n_tot)
        self._s[self._surf0:] = 1.0  # surface-row indicator (rank-one update)
        self.u = self._initial_vector()
        if config.saturation:
            self.C_B = np.asarray(self.law.g(self.u[self._surf0:])).copy()
        self.t = 0.0
        self._step_count = 0
        self._cache = {}  # theta -> (lu, B) for the constant-M path

    # -- construction ------------------------------------------------------

    def _collect_faces(self):
        """Bulk-ghost faces, which carry the discrete exchange with the trap."""
        grid = self.config.grid
        labels = self.cls.labels
        N = grid.N
        faces = []
        for gk, (gi, gj) in enumerate(self.ghosts):
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = gi + di, gj + dj
                if not (0 <= ii < N and 0 <= jj < N):
                    continue
                if labels[ii, jj] != INSIDE:
                    continue
                faces.append((self.index_of[ii, jj], self.n_I + gk))
        self.faces = faces

    def _theta_weights(self, theta):
        """Periodic linear interpolation weights on the angular grid."""
        s = (theta - self.thetas[0]) / self.dtheta
        k0 = int(math.floor(s)) % self.n_b
        k1 = (k0 + 1) % self.n_b
        w1 = s - math.floor(s)
        return k0, k1, 1.0 - w1, w1

    def _build_operators(self):
        """Cache COO index/data arrays for the M-independent blocks.

        The semi-discrete system is  Mass(M) du/dt = K u  with
        K = K_bulk + K_exch + K_corr + K_lb(M), plus the algebraic ghost rows
        G u = 0 enforced at the new time level.  K_exch samples the smooth
        normal flux D dc/dn from the biquadratic interpolants at the ghost
        projections and interpolates it onto the angular nodes; K_corr is the
        uniform rank-one redistribution of the (truncation-sized) mismatch
        between the sampled flux and the exact sum of bulk-ghost face fluxes,
        which restores machine-exact conservation.
        """
        cfg = self.config
        D = cfg.D
        N = cfg.grid.N
        R, dth = cfg.level_set.radius, self.dtheta
        rows, cols, data = [], [], []
        for k, (i, j) in enumerate(self.inside):
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if not (0 <= ii < N and 0 <= jj < N):
                    continue  # zero-flux outer wall
                nb = self.index_of[ii, jj]
                if nb < 0:
                    raise NumericsError("an inside cell neighbors an inactive cell")
                rows += [k, k]
                cols += [k, nb]
                data += [-D, D]
        K_parts = [(np.array(rows), np.array(cols), np.array(data, dtype=float))]
        # Laplace-Beltrami pattern: face k+1/2 couples nodes k and k+1; the
        # data is filled per assembly from the face capacities.
        lb_rows, lb_cols, lb_face = [], [], []
        for k in range(self.n_b):
            kp = (k + 1) % self.n_b
            r, rp = self._surf0 + k, self._surf0 + kp
            lb_rows += [r, r, rp, rp]
            lb_cols += [rp, r, r, rp]
            lb_face += [k, k, k, k]
        self._lb_pattern = (np.array(lb_rows), np.array(lb_cols), np.array(lb_face))
        self._lb_signs = np.tile(np.array([1.0, -1.0, 1.0, -1.0]), self.n_b)
        # ghost interpolation rows and per-ghost normal-flux stencils
        g_rows, g_cols, g_data = [], [], []
        f_rows, f_cols, f_data = [], [], []
        self._ghost_rows = []
        for gk in range(self.n_G):
            st = ghost_interpolation_stencil(cfg.grid, self.cls, gk)
            ccols = [self.index_of[i, j] for i, j in st.indices]
            if any(c < 0 for c in ccols):
                raise NumericsError("ghost stencil touches an inactive cell")
            k0, k1, w0, w1 = self._theta_weights(self.cls.thetas[gk])
            r = self.n_I + gk
            if self.reflecting:
                # zero normal derivative at the projection
                g_rows += [r] * len(ccols)
                g_cols += ccols
                g_data += list(st.normal_weights)
                self._ghost_rows.append((ccols, st.normal_weights, (k0, 0.0), (k1, 0.0)))
            else:
                g_rows += [r] * (len(ccols) + 2)
                g_cols += ccols + [self._surf0 + k0, self._surf0 + k1]
                g_data += list(st.value_weights) + [-w0, -w1]
                self._ghost_rows.append((ccols, st.value_weights, (k0, w0), (k1, w1)))
                f_rows += [gk] * len(ccols)
                f_cols += ccols
                f_data += list(D * st.normal_weights)
        self._G = (np.array(g_rows), np.array(g_cols), np.array(g_data, dtype=float))
        self._bulk_mass = np.full(self.n_I, self.h * self.h)
        if self.reflecting:
            self._Q = None
            self._d = None
            self._K_fixed = K_parts[0]
            return
        # F = Fmat u samples D dc/dn at the ghost projections; P interpolates
        # the samples (irregular angles) onto the uniform angular nodes.
        from scipy.sparse import csr_matrix

        Fmat = csr_matrix(
            (f_data, (f_rows, f_cols)), shape=(self.n_G, self.n_tot)
        )
        order = np.argsort(self.cls.thetas)
        tg = self.cls.thetas[order]
        p_rows, p_cols, p_data = [], [], []
        for k, th in enumerate(self.thetas):
            j = int(np.searchsorted(tg, th))
            g1 = j % self.n_G
            g0 = (j - 1) % self.n_G
            t0, t1 = tg[g0], tg[g1]
            gap = (t1 - t0) % (2.0 * math.pi)
            if gap == 0.0:
                w1 = 0.0
            else:
                w1 = ((th - t0) % (2.0 * math.pi)) / gap
            p_rows += [k, k]
            p_cols += [int(order[g0]), int(order[g1])]
            p_data += [1.0 - w1, w1]
        P = csr_matrix((p_data, (p_rows, p_cols)), shape=(self.n_b, self.n_G))
        Q = (P @ Fmat).tocoo()  # sampled flux per unit arclength at the nodes
        self._Q = Q.tocsr()
        K_parts.append((self._surf0 + Q.row, Q.col, R * dth * Q.data))
        # exact face-flux functional and the rank-one conservation correction
        f_face = np.zeros(self.n_tot)
        for bi, gi in self.faces:
            f_face[bi] += D
            f_face[gi] -= D
        qsum = R * dth * np.asarray(self._Q.sum(axis=0)).ravel()
        self._d = f_face - qsum
        self._K_fixed = tuple(np.concatenate(arrs) for arrs in zip(*K_parts))

    def _assemble(self, M_nodes, M_faces, theta):
        """Sparse pair (A, B) with A u+ = B u for the given capacities."""
        cfg = self.config
        dt = cfg.dt
        R, dth = cfg.level_set.radius, self.dtheta
        lb_coef = cfg.D / (R * dth)
        kr, kc, kd = self._K_fixed
        lbr, lbc, lbf = self._lb_pattern
        lbd = lb_coef * self._lb_signs * np.asarray(M_faces)[lbf]
        gr, gc, gd = self._G
        mass_rows = np.concatenate([np.arange(self.n_I),
                                    self._surf0 + np.arange(self.n_b)])
        if self.reflecting:
            # inert surface unknowns: identity rows keep c_Gamma frozen
            surf_mass = np.full(self.n_b, dt)
        else:
            surf_mass = np.asarray(M_nodes) * R * dth
        mass_vals = np.concatenate([self._bulk_mass, surf_mass]) / dt
        rows_A = np.concatenate([mass_rows, kr, lbr, gr])
        cols_A = np.concatenate([mass_rows, kc, lbc, gc])
        data_A = np.concatenate([mass_vals, -theta * kd, -theta * lbd, gd])
        rows_B = np.concatenate([mass_rows, kr, lbr])
        cols_B = np.concatenate([mass_rows, kc, lbc])
        data_B = np.concatenate([mass_vals, (1.0 - theta) * kd, (1.0 - theta) * lbd])
        shape = (self.n_tot, self.n_tot)
        A = coo_matrix((data_A, (rows_A, cols_A)), shape=shape).tocsc()
        B = coo_matrix((data_B, (rows_B, cols_B)), shape=shape).tocsc()
        return A, B

    def _initial_vector(self):
        grid, ic, ls = self.config.grid, self.config.ic, self.config.level_set
        x = grid.centers_1d()
        u = np.zeros(self.n_tot)
        for k, (i, j) in enumerate(self.inside):
            u[k] = ic.profile_2d(x[i], x[j])
        bx = ls.center[0] + ls.radius * np.cos(self.thetas)
        by = ls.center[1] + ls.radius * np.sin(self.thetas)
        u[self._surf0:] = ic.profile_2d(bx, by)
        self._close_ghosts(u)
        return u

    def _close_ghosts(self, u):
        """Solve the ghost constraint rows for the current bulk/surface values."""
        if self.n_G == 0:
            return
        rows, cols, data = [], [], []
        rhs = np.zeros(self.n_G)
        for gk, (ccols, w, (k0, w0), (k1, w1)) in enumerate(self._ghost_rows):
            rhs[gk] = w0 * u[self._surf0 + k0] + w1 * u[self._surf0 + k1]
            for c, wc in zip(ccols, w):
                if self.n_I <= c < self._surf0:
                    rows.append(gk)
                    cols.append(c - self.n_I)
                    data.append(wc)
                else:
                    rhs[gk] -= wc * u[c]
        A = coo_matrix((data, (rows, cols)), shape=(self.n_G, self.n_G)).tocsc()
        u[self.n_I:self._surf0] = spsolve(A, rhs)

    # -- stepping ----------------------------------------------------------

    def _theta_now(self):
        return 1.0 if self._step_count < STARTUP_STEPS else 0.5

    def _solve_with_correction(self, lu, w, theta, rhs):
        """Sherman-Morrison solve of (A0 - theta/n_b s d^T) x = rhs."""
        y = lu.solve(rhs)
        if self._d is None:
            return y
        c = theta / self.n_b
        return y + (c * (self._d @ y) / (1.0 - c * (self._d @ w))) * w

    def step(self):
        if self.config.saturation:
            self._step_saturated()
            return
        theta = self._theta_now()
        if theta not in self._cache:
            M_nodes = np.full(self.n_b, self.config.M)
            A, B = self._assemble(M_nodes, M_nodes, theta)
            lu = splu(A)
            w = None if self._d is None else lu.solve(self._s)
            self._cache[theta] = (lu, B, w)
        lu, B, w = self._cache[theta]
        rhs = B @ self.u
        if self._d is not None:
            rhs += ((1.0 - theta) / self.n_b) * (self._d @ self.u) * self._s
        self.u = self._solve_with_correction(lu, w, theta, rhs)
        self.t += self.config.dt
        self._step_count += 1

    def _deposit_rate(self, u):
        """Sampled + corrected exchange (mass per unit time) per angular node."""
        cfg = self.config
        R, dth = cfg.level_set.radius, self.dtheta
        q = R * dth * (self._Q @ u)
        return q + (self._d @ u) / self.n_b

    def _exchanged(self, u_old, u_new, theta):
        """Mass deposited on each angular node during the step."""
        dt = self.config.dt
        return dt * (theta * self._deposit_rate(u_new)
                     + (1.0 - theta) * self._deposit_rate(u_old))

    def _lb_transport(self, u_old, u_new, M_faces, theta):
        """Mass moved along the surface during the step (sums to zero)."""
        cfg = self.config
        R, dth = cfg.level_set.radius, self.dtheta
        coef = cfg.D / (R * dth)
        out = np.zeros(self.n_b)
        for cg, w in ((u_old[self._surf0:], 1.0 - theta), (u_new[self._surf0:], theta)):
            fl = M_faces * (np.roll(cg, -1) - cg)  # face k+1/2
            out += w * (fl - np.roll(fl, 1)) * coef
        return out * cfg.dt

    def _step_saturated(self):
        theta = self._theta_now()
        u_old = self.u
        cg_old = u_old[self._surf0:]
        cg_lin = cg_old.copy()
        R, dth = self.config.level_set.radius, self.dtheta
        for _ in range(2):
            M_d = self.law.dg(cg_lin)
            M_faces = np.asarray(self.law.M(0.5 * (cg_lin + np.roll(cg_lin, -1))))
            A, B = self._assemble(M_d, M_faces, theta)
            lu = splu(A)
            w = lu.solve(self._s)
            rhs = B @ u_old + ((1.0 - theta) / self.n_b) * (self._d @ u_old) * self._s
            u_new = self._solve_with_correction(lu, w, theta, rhs)
            dep = self._exchanged(u_old, u_new, theta)
            lb = self._lb_transport(u_old, u_new, M_faces, theta)
            C_new = self.C_B + (dep + lb) / (R * dth)
            cg_new = self.law.invert(C_new)
            cg_lin = 0.5 * (cg_old + cg_new)
        u_new[self._surf0:] = cg_new
        self._close_ghosts(u_new)
        self.u = u_new
        self.C_B = C_new
        self.t += self.config.dt
        self._step_count += 1

    def run(self, out_times=()):
        cfg = self.config
        n_steps = int(round(cfg.t_final / cfg.dt))
        snaps = {}
        series = []
        for _ in range(n_steps):
            self.step()
            series.append((self.t, self.bulk_mass(), self.trapped_total()))
            for ot in out_times:
                if abs(self.t - ot) < 0.5 * cfg.dt and ot not in snaps:
                    snaps[ot] = (self.u.copy(), self.c_gamma().copy())
        return snaps, np.array(series)

    # -- observables -------------------------------------------------------

    def c_gamma(self) -> np.ndarray:
        return self.u[self._surf0:]

    def bulk_mass(self) -> float:
        return float(np.sum(self.u[: self.n_I]) * self.h**2)

    def trapped_total(self) -> float:
        R, dth = self.config.level_set.radius, self.dtheta
        if self.config.saturation:
            return float(np.sum(self.C_B) * R * dth)
        return float(self.config.M * np.sum(self.c_gamma()) * R * dth)

    def surface_state(self) -> SurfaceState:
        cg = self.c_gamma().copy()
        CB = self.C_B.copy() if self.config.saturation else self.config.M * cg
        return SurfaceState(c_B=cg, C_B=CB, thetas=self.thetas.copy())

    def bulk_field(self) -> np.ndarray:
        """Bulk concentration as a dense (N, N) array, NaN outside the fluid."""
        N = self.config.grid.N
        out = np.full((N, N), np.nan)
        for k, (i, j) in enumerate(self.inside):
            out[i, j] = self.u[k]
        return out
