"""Resolved drift-diffusion solver: conservation, equilibrium, stability."""

import numpy as np
import pytest

from trapdiff.errors import ConfigurationError
from trapdiff.geometry import CartesianGrid2D, CircleLevelSet, Interval1D
from trapdiff.potential import PotentialSpec, eval_U, trap_coefficient_M
from trapdiff.solver_full import (
    FullConfig,
    FullSolver1D,
    FullSolver2D,
    GaussianIC,
    SlabGrid2D,
)

IC = GaussianIC(v0=1e-6, sigma=0.1, x_m=0.5)
IC2 = GaussianIC(v0=1e-6, sigma=0.1, x_m=0.0, y_m=0.35)


def make_1d(phi=6.0, eps=0.02, dx=1e-3, mobility="linear", t_final=0.05,
            dt=None):
    spec = PotentialSpec(phi=phi, epsilon=eps, L=2.0)
    n = int(round((1.0 + eps) / dx))
    grid = Interval1D(x_left=1.0 - n * dx, n_cells=n, x_right=1.0)
    return FullSolver1D(FullConfig(spec=spec, grid=grid, ic=IC,
                                   t_final=t_final, dt=dt, mobility=mobility))


def test_peclet_guard_message():
    spec = PotentialSpec(phi=14.0, epsilon=1e-4, L=2.0)
    grid = Interval1D(x_left=-1e-4, n_cells=1001)
    with pytest.raises(ConfigurationError, match="mesh Peclet"):
        FullConfig(spec=spec, grid=grid, ic=IC, t_final=0.01)


@pytest.mark.parametrize("mobility", ["linear", "saturating"])
def test_conservation_1d(mobility):
    s = make_1d(mobility=mobility)
    v0 = s.total_volume()
    s.run()
    assert abs(s.total_volume() - v0) / v0 < 1e-10


def test_field_negativity_is_roundoff_only():
    s = make_1d()
    s.run()
    f = s.state.field
    assert f.min() > -1e-6 * f.max()


def test_equilibrated_ic_carries_slow_manifold_trap_mass():
    # the equilibrated start loads the trap with ~ M * c(wall) right away
    from trapdiff.potential import trap_coefficient_M as tM
    s = make_1d(dx=2.5e-4)
    s.state = s.init_gaussian_equilibrated()
    M = tM(s.config.spec)
    want = M * IC.profile_1d(0.0)
    assert s.entrapped_mass() == pytest.approx(want, rel=0.2)


def test_long_run_reaches_boltzmann_equilibrium():
    s = make_1d(dx=2.5e-4, dt=1e-3, t_final=2.0)
    s.run()
    spec = s.config.spec
    xi = 1.0 + s.x / spec.epsilon
    sel = (xi >= 1.0) & (xi <= spec.L + 1.0)
    U = eval_U(spec, xi[sel])
    prod = s.state.field[sel] * np.exp(U)
    assert (prod.max() - prod.min()) / prod.mean() < 0.02
    # trapped fraction matches the analytic equilibrium M / (1 + M)
    M = trap_coefficient_M(spec)
    frac = s.entrapped_mass() / s.total_volume()
    assert frac == pytest.approx(M / (1.0 + M), rel=0.02)


def test_saturating_matches_linear_in_dilute_limit():
    lin = make_1d(mobility="linear", dx=5e-4, dt=1e-4)
    sat = make_1d(mobility="saturating", dx=5e-4, dt=1e-4)
    lin.run()
    sat.run()
    diff = np.max(np.abs(lin.state.field - sat.state.field))
    assert diff / np.max(lin.state.field) < 1e-3


@pytest.mark.parametrize("mobility", ["linear", "saturating"])
def test_conservation_2d_slab(mobility):
    spec = PotentialSpec(phi=6.0, epsilon=0.025, L=2.0)
    grid = SlabGrid2D(x_left=-0.025, n_x=410, n_y=32)
    ic = GaussianIC(v0=1e-6, sigma=0.1, x_m=0.5, y_m=0.5)
    s = FullSolver2D(FullConfig(spec=spec, grid=grid, ic=ic, t_final=0.05,
                                mobility=mobility))
    v0 = s.total_volume()
    s.run()
    assert abs(s.total_volume() - v0) / v0 < 1e-10
    assert np.all(s.state.field >= 0.0)


@pytest.mark.parametrize("mobility", ["linear", "saturating"])
def test_conservation_2d_bubble(mobility):
    spec = PotentialSpec(phi=6.0, epsilon=0.05, L=2.0)
    grid = CartesianGrid2D(a=0.5, N=200)
    ls = CircleLevelSet(radius=0.25)
    s = FullSolver2D(FullConfig(spec=spec, grid=grid, ic=IC2, t_final=0.05,
                                level_set=ls, mobility=mobility))
    v0 = s.total_volume()
    s.run()
    assert abs(s.total_volume() - v0) / v0 < 1e-10
    assert np.all(s.state.field >= 0.0)
    assert s.entrapped_mass() > 0.0


def test_run_snapshots_and_series():
    s = make_1d(dx=1e-3, t_final=0.01)
    snaps, series = s.run(out_times=[0.005, 0.01])
    assert set(snaps) == {0.005, 0.01}
    assert series.shape[1] == 3
    assert series[-1, 0] == pytest.approx(0.01)
    # entrapped mass grows from a bulk Gaussian start
    assert series[-1, 2] > series[0, 2]
