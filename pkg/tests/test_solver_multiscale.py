"""Reduced-model solvers: conservation, limits, and the capacity law."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapdiff.errors import ConfigurationError, SaturationOverflowError
from trapdiff.geometry import CartesianGrid2D, CircleLevelSet, Interval1D
from trapdiff.potential import PotentialSpec, trap_coefficient_M
from trapdiff.solver_full import GaussianIC
from trapdiff.solver_multiscale import (
    CapacityLaw,
    MultiscaleConfig,
    MultiscaleSolver1D,
    MultiscaleSolver2D,
)

IC = GaussianIC(v0=1e-6, sigma=0.1, x_m=0.5)
IC2 = GaussianIC(v0=1e-6, sigma=0.1, x_m=0.0, y_m=0.35)
SPEC = PotentialSpec(phi=6.0, epsilon=1e-3, L=2.0)


def make_1d(M=3.0, dx=1e-3, t_final=0.05, saturation=False, spec=None, ic=IC):
    grid = Interval1D(x_left=0.0, n_cells=int(round(1.0 / dx)))
    cfg = MultiscaleConfig(M=M, grid=grid, ic=ic, t_final=t_final,
                           saturation=saturation, spec=spec)
    return MultiscaleSolver1D(cfg)


def make_2d(M=1.0, N=100, t_final=0.02, saturation=False, spec=None, ic=IC2):
    grid = CartesianGrid2D(a=0.5, N=N)
    cfg = MultiscaleConfig(M=M, grid=grid, ic=ic, t_final=t_final,
                           saturation=saturation, spec=spec,
                           level_set=CircleLevelSet(radius=0.25))
    return MultiscaleSolver2D(cfg)


# -- capacity law ------------------------------------------------------------

def test_capacity_law_dilute_slope():
    # dg/dc at c = 0 is the unsaturated trap coefficient M
    law = CapacityLaw(PotentialSpec(phi=6.0, epsilon=0.5, L=2.0))
    M = trap_coefficient_M(PotentialSpec(phi=6.0, epsilon=0.5, L=2.0))
    assert law.dg(0.0) == pytest.approx(M, rel=1e-3)
    assert law.g(0.0) == 0.0


def test_capacity_law_monotone_and_invertible():
    law = CapacityLaw(PotentialSpec(phi=6.0, epsilon=0.5, L=2.0))
    c = np.geomspace(1e-10, 0.99, 200)
    g = np.array([law.g(v) for v in c])
    assert np.all(np.diff(g) > 0)
    back = np.array([law.invert(v) for v in g])
    assert np.allclose(back, c, rtol=1e-3)


def test_capacity_law_overflow():
    spec = PotentialSpec(phi=6.0, epsilon=0.5, L=2.0)
    law = CapacityLaw(spec)
    with pytest.raises(SaturationOverflowError):
        law.invert(spec.epsilon * (spec.L + 1.0) * 1.01)


# -- 1D reduced model --------------------------------------------------------

@pytest.mark.parametrize("saturation", [False, True])
def test_conservation_1d(saturation):
    s = make_1d(saturation=saturation, spec=SPEC if saturation else None,
                M=trap_coefficient_M(SPEC) if saturation else 3.0)
    tot0 = s.bulk_mass() + s.trapped_total()
    s.run()
    tot = s.bulk_mass() + s.trapped_total()
    assert abs(tot - tot0) / tot0 < 1e-10


def test_zero_M_is_reflecting_1d():
    # with M = 0 the trap disappears: mass stays in the bulk and matches a
    # plain reflecting diffusion run (ghost mirrors the first cell)
    s = make_1d(M=0.0)
    s.run()
    assert s.trapped_total() == 0.0
    assert s.u[0] == pytest.approx(s.u[1], rel=1e-12)
    assert s.bulk_mass() == pytest.approx(IC.v0, rel=1e-4)


def test_trapped_fraction_approaches_equilibrium():
    s = make_1d(M=3.0, t_final=2.0)
    _, series = s.run()
    frac = series[-1, 2] / IC.v0
    assert frac == pytest.approx(0.75, rel=0.01)


def test_snapshots_contain_boundary_value():
    s = make_1d(M=1.0, t_final=0.01)
    snaps, series = s.run(out_times=[0.01])
    field, c_B = snaps[0.01]
    assert len(field) == s.N  # bulk cells only; the ghost is internal
    assert c_B == pytest.approx(s.c_B(), rel=1e-12)
    assert series.shape[1] == 3


@given(M=st.floats(min_value=1e-6, max_value=50.0))
@settings(max_examples=10, deadline=None)
def test_conservation_1d_any_M(M):
    s = make_1d(M=M, dx=5e-3, t_final=0.02)
    tot0 = s.bulk_mass() + s.trapped_total()
    s.run()
    assert abs(s.bulk_mass() + s.trapped_total() - tot0) / tot0 < 1e-11


# -- 2D reduced model --------------------------------------------------------

@pytest.mark.parametrize("saturation", [False, True])
def test_conservation_2d(saturation):
    spec = PotentialSpec(phi=6.0, epsilon=0.02, L=2.0)
    s = make_2d(M=trap_coefficient_M(spec), saturation=saturation,
                spec=spec if saturation else None)
    tot0 = s.bulk_mass() + s.trapped_total()
    s.run()
    tot = s.bulk_mass() + s.trapped_total()
    assert abs(tot - tot0) / tot0 < 1e-10


def test_zero_M_is_reflecting_2d():
    # The reflecting mode imposes dc/dn = 0 through the ghost stencils, so
    # bulk mass is conserved to the truncation order of the embedded
    # boundary treatment rather than to machine precision.
    s = make_2d(M=0.0)
    tot0 = s.bulk_mass()
    s.run()
    assert s.trapped_total() == 0.0
    assert abs(s.bulk_mass() - tot0) / tot0 < 1e-3


def test_boundary_profile_shape():
    s = make_2d(M=1.0)
    s.run()
    st_ = s.surface_state()
    assert len(st_.c_B) == len(st_.thetas) == s.n_b
    assert np.all(st_.c_B > 0)
    # the IC sits above the circle: the top of the boundary sees more mass
    top = st_.c_B[np.argmin(np.abs(st_.thetas - np.pi / 2))]
    bottom = st_.c_B[np.argmin(np.abs(st_.thetas + np.pi / 2))]
    assert top > bottom


def test_bulk_field_masks_bubble():
    s = make_2d(M=1.0, t_final=0.005)
    s.run()
    f = s.bulk_field()
    N = s.config.grid.N
    assert f.shape == (N, N)
    assert np.isnan(f[N // 2, N // 2])  # bubble center
    assert np.isfinite(f[0, 0])


def test_2d_requires_level_set():
    with pytest.raises(ConfigurationError):
        MultiscaleConfig(M=1.0, grid=CartesianGrid2D(a=0.5, N=64), ic=IC2,
                         t_final=0.01)
