"""Grids, circle classification, projections, and ghost stencils."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapdiff.errors import ConfigurationError
from trapdiff.geometry import (
    GHOST,
    INACTIVE,
    INSIDE,
    CartesianGrid2D,
    CircleLevelSet,
    Interval1D,
    classify,
    ghost_interpolation_stencil,
    project_to_boundary,
)


def test_interval_mesh():
    g = Interval1D(x_left=0.0, n_cells=10)
    assert g.h == pytest.approx(0.1)
    assert g.centers()[0] == pytest.approx(0.05)
    assert g.faces()[-1] == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        Interval1D(x_left=0.0, n_cells=0)


def test_square_grid():
    g = CartesianGrid2D(a=0.5, N=100)
    assert g.h == pytest.approx(0.01)
    c = g.centers_1d()
    assert c[0] == pytest.approx(-0.5 + 0.005)
    assert c[-1] == pytest.approx(0.5 - 0.005)


def test_classification_against_brute_force():
    grid = CartesianGrid2D(a=0.5, N=64)
    ls = CircleLevelSet(radius=0.25)
    cls = classify(grid, ls)
    x = grid.centers_1d()
    for i in range(grid.N):
        for j in range(grid.N):
            inside_bubble = np.hypot(x[i], x[j]) < ls.radius
            if not inside_bubble:
                assert cls.labels[i, j] == INSIDE
            else:
                nb_fluid = any(
                    0 <= i + di < grid.N and 0 <= j + dj < grid.N
                    and np.hypot(x[i + di], x[j + dj]) >= ls.radius
                    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                )
                expect = GHOST if nb_fluid else INACTIVE
                assert cls.labels[i, j] == expect


def test_projections_lie_on_circle():
    grid = CartesianGrid2D(a=0.5, N=64)
    ls = CircleLevelSet(radius=0.25)
    cls = classify(grid, ls)
    r = np.hypot(cls.projections[:, 0], cls.projections[:, 1])
    assert np.allclose(r, ls.radius, atol=1e-14)
    # normals are unit and point outward (from bubble into the fluid)
    assert np.allclose(np.hypot(cls.normals[:, 0], cls.normals[:, 1]), 1.0)
    assert cls.curvature == pytest.approx(1.0 / ls.radius)


@given(x=st.floats(-1, 1), y=st.floats(-1, 1))
@settings(max_examples=50, deadline=None)
def test_project_to_boundary_idempotent(x, y):
    ls = CircleLevelSet(radius=0.3)
    if np.hypot(x, y) < 1e-9:
        return
    proj, normal, theta, kappa = project_to_boundary(ls, (x, y))
    proj2, _, _, _ = project_to_boundary(ls, proj)
    assert np.hypot(proj[0] - proj2[0], proj[1] - proj2[1]) < 1e-12
    assert kappa == pytest.approx(1.0 / 0.3)


def test_unresolved_circle_rejected():
    grid = CartesianGrid2D(a=0.5, N=16)  # h = 0.0625 >= R/4
    with pytest.raises(ConfigurationError):
        classify(grid, CircleLevelSet(radius=0.25))


def test_ghost_stencil_biquadratic_exactness():
    """Weights reproduce value and normal derivative of any biquadratic."""
    grid = CartesianGrid2D(a=0.5, N=80)
    ls = CircleLevelSet(radius=0.25)
    cls = classify(grid, ls)
    x = grid.centers_1d()
    rng = np.random.default_rng(7)
    coeff = rng.standard_normal((3, 3))

    def poly(px, py):
        return sum(coeff[m, n] * px**m * py**n for m in range(3) for n in range(3))

    def grad(px, py):
        gx = sum(m * coeff[m, n] * px ** (m - 1) * py**n
                 for m in range(1, 3) for n in range(3))
        gy = sum(n * coeff[m, n] * px**m * py ** (n - 1)
                 for m in range(3) for n in range(1, 3))
        return gx, gy

    for k in range(len(cls.ghost_indices)):
        st_ = ghost_interpolation_stencil(grid, cls, k)
        vals = np.array([poly(x[i], x[j]) for i, j in st_.indices])
        proj = cls.projections[k]
        normal = cls.normals[k]
        got_v = float(st_.value_weights @ vals)
        assert got_v == pytest.approx(poly(*proj), rel=1e-9, abs=1e-11)
        if st_.biquadratic:
            gx, gy = grad(*proj)
            want_dn = normal[0] * gx + normal[1] * gy
            got_dn = float(st_.normal_weights @ vals)
            assert got_dn == pytest.approx(want_dn, rel=1e-8, abs=1e-9)


def test_ghost_stencil_partition_of_unity():
    grid = CartesianGrid2D(a=0.5, N=64)
    ls = CircleLevelSet(radius=0.25)
    cls = classify(grid, ls)
    for k in range(len(cls.ghost_indices)):
        st_ = ghost_interpolation_stencil(grid, cls, k)
        assert np.sum(st_.value_weights) == pytest.approx(1.0, abs=1e-11)
        assert np.sum(st_.normal_weights) == pytest.approx(0.0, abs=1e-8)
        # the stencil must couple the ghost unknown itself
        gi, gj = cls.ghost_indices[k]
        assert any((i, j) == (gi, gj) for i, j in st_.indices)
