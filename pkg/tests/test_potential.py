"""Potential, trap-capacity integrals, and coefficient inversions."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapdiff.errors import ConfigurationError
from trapdiff.potential import (
    PotentialSpec,
    boltzmann_cell_averages,
    eval_U,
    face_resistances,
    max_drift_slope,
    peclet_number,
    peclet_ok,
    saturated_capacity_I,
    saturated_M,
    solve_phi_for_M,
    sutherland_constant,
    tail_ratio,
    trap_capacity_I,
    trap_coefficient_M,
)


def test_potential_shape():
    # minimum of depth -phi at xi = 1, zero past the cutoff
    spec = PotentialSpec(phi=5.0, epsilon=1e-3, L=2.0)
    assert eval_U(spec, 1.0) == pytest.approx(-5.0, rel=1e-14)
    assert eval_U(spec, spec.L + 1.0 + 1e-12) == 0.0
    # repulsive on the inner branch, attractive well on the outer branch
    assert eval_U(spec, 0.8) > 0.0
    assert eval_U(spec, 1.5) < 0.0


def test_capacity_identity_zero_potential():
    # I_L(0) = integral of 1 over (0, L+1] = L+1
    for L in (1.0, 2.0, 4.0):
        assert trap_capacity_I(0.0, L) == pytest.approx(L + 1.0, rel=1e-12)


def test_trap_coefficient_scales_with_epsilon():
    I = trap_capacity_I(6.0, 2.0)
    for eps in (1e-2, 1e-3, 1e-4):
        spec = PotentialSpec(phi=6.0, epsilon=eps, L=2.0)
        assert trap_coefficient_M(spec) == pytest.approx(eps * I, rel=1e-13)


def test_saturated_capacity_limits():
    # c_B -> 0 recovers the linear integral; c_B = 1 gives the hard cap
    phi, L = 8.0, 2.0
    assert saturated_capacity_I(phi, L, 0.0) == pytest.approx(
        trap_capacity_I(phi, L), rel=1e-12)
    assert saturated_capacity_I(phi, L, 1.0) == pytest.approx(L + 1.0, rel=1e-10)


def test_saturated_capacity_bound():
    # strict bound away from c_B = 1, where equality I = L + 1 is attained
    phi, L = 10.0, 2.0
    grid = np.linspace(1e-3, 1.0 - 1e-3, 100)
    vals = np.array([saturated_capacity_I(phi, L, c) for c in grid])
    assert np.all(vals < (L + 1.0) / grid)


def test_phi_M_round_trip():
    for phi in (6.0, 10.0, 14.0):
        spec = PotentialSpec(phi=phi, epsilon=1e-3, L=2.0)
        M = trap_coefficient_M(spec)
        assert solve_phi_for_M(M, 1e-3, 2.0) == pytest.approx(phi, rel=1e-8)


@given(phi=st.floats(min_value=0.5, max_value=12.0),
       c_B=st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=30, deadline=None)
def test_saturated_below_linear(phi, c_B):
    spec = PotentialSpec(phi=phi, epsilon=1e-3, L=2.0)
    assert saturated_M(spec, c_B) <= trap_coefficient_M(spec) * (1 + 1e-12)


def test_sutherland_constant_positive_and_tail_ratio():
    spec = PotentialSpec(phi=10.0, epsilon=1e-3, L=2.0)
    assert sutherland_constant(spec) > 0.0
    r = tail_ratio(10.0, 2.0)
    assert 0.0 < r.value < 1.0  # the cutoff tail is a small fraction


def test_peclet_predicate():
    spec = PotentialSpec(phi=14.0, epsilon=1e-4, L=2.0)
    assert max_drift_slope(spec) > 0
    assert peclet_number(spec, 1e-3) > 2.0
    assert not peclet_ok(spec, 1e-3)
    assert peclet_ok(spec, 1e-7)


def test_boltzmann_cell_averages_integrate_capacity():
    # summing h * cell-averaged weights over the support recovers eps * I_L
    spec = PotentialSpec(phi=6.0, epsilon=1e-2, L=2.0)
    xi_faces = np.linspace(0.0, spec.L + 1.0, 301)
    w, cent = boltzmann_cell_averages(spec, xi_faces)
    h_xi = xi_faces[1] - xi_faces[0]
    total = np.sum(w) * h_xi
    assert total == pytest.approx(trap_capacity_I(spec.phi, spec.L), rel=1e-6)
    assert np.all(cent >= xi_faces[:-1]) and np.all(cent <= xi_faces[1:])


def test_face_resistances_match_flat_region():
    # where U = 0 the resistance of a segment is just its length
    spec = PotentialSpec(phi=4.0, epsilon=1e-2, L=2.0)
    seg = np.array([spec.L + 1.5, spec.L + 2.5, spec.L + 4.0])
    res = face_resistances(spec, seg)
    assert res == pytest.approx(np.diff(seg), rel=1e-12)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        PotentialSpec(phi=-1.0, epsilon=1e-3, L=2.0)
    with pytest.raises(ConfigurationError):
        PotentialSpec(phi=1.0, epsilon=0.0, L=2.0)
