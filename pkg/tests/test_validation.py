"""Validation harness: restriction, error reports, oracles, DOF estimates."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapdiff.errors import ConfigurationError
from trapdiff.potential import PotentialSpec, saturated_M
from trapdiff.solver_full import GaussianIC
from trapdiff import validation as val

IC = GaussianIC(v0=1e-6, sigma=0.1, x_m=0.5)


def test_conservative_restriction_preserves_mass():
    rng = np.random.default_rng(3)
    fine_faces = np.linspace(0.0, 1.0, 201)
    c_fine = rng.random(200)
    coarse_faces = np.linspace(0.0, 1.0, 51)
    c_coarse = val._conservative_restriction(fine_faces, c_fine, coarse_faces)
    mass_fine = np.sum(c_fine * np.diff(fine_faces))
    mass_coarse = np.sum(c_coarse * np.diff(coarse_faces))
    assert mass_coarse == pytest.approx(mass_fine, rel=1e-13)


@given(scale=st.floats(min_value=0.1, max_value=10.0))
@settings(max_examples=20, deadline=None)
def test_conservative_restriction_exact_on_constants(scale):
    fine_faces = np.linspace(0.0, 1.0, 101)
    coarse_faces = np.linspace(0.0, 1.0, 11)
    c = val._conservative_restriction(fine_faces, np.full(100, scale),
                                      coarse_faces)
    assert np.allclose(c, scale, rtol=1e-13)


def test_compare_models_smoke():
    full, ms = val.build_comparison_pair(M=1.0, eps=4e-3, ic=IC, t_final=0.01,
                                         dx=2e-4)
    rep = val.compare_models_1d(full, ms, [0.005, 0.01])
    assert rep.times.tolist() == [0.005, 0.01]
    assert np.all(rep.e_S >= 0) and np.all(rep.e_B >= 0)
    assert rep.final_error < 0.1
    assert rep.meta["eps"] == 4e-3


def test_compare_models_rejects_unresolved_grid():
    full, ms = val.build_comparison_pair(M=1.0, eps=1e-4, ic=IC, t_final=0.01,
                                         dx=2e-4)
    with pytest.raises(ConfigurationError):
        val.compare_models_1d(full, ms, [0.01])


def test_steady_state_oracle_1d():
    c_inf, frac = val.steady_state_oracle(M=3.0, v0=2.0)
    assert c_inf == pytest.approx(0.5)
    assert frac == pytest.approx(0.75)


def test_steady_state_oracle_2d():
    R, area = 0.25, 1.0 - np.pi * 0.25**2
    c_inf, frac = val.steady_state_oracle(M=1.0, v0=1.0, dimension=2, R=R,
                                          box_area=area)
    assert c_inf * (area + 2 * np.pi * R * 1.0) == pytest.approx(1.0)
    assert 0 < frac < 1


def test_steady_state_oracle_saturated_reduces_to_linear():
    spec = PotentialSpec(phi=6.0, epsilon=1e-3, L=2.0)
    M = saturated_M(spec, 0.0)
    c_lin, f_lin = val.steady_state_oracle(M=M, v0=1e-9)
    c_sat, f_sat = val.steady_state_oracle(M=M, v0=1e-9, spec=spec)
    assert c_sat == pytest.approx(c_lin, rel=1e-4)
    assert f_sat == pytest.approx(f_lin, rel=1e-4)


def test_dof_estimates():
    e1 = val.dof_estimate(1, 10, 100, 1e-6)
    assert e1.dof_amr == 110 and e1.dof_multiscale == 101
    e2 = val.dof_estimate(2, 10, 100, 1e-6)
    assert e2.dof_amr == pytest.approx(1e8, rel=0.2)
    assert e2.dof_multiscale == pytest.approx(1e4, rel=0.2)
    e3 = val.dof_estimate(3, 10, 100, 1e-6)
    assert e3.dof_amr == pytest.approx(1e15, rel=0.2)
    assert e3.dof_multiscale == pytest.approx(1e6, rel=0.2)
    with pytest.raises(ConfigurationError):
        val.dof_estimate(4, 10, 100, 1e-6)


def test_power_law_exponent():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert val.power_law_exponent(x, 3.0 * x**1.7) == pytest.approx(1.7)


def test_self_convergence_order_synthetic():
    # second-order field: error against the exact profile scales like h^2
    def sample(n):
        x = (np.arange(n) + 0.5) / n
        return np.sin(2 * np.pi * x) + (1.0 / n) ** 2 * np.cos(2 * np.pi * x)

    order = val.self_convergence_order(sample(100), sample(200), sample(400))
    assert order == pytest.approx(2.0, abs=0.15)


def test_entrapped_fraction_series():
    series = np.array([[0.1, 0.9, 0.1], [0.2, 0.8, 0.2]])
    out = val.entrapped_fraction_series(series, v0=0.5)
    assert out[0].tolist() == [0.1, 0.2]
    assert out[1].tolist() == [0.2, 0.4]


def test_csv_writers_roundtrip(tmp_path):
    full, ms = val.build_comparison_pair(M=1.0, eps=4e-3, ic=IC, t_final=0.01,
                                         dx=2e-4)
    rep = val.compare_models_1d(full, ms, [0.01])
    path = tmp_path / "errors.csv"
    val.write_error_report(rep, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "e_S", "e_B"]
    assert float(rows[1][0]) == 0.01
    # 17 significant digits survive a write/read cycle bit-exactly
    assert float(rows[1][1]) == rep.e_S[0]
