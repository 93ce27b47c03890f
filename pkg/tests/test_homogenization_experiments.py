from dataclasses import replace

import numpy as np
import pytest

from homogwave.assembly import Grid
from homogwave.cell_problem import solve_periodic_cell
from homogwave.coefficient_fields import DiffusionField, OscillatingMatrixField, Profile
from homogwave.errors import InputError, PreconditionError
from homogwave.homogenization_experiments import (
    PRESETS,
    compare_epsilon_sweep,
    corrector_gain,
    corrector_reconstruction,
    homogenized_data,
    preset_scenario,
)

SQRT3 = np.sqrt(3.0)


@pytest.mark.parametrize("name", list(PRESETS))
def test_presets_construct_and_validate(name):
    sc = preset_scenario(name)
    sc.validate()
    assert sc.paths >= 8
    assert all(b < a for a, b in zip(sc.eps, sc.eps[1:]))


def test_problem1_components():
    sc = preset_scenario("Problem1")
    y, tau = np.array([0.0, 0.25]), np.array([0.0, 0.25])
    np.testing.assert_allclose(sc.field(None, y)[:, 0, 0], [3.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(sc.drift(y, tau, 1.0), [6.0, 2.0], atol=1e-15)
    sigma = sc.diffusion.modes[0].weight
    np.testing.assert_allclose(sc.diffusion(0, y, tau, 1.0), [2 * sigma, 3 * sigma], atol=1e-15)


def test_problem3_time_factor_limit():
    sc = preset_scenario("problem3")
    t = sc.drift.rate.time
    assert t(np.array(0.0)) == pytest.approx(2.5)
    assert t(np.array(40.0)) == pytest.approx(1.5, abs=1e-12)
    assert t.mean() == 1.5


def test_problem5_asymptotic_field():
    sc = preset_scenario("problem5")
    assert sc.field.structure == "asymptotic"
    a = sc.field.entries[0][0]
    assert a(np.array(0.0)) == pytest.approx(4.0)
    assert a(np.array(60.0)) == pytest.approx(3.0, abs=1e-12)


def test_unknown_preset():
    with pytest.raises(InputError):
        preset_scenario("problem9")


@pytest.mark.parametrize("change", [dict(eps=(1 / 8, 1 / 8)), dict(eps=(1 / 16, 1 / 8)), dict(paths=4),
                                    dict(deltas=(0.1, 0.0)), dict(basis="haar"), dict(dt=0.3)])
def test_scenario_invariants(change):
    with pytest.raises(InputError):
        replace(preset_scenario("problem1"), **change)


def test_reconstruction_trivial_cases():
    grid = Grid.domain(32, 1)
    snaps = [np.sin(np.pi * grid.node_coords()[0]), np.cos(grid.node_coords()[0])]
    zero = solve_periodic_cell(OscillatingMatrixField.constant([[2.0]]), None, 0, 16)
    np.testing.assert_array_equal(corrector_reconstruction(snaps, grid, [zero], 0.1), np.array(snaps))
    cell = solve_periodic_cell(OscillatingMatrixField.isotropic(Profile.cosine(2.0, 1.0, 1)), None, 0, 64)
    flat = [np.full(grid.size, 0.7)]
    np.testing.assert_allclose(corrector_reconstruction(flat, grid, [cell], 0.1), np.array(flat), atol=1e-15)
    with pytest.raises(InputError):
        corrector_reconstruction([], grid, [cell], 0.1)


def test_reconstruction_improves_gradient():
    sc = preset_scenario("problem1")
    rep = corrector_gain(sc, 1 / 16)
    assert rep.improvement > 2.0
    raw = corrector_gain(sc, 1 / 16, prepared=False)
    assert raw.improvement > 1.0


def test_constant_scenario_is_exact():
    sc = replace(preset_scenario("constant"), eps=(1 / 4, 1 / 8), paths=8, T=0.25, dt=1 / 128)
    res = compare_epsilon_sweep(sc)
    assert res.errors.max() <= 1e-12
    assert res.verdict == "PASS"


def test_under_resolved_request_refused():
    sc = replace(preset_scenario("problem1"), n=64)
    with pytest.raises(PreconditionError, match="n >= 512"):
        compare_epsilon_sweep(sc)


def test_deterministic_limit_trend():
    sc = replace(preset_scenario("problem1"), diffusion=DiffusionField.zero(), paths=8, T=0.5)
    res = compare_epsilon_sweep(sc, threads=3)
    e = res.errors[:, 0]
    assert np.all(res.errors == res.errors[:, :1])
    assert e[0] > e[1] > e[2]
    assert e[2] <= e[0] / 2
    assert res.tensor[0, 0] == pytest.approx(SQRT3, abs=1e-4)


def test_sweep_is_seed_deterministic():
    sc = replace(preset_scenario("problem1"), eps=(1 / 4, 1 / 8), paths=8, T=0.25, dt=1 / 256)
    a = compare_epsilon_sweep(sc)
    b = compare_epsilon_sweep(sc, threads=2)
    np.testing.assert_array_equal(a.errors, b.errors)
    c = compare_epsilon_sweep(replace(sc, seed=1))
    assert not np.array_equal(a.errors, c.errors)
    assert a.prob.shape == (2, 3)


def test_truncated_data_for_quasiperiodic_preset():
    sc = preset_scenario("problem2")
    data = homogenized_data(sc)
    assert data.tensor.provenance == "truncated"
    assert data.cauchy <= sc.cauchy_tol
    assert data.tensor.matrix[0, 0] == pytest.approx(1.9681177518, abs=1e-2)
    with pytest.raises(PreconditionError):
        homogenized_data(replace(sc, cauchy_tol=1e-9))
