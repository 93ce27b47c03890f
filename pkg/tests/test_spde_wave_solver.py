import numpy as np
import pytest

from homogwave.assembly import Grid
from homogwave.coefficient_fields import (
    DiffusionField,
    DriftField,
    OscillatingMatrixField,
    Profile,
    Rate,
)
from homogwave.errors import BlowUpError, InputError
from homogwave.spde_wave_solver import (
    NoiseModel,
    Norms,
    WaveState,
    brownian_increments,
    discrete_energy,
    homogenized_system,
    oscillatory_system,
    path_increments,
    run,
    sine_mode_indices,
    step,
    step_count,
)

EYE1 = OscillatingMatrixField.constant([[1.0]])
QUIET = NoiseModel(DiffusionField.zero())
A1D = OscillatingMatrixField.isotropic(Profile.cosine(2.0, 1.0, 1))


def sine(x, *rest):
    out = np.sin(np.pi * x)
    for c in rest:
        out = out * np.sin(np.pi * c)
    return out


def multiplicative(sigmas, drift=0.0):
    g = DiffusionField.uniform(Profile.const(1.0), Profile.const(1.0), sigmas)
    f = DriftField(Rate(Profile.const(drift))) if drift else DriftField.zero()
    return f, NoiseModel(g)


@pytest.fixture(scope="module")
def eigen_run():
    grid = Grid.domain(256, 1)
    sys_ = homogenized_system(grid, np.eye(1), None, QUIET)
    rec = run(WaveState.from_functions(grid, sine), sys_, 1.0, 1 / 1024)
    return grid, sys_, rec


def test_eigenmode_reaches_negated_profile(eigen_run):
    grid, _, rec = eigen_run
    err = Norms(grid).l2(rec.final.u + sine(grid.node_coords()[0]))
    assert err <= 5e-3


def test_energy_drift_and_value(eigen_run):
    _, _, rec = eigen_run
    e = rec.energy
    assert np.abs(e - e[0]).max() / e[0] <= 1e-3
    assert e[0] == pytest.approx(np.pi**2 / 4, rel=1e-4)


def test_time_reversal_returns_to_start(eigen_run):
    grid, sys_, rec = eigen_run
    back = WaveState(rec.final.u.copy(), -rec.final.v, 0.0)
    for _ in range(1024):
        back = step(back, sys_, 1 / 1024)
    start = WaveState.from_functions(grid, sine)
    assert np.abs(back.u - start.u).max() < 1e-10
    e0 = discrete_energy(start, sys_)
    assert abs(discrete_energy(back, sys_) - e0) < 1e-10


def test_two_dimensional_eigenmode():
    grid = Grid.domain(64, 2)
    sys_ = homogenized_system(grid, np.eye(2), None, QUIET)
    rec = run(WaveState.from_functions(grid, sine), sys_, 0.5, 1 / 256)
    x, y = grid.node_coords()
    exact = np.cos(np.pi * np.sqrt(2) * 0.5) * sine(x, y).ravel()
    assert Norms(grid).l2(rec.final.u - exact) < 5e-3


def test_zero_state_stays_zero():
    grid = Grid.domain(32, 1)
    f, noise = multiplicative([0.5, 0.25], drift=1.0)
    sys_ = oscillatory_system(grid, A1D, f, noise, 1 / 4)
    rec = run(WaveState.zero(grid, paths=4), sys_, 0.25, 1 / 64, seed=3)
    assert np.all(rec.final.u == 0.0) and np.all(rec.final.v == 0.0)


def test_oscillatory_energy_conservation():
    grid = Grid.domain(256, 1)
    sys_ = oscillatory_system(grid, A1D, DriftField.zero(), QUIET, 1 / 8)
    rec = run(WaveState.from_functions(grid, sine), sys_, 1.0, 1 / 1024, stride=16)
    assert np.abs(rec.energy - rec.energy[0]).max() / rec.energy[0] <= 1e-3


def test_noise_mean_matches_deterministic_small():
    grid = Grid.domain(32, 1)
    f, noise = multiplicative([0.5], drift=1.0)
    noisy = oscillatory_system(grid, EYE1, f, noise, 1.0)
    det = oscillatory_system(grid, EYE1, f, QUIET, 1.0)
    paths = 256
    rec = run(WaveState.from_functions(grid, sine, paths=paths), noisy, 0.5, 1 / 128, seed=11)
    ref = run(WaveState.from_functions(grid, sine), det, 0.5, 1 / 128)
    proj = rec.final.u[16]
    se = proj.std(ddof=1) / np.sqrt(paths)
    assert abs(proj.mean() - ref.final.u[16]) <= 3 * se


def test_moment_monitors_stable_over_eps():
    f, noise = multiplicative([0.5])
    tops = []
    for eps in (1 / 4, 1 / 8, 1 / 16):
        grid = Grid.domain(256, 1)
        sys_ = oscillatory_system(grid, A1D, f, noise, eps)
        rec = run(WaveState.from_functions(grid, sine, paths=64), sys_, 1.0, 1 / 256, seed=5, stride=64)
        top = rec.sup4_h1[-1].max()
        assert np.isfinite(top)
        # running sup is non-decreasing in time
        assert np.all(np.diff(rec.sup4_h1, axis=0) >= 0)
        tops.append(top)
    assert max(tops) / min(tops) < 3.0


def test_increment_streams_are_deterministic_and_disjoint():
    a = brownian_increments(7, 100, 3, 0.01, path=2, stream=1)
    b = brownian_increments(7, 100, 3, 0.01, path=2, stream=1)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, brownian_increments(7, 100, 3, 0.01, path=2, stream=2))
    assert not np.array_equal(a, brownian_increments(7, 100, 3, 0.01, path=3, stream=1))
    batch = path_increments(7, 100, 3, 0.01, 4, stream=1)
    np.testing.assert_array_equal(batch[:, :, 2], a)
    assert a.std() == pytest.approx(0.1, rel=0.15)


def test_sine_modes_are_orthonormal():
    grid = Grid.domain(128, 1)
    e = NoiseModel(DiffusionField.uniform(Profile.const(1.0), Profile.const(1.0), [1, 1, 1])).spatial_modes(grid)
    gram = e @ e.T * grid.h
    np.testing.assert_allclose(gram, np.eye(3), atol=1e-12)
    assert sine_mode_indices(3, 2) == [(1, 1), (1, 2), (2, 1)]


def test_norms_of_sine():
    grid = Grid.domain(512, 1)
    n = Norms(grid)
    u = sine(grid.node_coords()[0])
    assert n.h1(u) == pytest.approx(np.pi / np.sqrt(2), rel=1e-4)
    assert n.l2(u) == pytest.approx(1 / np.sqrt(2), rel=1e-4)


def test_argument_errors():
    grid = Grid.domain(16, 1)
    f, noise = multiplicative([1.0])
    sys_ = oscillatory_system(grid, EYE1, f, noise, 0.5)
    s = WaveState.from_functions(grid, sine)
    with pytest.raises(InputError):
        step(s, sys_, 0.1)
    with pytest.raises(InputError):
        step(s, sys_, 0.0, np.zeros(1))
    with pytest.raises(InputError):
        step_count(1.0, 0.3)
    with pytest.raises(InputError):
        run(s, sys_, 1.0, 0.25, increments=np.zeros((2, 1)))
    with pytest.raises(InputError):
        oscillatory_system(Grid.unit_cell(16, 1), EYE1, f, noise, 0.5)
    with pytest.raises(InputError):
        homogenized_system(grid, np.eye(2), None, QUIET)
    with pytest.raises(InputError):
        NoiseModel(DiffusionField.zero(), basis="fourier")


def test_blow_up_detected():
    grid = Grid.domain(8, 1)
    sys_ = oscillatory_system(grid, EYE1, DriftField(Rate(Profile.const(1e300))), QUIET, 1.0)
    s = WaveState.from_functions(grid, sine)
    with pytest.raises(BlowUpError):
        for _ in range(10):
            s = step(s, sys_, 1e10)
