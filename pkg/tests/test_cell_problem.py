import numpy as np
import pytest

from homogwave.assembly import Grid, pcg
from homogwave.cell_problem import (
    flux,
    rescale_solution,
    solve_periodic_cell,
    solve_truncated_cell,
)
from homogwave.coefficient_fields import OscillatingMatrixField, Profile, Wave
from homogwave.errors import InputError, SolverError

SQRT3 = np.sqrt(3.0)
A1D = OscillatingMatrixField.isotropic(Profile.cosine(2.0, 1.0, 1))
LAM = Profile.cosine(2.0, 1.0, (1, 0), dim=2)
LAMINATE = OscillatingMatrixField.diagonal(LAM, LAM)


@pytest.mark.parametrize("j", [0, 1])
def test_identity_gives_zero_corrector(j):
    sol = solve_truncated_cell(OscillatingMatrixField.constant(np.eye(2)), None, j, 2.0, 16)
    assert np.all(sol.values == 0.0)
    assert sol.residual == 0.0


def test_truncated_1d_matches_closed_form_in_interior():
    sol = solve_truncated_cell(A1D, None, 0, 8.0, 1024)
    assert sol.values[0] == 0.0 and sol.values[-1] == 0.0
    assert sol.residual <= 1e-10
    assert np.abs(sol.values).max() > 1e-3
    # chi' = sqrt3 / a - 1 away from the walls
    y = -8.0 + (np.arange(1024) + 0.5) * sol.grid.h
    inner = np.abs(y) < 4
    exact = SQRT3 / (2 + np.cos(2 * np.pi * y)) - 1
    assert np.abs(sol.gradient[0][inner] - exact[inner]).max() < 5e-3


def test_gradient_energy_bounded_over_radii():
    energies = [solve_truncated_cell(A1D, None, 0, R, int(128 * R)).gradient_energy() for R in (4, 8, 16)]
    assert max(energies) / min(energies) < 1.1
    # the periodic corrector energy is M((sqrt3/a - 1)^2) = 2/sqrt3 - 1
    assert energies[-1] == pytest.approx(2 / SQRT3 - 1, rel=1e-2)


def test_laminate_transverse_corrector_vanishes():
    sol = solve_truncated_cell(LAMINATE, None, 1, 2.0, 64)
    assert np.abs(sol.values).max() < 1e-12
    along = solve_truncated_cell(LAMINATE, None, 0, 2.0, 64)
    # away from the transverse walls the corrector depends on y1 only
    inner = along.values[:, 16:49]
    assert np.abs(inner - along.values[:, [32]]).max() < 1e-2 * np.abs(along.values).max()


def test_periodic_constant_is_zero():
    sol = solve_periodic_cell(OscillatingMatrixField.isotropic(Profile.const(3.0)), None, 0, 32)
    assert np.all(sol.values == 0.0)


def test_periodic_1d_constant_flux():
    sol = solve_periodic_cell(A1D, None, 0, 1024)
    q = flux(sol).edge[0]
    assert np.ptp(q) < 1e-9
    assert q.mean() == pytest.approx(SQRT3, abs=1e-4)
    assert abs(sol.mean) < 1e-12


@pytest.mark.parametrize("j", [0, 1])
def test_periodic_2d_smooth_field(j):
    a = Profile(2.0, (Wave(0.5, (1, 1)), Wave(0.5, (1, -1))), dim=2)  # 2 + cos(2 pi y1) cos(2 pi y2)
    fld = OscillatingMatrixField.isotropic(a)
    sol = solve_periodic_cell(fld, None, j, 64)
    assert sol.residual <= 1e-10
    assert abs(sol.values.mean()) < 1e-10
    div = flux(sol).divergence()
    assert np.abs(div).max() < 1e-8


def test_periodic_rejects_non_periodic_field():
    q = OscillatingMatrixField.isotropic(Profile(2.5, (Wave(1.0, (1.0,)), Wave(1.0, (np.sqrt(2),)))), alpha=0.5)
    with pytest.raises(InputError):
        solve_periodic_cell(q, None, 0, 64)


def test_rescale_identity_and_zero():
    sol = solve_truncated_cell(A1D, None, 0, 1.0, 64)
    w = rescale_solution(sol)
    np.testing.assert_array_equal(w.values, sol.values)
    z = rescale_solution(solve_truncated_cell(OscillatingMatrixField.constant([[2.0]]), None, 0, 4.0, 32))
    assert np.all(z.values == 0)
    with pytest.raises(InputError):
        rescale_solution(solve_periodic_cell(A1D, None, 0, 32))


def test_rescaled_l2_norm_decreases_with_radius():
    norms = []
    for R in (4, 8, 16):
        w = rescale_solution(solve_truncated_cell(A1D, None, 0, R, int(64 * R)))
        norms.append(np.sqrt((w.values**2).mean() * 2))
    assert norms[0] > norms[1] > norms[2]


def test_identity_flux_is_unit_vector():
    sol = solve_truncated_cell(OscillatingMatrixField.constant(np.eye(2)), None, 0, 1.0, 8)
    q = flux(sol)
    assert np.all(q.edge[0] == 1.0) and np.all(q.edge[1] == 0.0)


def test_flux_linearity_in_direction():
    a = Profile(2.0, (Wave(0.5, (1, 1)), Wave(0.5, (1, -1))), dim=2)
    off = Profile.cosine(0.0, 0.3, (0, 1), dim=2)
    fld = OscillatingMatrixField.from_entries({(0, 0): a, (1, 1): a, (0, 1): off}, 2, alpha=0.5)
    xi = np.array([0.3, -1.2])
    s0, s1 = (solve_truncated_cell(fld, None, j, 1.0, 24, tol=1e-12) for j in (0, 1))
    sx = solve_truncated_cell(fld, None, xi, 1.0, 24, tol=1e-12)
    np.testing.assert_allclose(sx.values, xi[0] * s0.values + xi[1] * s1.values, atol=1e-9)
    qx, q0, q1 = flux(sx), flux(s0), flux(s1)
    for d in range(2):
        np.testing.assert_allclose(qx.edge[d], xi[0] * q0.edge[d] + xi[1] * q1.edge[d], atol=1e-9)


def test_interpolation_reproduces_nodes_and_wraps():
    sol = solve_periodic_cell(A1D, None, 0, 64)
    nodes = sol.grid.node_coords()[0].ravel()
    np.testing.assert_allclose(sol.interpolate(nodes), sol.values, atol=1e-14)
    np.testing.assert_allclose(sol.interpolate(nodes + 3.0), sol.values, atol=1e-12)
    tr = solve_truncated_cell(A1D, None, 0, 1.0, 16)
    with pytest.raises(InputError):
        tr.interpolate(np.array([2.0]))


def test_solver_failure_reports_residual():
    sol = solve_truncated_cell(A1D, None, 0, 8.0, 256)
    op = sol.operator
    with pytest.raises(SolverError) as err:
        pcg(op.system, op.rhs(np.array([1.0]))[op.free], tol=1e-14, maxiter=3)
    assert err.value.iterations == 3


def test_bad_inputs():
    with pytest.raises(InputError):
        solve_truncated_cell(A1D, None, 2, 1.0, 8)
    with pytest.raises(InputError):
        solve_truncated_cell(A1D, None, 0, 1.0, 8, tol=0)
    with pytest.raises(InputError):
        Grid.box(-1.0, 8, 1)
