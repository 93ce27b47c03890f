"""Corrector (cell) problems: truncated Dirichlet boxes and the periodic unit cell."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assembly import EllipticOperatorAssembly, FaceFlux, Grid, pcg
from .coefficient_fields import OscillatingMatrixField, min_rayleigh
from .errors import InputError

DEFAULT_TOL = 1e-10


@dataclass
class CellSolution:
    """Nodal corrector for the macroscopic direction ``xi``."""

    xi: np.ndarray
    grid: Grid
    values: np.ndarray
    gradient: tuple[np.ndarray, ...]
    residual: float
    iterations: int
    operator: EllipticOperatorAssembly | None
    R: float | None = None
    x_sample: tuple[float, ...] | None = None
    tol: float = DEFAULT_TOL

    @property
    def direction(self) -> int | None:
        """Index j when ``xi`` is the canonical vector e_j, else None."""
        nz = np.flatnonzero(self.xi)
        if nz.size == 1 and self.xi[nz[0]] == 1.0:
            return int(nz[0])
        return None

    @property
    def periodic(self) -> bool:
        return self.grid.periodic

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    def gradient_energy(self) -> float:
        """(1/|box|) * integral of |grad chi|^2, edge quadrature."""
        g = self.grid
        total = 0.0
        tw = g.transverse_weights()
        for d, gd in enumerate(self.gradient):
            w = np.ones(gd.shape)
            for k in range(g.dim):
                if k != d:
                    shape = [1] * g.dim
                    shape[k] = g.points
                    w = w * tw.reshape(shape)
            total += float((w * gd**2).sum()) * g.h**g.dim
        return total / g.side**g.dim

    def interpolate(self, y) -> np.ndarray:
        """Multilinear interpolation of the nodal corrector at points ``y``.

        Periodic solutions are extended periodically; truncated solutions
        require the points to lie inside their box.
        """
        g = self.grid
        coords = y if isinstance(y, (tuple, list)) else (y,)
        coords = [np.asarray(c, dtype=float) for c in coords]
        if len(coords) != g.dim:
            raise InputError("interpolation points do not match the grid dimension")
        idx, frac = [], []
        for c in coords:
            s = (c - g.lower) / g.h
            if g.periodic:
                s = np.mod(s, g.n)
            elif np.any(s < -1e-9) or np.any(s > g.n + 1e-9):
                raise InputError("interpolation point outside the truncated box")
            i = np.clip(np.floor(s).astype(int), 0, g.n - 1)
            idx.append(i)
            frac.append(s - i)
        out = 0.0
        for corner in np.ndindex(*(2,) * g.dim):
            w = 1.0
            sel = []
            for d, bit in enumerate(corner):
                w = w * (frac[d] if bit else 1 - frac[d])
                j = idx[d] + bit
                sel.append(np.mod(j, g.n) if g.periodic else j)
            out = out + w * self.values[tuple(sel)]
        return out


def _direction(j, dim: int) -> np.ndarray:
    if np.ndim(j) == 0:
        j = int(j)
        if not 0 <= j < dim:
            raise InputError(f"direction index {j} outside 0..{dim - 1}")
        xi = np.zeros(dim)
        xi[j] = 1.0
        return xi
    xi = np.asarray(j, dtype=float)
    if xi.shape != (dim,):
        raise InputError(f"direction vector must have {dim} components")
    return xi


def _sampler(field: OscillatingMatrixField, x_sample):
    return lambda coords: field(x_sample, coords)


def _probe(field: OscillatingMatrixField, x_sample, grid: Grid) -> None:
    q = min_rayleigh(field(x_sample, grid.node_coords()))
    if q < field.alpha * (1 - 1e-12):
        raise InputError(f"ellipticity probe failed on the cell grid: {q:.6g} < alpha = {field.alpha:.6g}")


def _solve(op: EllipticOperatorAssembly, xi, tol, maxiter):
    grid = op.grid
    b = op.rhs(xi)
    values = np.zeros(grid.size)
    x, res, its = pcg(op.system, b[op.free], tol=tol, maxiter=maxiter, project_mean=grid.periodic)
    values[op.free] = x
    values = values.reshape(grid.shape)
    grad = tuple((op.D[d] @ values.ravel()).reshape(grid.edge_shape(d)) for d in range(grid.dim))
    return values, grad, res, its


def _xs(x_sample, dim):
    if x_sample is None:
        return None
    return tuple(float(v) for v in np.atleast_1d(x_sample))


def solve_truncated_cell(field: OscillatingMatrixField, x_sample, j, R: float, n: int, *,
                         tol: float = DEFAULT_TOL, maxiter: int | None = None) -> CellSolution:
    """Corrector on [-R, R]^N with homogeneous Dirichlet data.

    ``j`` is a direction index or a direction vector xi; ``n`` the number of
    cells per axis.
    """
    if tol <= 0:
        raise InputError("solver tolerance must be positive")
    grid = Grid.box(R, n, field.dim)
    xi = _direction(j, field.dim)
    _probe(field, x_sample, grid)
    op = EllipticOperatorAssembly(grid, _sampler(field, x_sample))
    values, grad, res, its = _solve(op, xi, tol, maxiter)
    return CellSolution(xi, grid, values, grad, res, its, op, float(R), _xs(x_sample, field.dim), tol)


def solve_periodic_cell(field: OscillatingMatrixField, x_sample, j, n: int, *,
                        tol: float = DEFAULT_TOL, maxiter: int | None = None) -> CellSolution:
    """Mean-zero corrector on the periodic unit cell [0, 1)^N."""
    if field.structure not in ("constant", "periodic"):
        raise InputError(f"periodic cell problem needs a periodic field, got {field.structure!r}")
    if tol <= 0:
        raise InputError("solver tolerance must be positive")
    grid = Grid.unit_cell(n, field.dim)
    xi = _direction(j, field.dim)
    _probe(field, x_sample, grid)
    op = EllipticOperatorAssembly(grid, _sampler(field, x_sample))
    values, grad, res, its = _solve(op, xi, tol, maxiter)
    return CellSolution(xi, grid, values, grad, res, its, op, None, _xs(x_sample, field.dim), tol)


def rescale_solution(sol: CellSolution) -> CellSolution:
    """Map chi on [-R, R]^N to w(y) = chi(R y) / R on [-1, 1]^N (same node layout)."""
    if sol.periodic or sol.R is None:
        raise InputError("only truncated Dirichlet solutions can be rescaled")
    R = sol.R
    grid = Grid.box(1.0, sol.grid.n, sol.grid.dim)
    values = sol.values / R
    # grad w(y) = (grad chi)(R y): edge differences are unchanged by the rescaling
    grad = tuple(np.array(g) for g in sol.gradient)
    return replace(sol, grid=grid, values=values, gradient=grad, operator=None, R=1.0)


def flux(sol: CellSolution, field: OscillatingMatrixField | None = None) -> FaceFlux:
    """Face flux A(xi + grad chi) consistent with the assembled operator."""
    op = sol.operator
    if field is not None:
        op = EllipticOperatorAssembly(sol.grid, _sampler(field, sol.x_sample))
    if op is None:
        raise InputError("solution carries no operator; pass the coefficient field")
    return op.flux(sol.values, sol.xi)
