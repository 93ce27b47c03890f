"""Tensor grids, divergence-form operator assembly and the PCG solver.

The discretisation is vertex-centred.  Diagonal coefficients live on grid
edges (harmonic average of the two nodal values); off-diagonal coefficients
live on cell centres and couple through cell-averaged gradients.  The
operator is assembled from the quadratic energy

    sum_edges vol * a_dd * (xi_d + D_d u)^2 + sum_cells vol * 2 a_01 (xi_0 + G_0 u)(xi_1 + G_1 u)

so it is symmetric by construction and divergence form is preserved.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np
import scipy.sparse as sp

from .errors import InputError, SolverError


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [lower, upper]^dim with ``n`` cells per axis."""

    dim: int
    n: int
    lower: float
    upper: float
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InputError("grids are one- or two-dimensional")
        if self.n < 4:
            raise InputError("grid needs at least 4 cells per axis")
        if not self.upper > self.lower:
            raise InputError("grid upper bound must exceed lower bound")
        if self.bc not in ("dirichlet", "periodic"):
            raise InputError(f"unknown boundary condition {self.bc!r}")

    @classmethod
    def box(cls, R: float, n: int, dim: int = 1) -> Grid:
        """Dirichlet grid on [-R, R]^dim."""
        if R <= 0:
            raise InputError("box half-width R must be positive")
        return cls(dim, n, -R, R, "dirichlet")

    @classmethod
    def unit_cell(cls, n: int, dim: int = 1) -> Grid:
        """Periodic grid on the unit cell [0, 1)^dim."""
        return cls(dim, n, 0.0, 1.0, "periodic")

    @classmethod
    def domain(cls, n: int, dim: int = 1) -> Grid:
        """Dirichlet grid on the physical domain (0, 1)^dim."""
        return cls(dim, n, 0.0, 1.0, "dirichlet")

    @property
    def side(self) -> float:
        return self.upper - self.lower

    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def periodic(self) -> bool:
        return self.bc == "periodic"

    @property
    def points(self) -> int:
        """Nodes per axis (boundary nodes included for Dirichlet grids)."""
        return self.n if self.periodic else self.n + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def axis(self) -> np.ndarray:
        return self.lower + self.h * np.arange(self.points)

    @property
    def midpoints(self) -> np.ndarray:
        return self.lower + self.h * (np.arange(self.n) + 0.5)

    def node_coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    def edge_coords(self, d: int) -> tuple[np.ndarray, ...]:
        axes = [self.axis] * self.dim
        axes[d] = self.midpoints
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def cell_coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.midpoints] * self.dim), indexing="ij"))

    def edge_shape(self, d: int) -> tuple[int, ...]:
        s = list(self.shape)
        s[d] = self.n
        return tuple(s)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if self.periodic:
            return mask
        for d in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = -1
            mask[tuple(idx)] = True
        return mask

    @cached_property
    def free(self) -> np.ndarray:
        """Flat indices of unknown nodes."""
        return np.flatnonzero(~self.boundary_mask.ravel())

    def transverse_weights(self) -> np.ndarray:
        """Trapezoid weights along an axis (1/2 at Dirichlet end nodes)."""
        w = np.ones(self.points)
        if not self.periodic:
            w[0] = w[-1] = 0.5
        return w

    def describe(self) -> str:
        return f"{self.bc} grid dim={self.dim} n={self.n} box=[{self.lower:g},{self.upper:g}] h={self.h:.6g}"


# ----------------------------------------------------------------------------
# difference operators
# ----------------------------------------------------------------------------

def _diff1d(grid: Grid) -> sp.csr_matrix:
    n, h = grid.n, grid.h
    if grid.periodic:
        d = sp.diags([-np.ones(n), np.ones(n - 1), np.ones(1)], [0, 1, -(n - 1)], shape=(n, n))
    else:
        d = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1))
    return (d / h).tocsr()


def _avg1d(grid: Grid) -> sp.csr_matrix:
    n = grid.n
    if grid.periodic:
        a = sp.diags([np.ones(n), np.ones(n - 1), np.ones(1)], [0, 1, -(n - 1)], shape=(n, n))
    else:
        a = sp.diags([np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1))
    return (0.5 * a).tocsr()


def _kron_all(mats) -> sp.csr_matrix:
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


def edge_difference(grid: Grid, d: int) -> sp.csr_matrix:
    """Forward difference along axis ``d``: nodes -> d-edges."""
    eye = sp.identity(grid.points, format="csr")
    return _kron_all([_diff1d(grid) if k == d else eye for k in range(grid.dim)])


def cell_gradient(grid: Grid, d: int) -> sp.csr_matrix:
    """Cell-averaged derivative along axis ``d``: nodes -> cells."""
    return _kron_all([_diff1d(grid) if k == d else _avg1d(grid) for k in range(grid.dim)])


def harmonic_edges(values: np.ndarray, grid: Grid, d: int) -> np.ndarray:
    """Harmonic average of nodal values across each d-edge."""
    inv = 1.0 / values
    nxt = np.roll(inv, -1, axis=d) if grid.periodic else np.take(inv, np.arange(1, grid.points), axis=d)
    cur = inv if grid.periodic else np.take(inv, np.arange(grid.points - 1), axis=d)
    return 2.0 / (cur + nxt)


MatrixSampler = Callable[[tuple[np.ndarray, ...]], np.ndarray]


@dataclass
class FaceFlux:
    """Discrete flux A(xi + grad u): normal components on edges, cross terms on cells."""

    grid: Grid
    edge: tuple[np.ndarray, ...]
    cross: tuple[np.ndarray | None, ...]
    operator: EllipticOperatorAssembly

    def divergence(self) -> np.ndarray:
        """Nodal (scaled) divergence; equals K u - b, zero at converged free nodes."""
        return self.operator.divergence(self)

    def average(self, window: float = 1.0) -> np.ndarray:
        """Average of each flux component over the centred window of relative size ``window``."""
        return self.operator.window_average(self, window)

    def nodal(self) -> tuple[np.ndarray, ...]:
        """Flux components at nodes: edge and cell values averaged onto adjacent nodes."""
        g = self.grid
        out = []
        for d in range(g.dim):
            q = _to_nodes(self.edge[d], d, g.periodic)
            if self.cross[d] is not None:
                c = self.cross[d]
                for k in range(g.dim):
                    c = _to_nodes(c, k, g.periodic)
                q = q + c
            out.append(q)
        return tuple(out)


def _to_nodes(arr: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    # arr has n interval values along ``axis``; node i sits between intervals i-1 and i
    a = np.moveaxis(arr, axis, 0)
    if periodic:
        res = 0.5 * (a + np.roll(a, 1, axis=0))
    else:
        res = np.concatenate([a[:1], 0.5 * (a[1:] + a[:-1]), a[-1:]], axis=0)
    return np.moveaxis(res, 0, axis)


class EllipticOperatorAssembly:
    """Sparse form of u -> -div(A (xi + grad u)) on a grid.

    ``stiffness`` acts on all nodes and is scaled by the cell volume h^dim,
    i.e. it is the Hessian of the discrete energy.
    """

    def __init__(self, grid: Grid, sampler: MatrixSampler):
        self.grid = grid
        dim, h = grid.dim, grid.h
        vol = h**dim
        node_vals = np.asarray(sampler(grid.node_coords()), dtype=float)
        node_vals = np.broadcast_to(node_vals, grid.shape + (dim, dim))
        if not np.all(np.isfinite(node_vals)):
            raise InputError("coefficient sampler produced non-finite values")
        if np.any(node_vals[..., range(dim), range(dim)] <= 0):
            raise InputError("diagonal coefficients must be positive")
        self.edge_coef = tuple(harmonic_edges(node_vals[..., d, d], grid, d) for d in range(dim))
        tw = grid.transverse_weights()
        self.edge_vol = []
        for d in range(dim):
            w = np.ones(grid.edge_shape(d)) * vol
            for k in range(dim):
                if k != d:
                    shape = [1] * dim
                    shape[k] = grid.points
                    w = w * tw.reshape(shape)
            self.edge_vol.append(w)
        self.cell_vol = vol
        self.D = tuple(edge_difference(grid, d) for d in range(dim))
        self.cross_coef = None
        self.G = None
        if dim == 2:
            cell_vals = np.broadcast_to(np.asarray(sampler(grid.cell_coords()), dtype=float),
                                        grid.cell_shape + (2, 2))
            off = cell_vals[..., 0, 1]
            if np.any(off != 0):
                self.cross_coef = off.copy()
                self.G = tuple(cell_gradient(grid, d) for d in range(dim))
        K = sum(Dd.T @ sp.diags((self.edge_vol[d] * self.edge_coef[d]).ravel()) @ Dd
                for d, Dd in enumerate(self.D))
        if self.cross_coef is not None:
            C = sp.diags(vol * self.cross_coef.ravel())
            K = K + self.G[0].T @ C @ self.G[1] + self.G[1].T @ C @ self.G[0]
        self.stiffness = sp.csr_matrix(K)
        self.free = grid.free
        self.system = self.stiffness[self.free][:, self.free].tocsr()

    @property
    def dim(self) -> int:
        return self.grid.dim

    def rhs(self, xi) -> np.ndarray:
        """Right-hand side b (all nodes) with K u = b for the corrector in direction xi."""
        xi = np.asarray(xi, dtype=float)
        b = np.zeros(self.grid.size)
        for d, Dd in enumerate(self.D):
            b -= Dd.T @ (self.edge_vol[d] * self.edge_coef[d] * xi[d]).ravel()
        if self.cross_coef is not None:
            c = self.cell_vol * self.cross_coef.ravel()
            b -= self.G[0].T @ (c * xi[1]) + self.G[1].T @ (c * xi[0])
        return b

    def flux(self, u: np.ndarray, xi) -> FaceFlux:
        xi = np.asarray(xi, dtype=float)
        uf = np.asarray(u, dtype=float).ravel()
        edge = tuple(self.edge_coef[d] * (xi[d] + (self.D[d] @ uf).reshape(self.grid.edge_shape(d)))
                     for d in range(self.dim))
        cross: tuple = (None,) * self.dim
        if self.cross_coef is not None:
            g = [(self.G[d] @ uf).reshape(self.grid.cell_shape) for d in range(2)]
            cross = (self.cross_coef * (xi[1] + g[1]), self.cross_coef * (xi[0] + g[0]))
        return FaceFlux(self.grid, edge, cross, self)

    def divergence(self, flux: FaceFlux) -> np.ndarray:
        out = np.zeros(self.grid.size)
        for d, Dd in enumerate(self.D):
            out += Dd.T @ (self.edge_vol[d] * flux.edge[d]).ravel()
        if self.cross_coef is not None:
            for d in range(2):
                out += self.G[d].T @ (self.cell_vol * flux.cross[d]).ravel()
        return out.reshape(self.grid.shape)

    def window_indices(self, window: float) -> tuple[int, int]:
        """Node index range [i0, i1] of the centred window, snapped to nodes."""
        g = self.grid
        if not 0 < window <= 1:
            raise InputError(f"averaging window must lie in (0, 1], got {window}")
        half = 0.5 * window * g.n
        centre = 0.5 * g.n
        i0 = int(round(centre - half))
        i1 = int(round(centre + half))
        if i1 <= i0:
            raise InputError("averaging window is empty on this grid")
        return i0, i1

    def window_average(self, flux: FaceFlux, window: float = 1.0) -> np.ndarray:
        g = self.grid
        i0, i1 = self.window_indices(window)
        length = (i1 - i0) * g.h
        total = np.zeros(self.dim)
        # transverse trapezoid weights restricted to the window
        if g.periodic and i1 - i0 >= g.n - 1:
            i0, i1 = 0, g.n
            length = g.side
            tw = np.ones(g.points)
        else:
            tw = np.zeros(g.points)
            tw[i0:i1 + 1] = 1.0
            tw[i0] = tw[i1] = 0.5
        lw = np.zeros(g.n)
        lw[i0:i1] = 1.0
        for d in range(self.dim):
            w = np.ones(g.edge_shape(d))
            for k in range(self.dim):
                shape = [1] * self.dim
                if k == d:
                    shape[k] = g.n
                    w = w * lw.reshape(shape)
                else:
                    shape[k] = g.points
                    w = w * tw.reshape(shape)
            total[d] += float((w * flux.edge[d]).sum()) * g.h**self.dim
        if self.cross_coef is not None:
            cw = np.outer(lw, lw)
            for d in range(2):
                total[d] += float((cw * flux.cross[d]).sum()) * g.h**2
        return total / length**self.dim


# ----------------------------------------------------------------------------
# preconditioned conjugate gradients
# ----------------------------------------------------------------------------

def default_maxiter(unknowns: int) -> int:
    return int(math.ceil(50 * math.sqrt(unknowns)))


def pcg(A: sp.spmatrix, b: np.ndarray, *, tol: float = 1e-10, maxiter: int | None = None,
        project_mean: bool = False) -> tuple[np.ndarray, float, int]:
    """Jacobi-preconditioned CG; returns (x, relative residual, iterations).

    With ``project_mean`` every iterate and search direction is projected onto
    mean-zero vectors, which pins the constant null space of periodic problems.
    Raises SolverError when the relative residual does not reach ``tol``.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if maxiter is None:
        maxiter = default_maxiter(n)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("system matrix has non-positive diagonal entries")
    inv_d = 1.0 / diag
    if project_mean:
        b = b - b.mean()
    nb = float(np.linalg.norm(b))
    x = np.zeros(n)
    if nb == 0.0:
        return x, 0.0, 0
    r = b.copy()
    z = inv_d * r
    if project_mean:
        z -= z.mean()
    p = z.copy()
    rz = float(r @ z)
    rel = 1.0
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise SolverError("matrix is not positive definite along a search direction", rel, it)
        step = rz / pAp
        x += step * p
        r -= step * Ap
        if project_mean:
            x -= x.mean()
        rel = float(np.linalg.norm(r)) / nb
        if rel <= tol:
            true = b - A @ x
            if project_mean:
                true -= true.mean()
            rel = float(np.linalg.norm(true)) / nb
            if rel <= tol:
                return x, rel, it
            # recursive residual drifted; restart from the true one
            r = true
            z = inv_d * r
            if project_mean:
                z -= z.mean()
            p = z.copy()
            rz = float(r @ z)
            continue
        z = inv_d * r
        if project_mean:
            z -= z.mean()
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"PCG did not converge in {maxiter} iterations (relative residual {rel:.3e})", rel, maxiter)
