"""Effective tensors, averaged nonlinearities and the R -> infinity study."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import Grid
from .cell_problem import (
    DEFAULT_TOL,
    CellSolution,
    flux,
    solve_periodic_cell,
    solve_truncated_cell,
)
from .coefficient_fields import (
    NONLINEARITIES,
    DiffusionField,
    DriftField,
    OscillatingMatrixField,
    Rate,
    mean_value,
    min_rayleigh,
)
from .errors import InputError

log = logging.getLogger(__name__)

DEFAULT_PROBES = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
INTERIOR_WINDOW = 0.5


@dataclass
class EffectiveTensor:
    matrix: np.ndarray
    provenance: str
    grid: Grid | None
    residual: float
    tol: float = DEFAULT_TOL
    R: float | None = None
    window: float = 1.0
    alpha: float | None = None

    @property
    def symmetry_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.T).max())

    @property
    def min_rayleigh(self) -> float:
        return min_rayleigh(self.matrix)

    @property
    def symmetric(self) -> bool:
        return self.symmetry_error <= 10 * self.tol

    @property
    def elliptic(self) -> bool:
        return self.alpha is None or self.min_rayleigh >= self.alpha * (1 - 10 * self.tol)

    def symmetrized(self) -> np.ndarray:
        return 0.5 * (self.matrix + self.matrix.T)


def _tensor_from(solutions: list[CellSolution], window: float) -> np.ndarray:
    cols = [flux(s).average(window) for s in solutions]
    return np.column_stack(cols)


def truncated_solutions(field_: OscillatingMatrixField, R: float, n: int, *, x_sample=None,
                        tol: float = DEFAULT_TOL) -> list[CellSolution]:
    return [solve_truncated_cell(field_, x_sample, j, R, n, tol=tol) for j in range(field_.dim)]


def assemble_effective_truncated(field_: OscillatingMatrixField, R: float, n: int, *, x_sample=None,
                                 tol: float = DEFAULT_TOL, window: float = 1.0) -> EffectiveTensor:
    """A_R: window average of A(I + grad chi_R) from the Dirichlet box correctors."""
    if not 0 < window <= 1:
        raise InputError(f"averaging window must lie in (0, 1] of the box, got {window}")
    sols = truncated_solutions(field_, R, n, x_sample=x_sample, tol=tol)
    return EffectiveTensor(_tensor_from(sols, window), "truncated", sols[0].grid,
                           max(s.residual for s in sols), tol, float(R), window, field_.alpha)


def assemble_effective_periodic(field_: OscillatingMatrixField, n: int, *, x_sample=None,
                                tol: float = DEFAULT_TOL) -> EffectiveTensor:
    """Cell average of A(I + grad chi) with chi the periodic corrector."""
    sols = [solve_periodic_cell(field_, x_sample, j, n, tol=tol) for j in range(field_.dim)]
    return EffectiveTensor(_tensor_from(sols, 1.0), "exact-periodic", sols[0].grid,
                           max(s.residual for s in sols), tol, None, 1.0, field_.alpha)


def voigt_reuss_bounds(field_: OscillatingMatrixField, radii=(1.0, 2.0), *,
                       points_per_unit: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-diagonal-entry (harmonic mean, arithmetic mean) by box quadrature.

    For 1D and laminated diagonal fields the effective entries lie between them.
    """
    if not field_.is_diagonal:
        raise InputError("bounds are provided for diagonal fields only")
    lo, hi = [], []
    for d in range(field_.dim):
        prof = field_.entries[d][d]
        ppu = points_per_unit or prof.points_per_unit()
        inv = mean_value(lambda y, p=prof: 1.0 / p(y), radii, dim=field_.dim, points_per_unit=ppu).value
        lo.append(1.0 / inv)
        hi.append(mean_value(prof, radii, dim=field_.dim, points_per_unit=ppu).value)
    return np.array(lo), np.array(hi)


# ----------------------------------------------------------------------------
# convergence in R
# ----------------------------------------------------------------------------

@dataclass
class ConvergenceRow:
    R: float
    n: int
    tensor: np.ndarray
    tensor_full: np.ndarray
    tensor_interior: np.ndarray
    error: float
    cauchy: float | None
    residual: float


@dataclass
class ConvergenceRecord:
    rows: list[ConvergenceRow]
    reference: np.ndarray
    reference_kind: str
    window: float
    nonmonotone: list[float] = field(default_factory=list)

    @property
    def radii(self) -> list[float]:
        return [r.R for r in self.rows]

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    @property
    def cauchy(self) -> np.ndarray:
        return np.array([r.cauchy for r in self.rows[1:]], dtype=float)

    @property
    def monotone(self) -> bool:
        e = self.errors
        return bool(np.all(np.diff(e) < 0))

    @property
    def cauchy_monotone(self) -> bool:
        c = self.cauchy
        return bool(np.all(np.diff(c) < 0))

    @property
    def final(self) -> np.ndarray:
        return self.rows[-1].tensor


def convergence_study(field_: OscillatingMatrixField, radii: Sequence[float], *, reference: str = "largest",
                      oracle=None, points_per_unit: int = 64, x_sample=None, tol: float = DEFAULT_TOL,
                      window: float = 1.0, periodic_n: int = 1024, threads: int = 1) -> ConvergenceRecord:
    """Truncated tensors over a radius schedule with errors against a reference.

    ``reference`` is ``"oracle"`` (``oracle`` matrix supplied), ``"periodic"``
    (exact periodic cell tensor) or ``"largest"`` (largest-R tensor).  The
    grid spacing is held fixed at 1/points_per_unit, so n = 2 R points_per_unit.
    Both the full-box and interior-window tensors are recorded; ``window``
    selects which one the errors refer to.
    """
    radii = [float(r) for r in radii]
    if len(radii) < 3:
        raise InputError("a convergence study needs at least 3 radii")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise InputError("radii must be strictly increasing")
    if reference not in ("oracle", "periodic", "largest"):
        raise InputError(f"unknown reference {reference!r}")
    if reference == "oracle" and oracle is None:
        raise InputError("reference 'oracle' needs an oracle matrix")

    def job(R):
        n = int(round(2 * R * points_per_unit))
        sols = truncated_solutions(field_, R, n, x_sample=x_sample, tol=tol)
        full = _tensor_from(sols, 1.0)
        inner = _tensor_from(sols, INTERIOR_WINDOW)
        return R, n, full, inner, max(s.residual for s in sols)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, radii))
    else:
        results = [job(R) for R in radii]

    def pick(full, inner):
        return full if window == 1.0 else inner

    if window not in (1.0, INTERIOR_WINDOW):
        raise InputError(f"convergence studies report window 1.0 or {INTERIOR_WINDOW}")
    if reference == "oracle":
        ref = np.atleast_2d(np.asarray(oracle, dtype=float))
    elif reference == "periodic":
        ref = assemble_effective_periodic(field_, periodic_n, x_sample=x_sample, tol=tol).matrix
    else:
        ref = pick(*results[-1][2:4])
    rows = []
    prev = None
    for R, n, full, inner, res in results:
        t = pick(full, inner)
        cauchy = None if prev is None else float(np.abs(t - prev).max())
        rows.append(ConvergenceRow(R, n, t, full, inner, float(np.abs(t - ref).max()), cauchy, res))
        prev = t
    errs = [r.error for r in rows]
    tail = [rows[i + 1].R for i in range(len(rows) - 1) if errs[i + 1] >= errs[i]]
    if tail:
        log.info("non-monotone error at R = %s", tail)
    return ConvergenceRecord(rows, ref, reference, window, tail)


# ----------------------------------------------------------------------------
# nonlinearities
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectiveRate:
    """lambda -> mean_factor * phi(lambda)."""

    mean_factor: float
    nonlinearity: str = "linear"

    def __call__(self, lam):
        return self.mean_factor * NONLINEARITIES[self.nonlinearity][0](np.asarray(lam, dtype=float))

    @property
    def lipschitz(self) -> float:
        return abs(self.mean_factor) * NONLINEARITIES[self.nonlinearity][1]


@dataclass
class EffectiveNonlinearity:
    drift: EffectiveRate
    modes: tuple[EffectiveRate, ...]
    probes: np.ndarray
    drift_table: np.ndarray
    mode_tables: np.ndarray
    R: float
    drift_lipschitz: float
    diffusion_lipschitz: float

    @property
    def m(self) -> int:
        return len(self.modes)

    @staticmethod
    def _interp(probes, table, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.interp(lam, probes, table)
        lo = (table[1] - table[0]) / (probes[1] - probes[0])
        hi = (table[-1] - table[-2]) / (probes[-1] - probes[-2])
        out = np.where(lam < probes[0], table[0] + lo * (lam - probes[0]), out)
        return np.where(lam > probes[-1], table[-1] + hi * (lam - probes[-1]), out)

    def drift_tabulated(self, lam):
        """Piecewise-linear interpolation of the quadrature table (linear extrapolation)."""
        return self._interp(self.probes, self.drift_table, lam)

    def mode_tabulated(self, k: int, lam):
        return self._interp(self.probes, self.mode_tables[k], lam)


def _rate_box_mean(rate: Rate, R: float, ppu_space: int, ppu_time: int) -> float:
    # midpoint rule on the product box factorises exactly for separable rates
    radii = (R / 2, R)
    s = mean_value(rate.space, radii, dim=rate.dim, points_per_unit=ppu_space).value
    t = mean_value(rate.time, radii, dim=1, points_per_unit=ppu_time).value
    return rate.weight * s * t


def average_nonlinearities(f: DriftField, g: DiffusionField, R: float, *, points_per_unit: int | None = None,
                           probes: Sequence[float] = ()) -> EffectiveNonlinearity:
    """Box averages f_R(l), g_k,R(l) over (y, tau) in [-R, R]^(N+1), tabulated on probes,
    together with the exact mean-value rates f(l) = M(f(., ., l)).
    """
    pts = np.array(sorted(set(DEFAULT_PROBES) | {float(p) for p in probes}))
    if not np.all(np.isfinite(pts)):
        raise InputError("probe values must be finite")

    def table(rate: Rate):
        ppu_s = points_per_unit or rate.space.points_per_unit()
        ppu_t = points_per_unit or rate.time.points_per_unit()
        return _rate_box_mean(rate, R, ppu_s, ppu_t) * rate.phi(pts)

    drift_table = table(f.rate)
    mode_tables = np.array([table(r) for r in g.modes]).reshape(g.m, pts.size)
    drift = EffectiveRate(f.rate.mean_factor(), f.rate.nonlinearity)
    modes = tuple(EffectiveRate(r.mean_factor(), r.nonlinearity) for r in g.modes)
    diff_lip = float(np.sqrt(sum(m.lipschitz**2 for m in modes)))
    return EffectiveNonlinearity(drift, modes, pts, drift_table, mode_tables, float(R), drift.lipschitz, diff_lip)
