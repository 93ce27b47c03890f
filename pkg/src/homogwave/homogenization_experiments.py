"""End-to-end homogenization demonstrations.

The central experiment drives u_eps (oscillating coefficients) and u_0
(homogenized coefficients) with identical Brownian increments on the same
grid and tabulates ||u_eps - u_0||_{L2(Q_T)} per path as eps shrinks.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import Grid
from .cell_problem import CellSolution, solve_periodic_cell
from .coefficient_fields import (
    Bump,
    DiffusionField,
    DriftField,
    OscillatingMatrixField,
    Profile,
    Rate,
    Wave,
    check_rate_field,
    min_rayleigh,
)
from .effective_coefficients import (
    EffectiveNonlinearity,
    EffectiveTensor,
    assemble_effective_periodic,
    average_nonlinearities,
    convergence_study,
)
from .errors import InputError, PreconditionError
from .spde_wave_solver import (
    NoiseModel,
    Norms,
    WaveState,
    homogenized_system,
    oscillatory_system,
    path_increments,
    run,
    step,
    step_count,
)

log = logging.getLogger(__name__)

NODES_PER_PERIOD = 16
DEFAULT_DELTA_FACTORS = (0.5, 0.25, 0.1)
EXACT_TOL = 1e-12
SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


def sine_initial(x, *rest):
    out = np.sin(np.pi * x)
    for c in rest:
        out = out * np.sin(np.pi * c)
    return out


@dataclass
class Scenario:
    """A fully specified homogenization experiment on Q = (0, 1)^N."""

    name: str
    field: OscillatingMatrixField
    drift: DriftField
    diffusion: DiffusionField
    basis: str = "sine"
    T: float = 1.0
    dt: float = 1.0 / 1024
    eps: tuple[float, ...] = (1 / 8, 1 / 16, 1 / 32)
    paths: int = 64
    seed: int = 0
    n: int | None = None
    u0: Callable = sine_initial
    u1: Callable | None = None
    stride: int = 1
    delta_factors: tuple[float, ...] = DEFAULT_DELTA_FACTORS
    deltas: tuple[float, ...] | None = None
    cell_n: int = 1024
    radii: tuple[float, ...] = (8, 16, 32, 64)
    points_per_unit: int = 64
    cauchy_tol: float = 1e-2
    description: str = ""

    def __post_init__(self):
        self.eps = tuple(float(e) for e in self.eps)
        if len(self.eps) < 1 or any(e <= 0 for e in self.eps):
            raise InputError("eps schedule must contain positive values")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise InputError("eps schedule must be strictly decreasing")
        if self.paths < 8:
            raise InputError("at least 8 Monte-Carlo paths are required")
        if self.deltas is not None and any(d <= 0 for d in self.deltas):
            raise InputError("delta thresholds must be positive")
        if any(d <= 0 for d in self.delta_factors):
            raise InputError("delta factors must be positive")
        if self.basis not in ("sine", "flat"):
            raise InputError(f"noise basis must be 'sine' or 'flat', got {self.basis!r}")
        if self.stride < 1:
            raise InputError("recording stride must be >= 1")
        step_count(self.T, self.dt)
        self.validate()

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def grid_cells(self) -> int:
        return self.n if self.n is not None else int(math.ceil(NODES_PER_PERIOD / min(self.eps)))

    def validate(self, samples: int = 512) -> None:
        """Ellipticity, symmetry, zero-preservation and Lipschitz probes."""
        rng = np.random.default_rng(12345)
        y = tuple(rng.uniform(-50, 50, samples) for _ in range(self.dim))
        x = tuple(rng.uniform(0, 1, samples) for _ in range(self.dim))
        m = self.field(x, y)
        if not np.array_equal(m, np.swapaxes(m, -1, -2)):
            raise InputError(f"{self.name}: coefficient is not symmetric")
        q = min_rayleigh(m)
        if q < self.field.alpha * (1 - 1e-12):
            raise InputError(f"{self.name}: ellipticity probe failed ({q:.4g} < {self.field.alpha:.4g})")
        for f in (self.drift, self.diffusion):
            if isinstance(f, DiffusionField) and f.m == 0:
                continue
            if f.dim != self.dim:
                raise InputError(f"{self.name}: rate dimension differs from coefficient dimension")
            check_rate_field(f, rng)

    def noise(self) -> NoiseModel:
        return NoiseModel(self.diffusion, self.basis)


# ----------------------------------------------------------------------------
# presets
# ----------------------------------------------------------------------------

def _p(constant=0.0, waves=(), bumps=(), dim=1) -> Profile:
    return Profile(constant, tuple(Wave(a, (k,) if np.ndim(k) == 0 else tuple(k), kind) for a, k, kind in waves),
                   tuple(Bump(a, s, kind) for a, s, kind in bumps), dim)


PERIODIC_A = _p(2.0, [(1.0, 1, "cos")])
QUASI_A = _p(2.5, [(1.0, 1, "cos"), (1.0, SQRT2, "cos")])
SPACE_F = _p(2.0, [(1.0, 1, "cos")])
DECAY_T = _p(1.5, bumps=[(1.0, 1.0, "gauss")])
PROBLEM1_SIGMA = 0.25


def _problem1() -> Scenario:
    return Scenario(
        "problem1",
        OscillatingMatrixField.isotropic(PERIODIC_A, alpha=1.0),
        DriftField(Rate(SPACE_F, _p(1.0, [(1.0, 1, "cos")]))),
        DiffusionField((Rate(Profile.const(1.0), _p(2.0, [(1.0, 1, "sin")]), weight=PROBLEM1_SIGMA),)),
        description="periodic: a=2+cos(2 pi y), f=(2+cos 2 pi y)(1+cos 2 pi tau) l, "
                    "g1=sigma1 (2+sin 2 pi tau) l")


def _problem2() -> Scenario:
    return Scenario(
        "problem2",
        OscillatingMatrixField.isotropic(QUASI_A, alpha=0.5),
        DriftField(Rate(_p(2.0, [(1.0, SQRT2, "cos")]), _p(1.0, [(0.5, 1, "cos"), (0.5, SQRT3, "cos")]))),
        DiffusionField((Rate(Profile.const(1.0), _p(2.0, [(1.0, SQRT3, "sin")]), weight=PROBLEM1_SIGMA),)),
        description="almost periodic: a=2.5+cos(2 pi y)+cos(2 sqrt2 pi y), incommensurate drift and noise")


def _problem3() -> Scenario:
    return Scenario(
        "problem3",
        OscillatingMatrixField.isotropic(PERIODIC_A, alpha=1.0),
        DriftField(Rate(SPACE_F, DECAY_T)),
        DiffusionField((Rate(Profile.const(1.0), DECAY_T, weight=PROBLEM1_SIGMA),)),
        description="periodic in y, converging in tau: temporal factor 1.5+exp(-tau^2)")


def _problem4() -> Scenario:
    return Scenario(
        "problem4",
        OscillatingMatrixField.isotropic(QUASI_A, alpha=0.5),
        DriftField(Rate(_p(2.0, [(1.0, SQRT2, "cos")]), DECAY_T)),
        DiffusionField((Rate(Profile.const(1.0), DECAY_T, weight=PROBLEM1_SIGMA),)),
        description="almost periodic in y, converging in tau")


def _problem5() -> Scenario:
    asym = _p(2.0, [(1.0, 1, "cos")], [(1.0, 1.0, "exp")])
    return Scenario(
        "problem5",
        OscillatingMatrixField.isotropic(asym, alpha=1.0),
        DriftField(Rate(asym, _p(1.0, [(0.5, 1, "cos"), (0.5, SQRT2, "cos")]))),
        DiffusionField((Rate(Profile.const(1.0), _p(2.0, [(1.0, SQRT3, "sin")]), weight=PROBLEM1_SIGMA),)),
        description="asymptotically periodic: a=2+cos(2 pi y)+exp(-|y|), almost periodic in tau")


def _constant() -> Scenario:
    one = Profile.const(1.0)
    return Scenario(
        "constant",
        OscillatingMatrixField.constant([[2.0]]),
        DriftField(Rate(one)),
        DiffusionField((Rate(one, weight=PROBLEM1_SIGMA),)),
        description="constant coefficients: a=2, f=l, g1=sigma1 l (no oscillation)")


def _laminate() -> Scenario:
    lam = _p(2.0, [(1.0, (1, 0), "cos")], dim=2)
    one = Profile.const(1.0, 2)
    return Scenario(
        "laminate2d",
        OscillatingMatrixField.diagonal(lam, lam, alpha=1.0),
        DriftField(Rate(one)),
        DiffusionField((Rate(one, weight=PROBLEM1_SIGMA),)),
        T=0.25, dt=1 / 256, eps=(1 / 4, 1 / 8), paths=8, radii=(4, 8, 16), points_per_unit=16,
        description="2D laminate diag(a(y1), a(y1)), a=2+cos(2 pi y1)")


PRESETS: dict[str, Callable[[], Scenario]] = {
    "constant": _constant,
    "problem1": _problem1,
    "problem2": _problem2,
    "problem3": _problem3,
    "problem4": _problem4,
    "problem5": _problem5,
    "laminate2d": _laminate,
}


def preset_scenario(name: str) -> Scenario:
    try:
        return PRESETS[name.lower()]()
    except KeyError:
        raise InputError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


# ----------------------------------------------------------------------------
# homogenized data
# ----------------------------------------------------------------------------

@dataclass
class HomogenizedData:
    tensor: EffectiveTensor
    nonlinearity: EffectiveNonlinearity
    cauchy: float | None = None


def homogenized_data(scenario: Scenario) -> HomogenizedData:
    """Effective tensor (exact periodic cell, or truncated at the largest R) and averaged rates."""
    fld = scenario.field
    cauchy = None
    if fld.structure in ("constant", "periodic"):
        tensor = assemble_effective_periodic(fld, scenario.cell_n)
    else:
        rec = convergence_study(fld, scenario.radii, reference="largest",
                                points_per_unit=scenario.points_per_unit, window=0.5)
        cauchy = float(rec.cauchy[-1])
        if cauchy > scenario.cauchy_tol:
            raise PreconditionError(f"truncated tensor not converged: last Cauchy difference {cauchy:.3e} "
                                    f"> {scenario.cauchy_tol:.1e}; extend the radius schedule")
        last = rec.rows[-1]
        tensor = EffectiveTensor(last.tensor, "truncated", None, last.residual, R=last.R, window=0.5,
                                 alpha=fld.alpha)
    eff = average_nonlinearities(scenario.drift, scenario.diffusion, R=max(scenario.radii))
    return HomogenizedData(tensor, eff, cauchy)


# ----------------------------------------------------------------------------
# coupled sweep
# ----------------------------------------------------------------------------

@dataclass
class ComparisonResult:
    scenario: str
    eps: tuple[float, ...]
    errors: np.ndarray
    deltas: np.ndarray
    tensor: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def paths(self) -> int:
        return self.errors.shape[1]

    @property
    def mean_sq(self) -> np.ndarray:
        return (self.errors**2).mean(axis=1)

    @property
    def prob(self) -> np.ndarray:
        """P(e > delta): shape (len(eps), len(deltas))."""
        return (self.errors[:, :, None] > self.deltas[None, None, :]).mean(axis=1)

    @property
    def mean_sq_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.mean_sq) < 0))

    @property
    def prob_nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.prob, axis=0) <= 0))

    @property
    def exact(self) -> bool:
        """Every error at solver round-off: nothing left to decrease."""
        return bool(self.errors.max() <= EXACT_TOL)

    @property
    def verdict(self) -> str:
        trend = self.mean_sq_decreasing or self.exact
        return "PASS" if trend and self.prob_nonincreasing else "FAIL"


def required_cells(eps_min: float) -> int:
    return int(math.ceil(NODES_PER_PERIOD / eps_min - 1e-9))


def coupled_errors(scenario: Scenario, eps: float, grid: Grid, system0, increments: np.ndarray) -> np.ndarray:
    """Per-path ||u_eps - u_0||_{L2(Q_T)} with shared increments (steps, m, P).

    The time integral uses the midpoint rule on each recording interval with
    the interval-midpoint difference taken as the mean of its end values.
    """
    P = increments.shape[2]
    steps = step_count(scenario.T, scenario.dt)
    sys_e = oscillatory_system(grid, scenario.field, scenario.drift, scenario.noise(), eps)
    s_e = WaveState.from_functions(grid, scenario.u0, scenario.u1, paths=P)
    s_0 = s_e.copy()
    norms = Norms(grid)
    prev = s_e.u - s_0.u
    acc = np.zeros(P)
    last = 0
    for i in range(steps):
        dW = increments[i] if sys_e.m else None
        s_e = step(s_e, sys_e, scenario.dt, dW)
        s_0 = step(s_0, system0, scenario.dt, dW)
        if (i + 1) % scenario.stride == 0 or i + 1 == steps:
            cur = s_e.u - s_0.u
            acc += (i + 1 - last) * scenario.dt * norms.l2(0.5 * (prev + cur)) ** 2
            prev, last = cur, i + 1
    return np.sqrt(acc)


def compare_epsilon_sweep(scenario: Scenario, *, threads: int = 1, data: HomogenizedData | None = None) -> ComparisonResult:
    """Coupled Monte-Carlo comparison of u_eps and u_0 over the eps schedule.

    Path p at schedule index i uses the Brownian stream keyed by
    (seed, i + 1, p); the u_eps and u_0 runs of that pair consume the same
    increments.
    """
    n = scenario.grid_cells
    need = required_cells(min(scenario.eps))
    if n < need:
        raise PreconditionError(f"grid with {n} cells resolves eps = {min(scenario.eps):g} with fewer than "
                                f"{NODES_PER_PERIOD} nodes per period; need n >= {need}")
    grid = Grid.domain(n, scenario.dim)
    data = data or homogenized_data(scenario)
    noise = scenario.noise()
    system0 = homogenized_system(grid, data.tensor, data.nonlinearity, noise)
    steps = step_count(scenario.T, scenario.dt)
    m = max(noise.m, 1)

    def job(i):
        inc = path_increments(scenario.seed, steps, m, scenario.dt, scenario.paths, stream=i + 1)
        return coupled_errors(scenario, scenario.eps[i], grid, system0, inc)

    idx = range(len(scenario.eps))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            errs = list(pool.map(job, idx))
    else:
        errs = [job(i) for i in idx]
    errors = np.array(errs)
    if scenario.deltas is not None:
        deltas = np.array(scenario.deltas, dtype=float)
    else:
        ref = float(np.median(errors[0]))
        deltas = np.array(scenario.delta_factors) * max(ref, EXACT_TOL)
    meta = {
        "grid": grid.describe(),
        "dt": scenario.dt,
        "T": scenario.T,
        "paths": scenario.paths,
        "seed": scenario.seed,
        "tensor_provenance": data.tensor.provenance,
        "tensor_residual": data.tensor.residual,
        "cauchy": data.cauchy,
        "drift_mean": data.nonlinearity.drift.mean_factor,
        "noise_means": [r.mean_factor for r in data.nonlinearity.modes],
    }
    return ComparisonResult(scenario.name, scenario.eps, errors, deltas, np.array(data.tensor.symmetrized()), meta)


# ----------------------------------------------------------------------------
# corrector reconstruction
# ----------------------------------------------------------------------------

def corrector_reconstruction(snapshots, grid: Grid, cells: Sequence[CellSolution], eps: float) -> np.ndarray:
    """u_0 + eps * sum_j chi_j(x/eps) d_j u_0 for each snapshot.

    ``snapshots`` is a sequence (or array) of nodal u_0 fields of shape
    (nodes,) or (nodes, P); gradients are centred differences.
    """
    if snapshots is None or len(snapshots) == 0:
        raise InputError("corrector reconstruction needs u_0 snapshots")
    if len(cells) != grid.dim:
        raise InputError("one corrector per direction is required")
    coords = grid.node_coords()
    y = tuple(c / eps for c in coords)
    chis = [c.interpolate(y if grid.dim > 1 else y[0]).ravel() for c in cells]
    out = []
    for snap in snapshots:
        u = np.asarray(snap, dtype=float)
        shaped = u.reshape(grid.shape + u.shape[1:])
        rec = u.copy()
        for j in range(grid.dim):
            grad = np.gradient(shaped, grid.h, axis=j).reshape(u.shape)
            chi = chis[j] if u.ndim == 1 else chis[j][:, None]
            rec = rec + eps * chi * grad
        out.append(rec)
    return np.array(out)


@dataclass
class ReconstructionReport:
    eps: float
    plain: float
    corrected: float

    @property
    def improvement(self) -> float:
        return self.plain / self.corrected


def corrector_gain(scenario: Scenario, eps: float, *, n: int | None = None, interior: float = 0.1,
                   prepared: bool = True) -> ReconstructionReport:
    """Deterministic (g = 0) comparison of grad u_eps against grad u_0 and the
    gradient of the first-order reconstruction, in L2 over (interior, 1 - interior) x (0, T).

    With ``prepared`` the oscillating run starts from the reconstruction of
    u0; otherwise from u0 itself, whose O(1) gradient mismatch then persists
    as undamped microscale waves.
    """
    if scenario.dim != 1:
        raise InputError("the reconstruction report is implemented for one dimension")
    n = n or max(scenario.grid_cells, required_cells(eps))
    grid = Grid.domain(n, 1)
    data = homogenized_data(scenario)
    quiet = NoiseModel(DiffusionField.zero(), scenario.basis)
    sys_e = oscillatory_system(grid, scenario.field, scenario.drift, quiet, eps)
    eff = EffectiveNonlinearity(data.nonlinearity.drift, (), data.nonlinearity.probes,
                                data.nonlinearity.drift_table, np.zeros((0, data.nonlinearity.probes.size)),
                                data.nonlinearity.R, data.nonlinearity.drift_lipschitz, 0.0)
    sys_0 = homogenized_system(grid, data.tensor, eff, quiet)
    start = WaveState.from_functions(grid, scenario.u0, scenario.u1)
    cell = solve_periodic_cell(scenario.field, None, 0, scenario.cell_n)
    first = start.copy()
    if prepared:
        first.u = corrector_reconstruction([start.u], grid, [cell], eps)[0]
        first.u[grid.boundary_mask.ravel()] = 0.0
    rec_e = run(first, sys_e, scenario.T, scenario.dt, stride=scenario.stride, snapshots=True)
    rec_0 = run(start, sys_0, scenario.T, scenario.dt, stride=scenario.stride, snapshots=True)
    recon = corrector_reconstruction(rec_0.snapshots, grid, [cell], eps)
    mid = 0.5 * (grid.axis[:-1] + grid.axis[1:])
    keep = (mid > interior) & (mid < 1 - interior)

    def grad(u):
        return np.diff(u) / grid.h

    plain = corrected = 0.0
    for ue, u0, ur in zip(rec_e.snapshots, rec_0.snapshots, recon):
        ge = grad(ue)[keep]
        plain += float(((ge - grad(u0)[keep]) ** 2).sum())
        corrected += float(((ge - grad(ur)[keep]) ** 2).sum())
    w = grid.h * scenario.dt * scenario.stride
    return ReconstructionReport(eps, math.sqrt(plain * w), math.sqrt(corrected * w))
