"""Time stepping for the damped-free semilinear stochastic wave equation

    du' - div(A grad u) dt = f(u) dt + sum_k g_k(u) e_k dW^k   on (0, 1)^N,  u = 0 on the boundary,

in oscillatory form (coefficients at x/eps, t/eps) or homogenized form
(constant tensor, averaged rates).

Scheme (per step, t_mid = t + dt/2):

    v+ = v - dt K (u + u+)/2 + dt f(t_mid, u) + sum_k g_k(t_mid, u) e_k dW_k
    u+ = u + dt (v + v+)/2

The stiffness part is the trapezoidal rule, hence unconditionally stable,
time-reversible and exactly energy conserving when f = g = 0; the drift is
explicit and the noise is an Euler-Maruyama increment.  Eliminating u+
gives one solve with (I + dt^2/4 K), factorised once per step size.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import EllipticOperatorAssembly, Grid, _avg1d, _kron_all, edge_difference
from .coefficient_fields import (
    NONLINEARITIES,
    DiffusionField,
    DriftField,
    OscillatingMatrixField,
    Rate,
)
from .effective_coefficients import EffectiveNonlinearity, EffectiveTensor
from .errors import BlowUpError, InputError, SolverError

# ----------------------------------------------------------------------------
# noise
# ----------------------------------------------------------------------------

def sine_mode_indices(m: int, dim: int) -> list[tuple[int, ...]]:
    """First m multi-indices of the Dirichlet sine basis, ordered by |k|^2."""
    if dim == 1:
        return [(k,) for k in range(1, m + 1)]
    side = int(np.ceil(np.sqrt(m))) + 2
    idx = [(a, b) for a in range(1, side + 1) for b in range(1, side + 1)]
    idx.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k))
    return idx[:m]


@dataclass(frozen=True)
class NoiseModel:
    """Truncated cylindrical noise: mode k carries g_k(y, tau, u) and spatial shape e_k(x).

    ``basis`` is ``"sine"`` (orthonormal Dirichlet sines) or ``"flat"`` (e_k = 1).
    """

    diffusion: DiffusionField
    basis: str = "sine"

    def __post_init__(self):
        if self.basis not in ("sine", "flat"):
            raise InputError(f"unknown noise basis {self.basis!r}")

    @property
    def m(self) -> int:
        return self.diffusion.m

    def spatial_modes(self, grid: Grid) -> np.ndarray:
        """(m, nodes) array of e_k at grid nodes."""
        coords = grid.node_coords()
        out = np.ones((self.m, grid.size))
        if self.basis == "flat":
            return out
        for i, k in enumerate(sine_mode_indices(self.m, grid.dim)):
            e = np.ones(grid.shape)
            for d, kd in enumerate(k):
                e = e * np.sqrt(2.0) * np.sin(kd * np.pi * coords[d])
            out[i] = e.ravel()
        return out

    @staticmethod
    def aux_norm(increment: np.ndarray) -> np.ndarray:
        """Sum_k alpha_k^2 k^-2 of a coefficient vector (axis 0 = mode)."""
        a = np.asarray(increment, dtype=float)
        k = np.arange(1, a.shape[0] + 1).reshape((-1,) + (1,) * (a.ndim - 1))
        return (a**2 / k**2).sum(axis=0)


def brownian_increments(seed: int, steps: int, m: int, dt: float, *, path: int = 0,
                        stream: int = 0) -> np.ndarray:
    """(steps, m) increments of m independent Brownian motions with step dt.

    The stream is a Philox counter-based generator keyed by (seed, stream, path),
    so any (path, stream) can be regenerated independently and bit-for-bit.
    """
    ss = np.random.SeedSequence([int(seed), int(stream), int(path)])
    rng = np.random.Generator(np.random.Philox(ss))
    return rng.standard_normal((steps, m)) * np.sqrt(dt)


def path_increments(seed: int, steps: int, m: int, dt: float, paths: int, *, stream: int = 0,
                    first_path: int = 0) -> np.ndarray:
    """(steps, m, paths) increments; path p is ``brownian_increments(seed, ..., path=p)``."""
    out = np.empty((steps, m, paths))
    for p in range(paths):
        out[:, :, p] = brownian_increments(seed, steps, m, dt, path=first_path + p, stream=stream)
    return out


# ----------------------------------------------------------------------------
# systems
# ----------------------------------------------------------------------------

@dataclass
class _Term:
    coef: np.ndarray  # spatial factor on free nodes
    time: Callable[[float], float]
    phi: Callable


@dataclass
class WaveSystem:
    """Discrete right-hand side on a Dirichlet grid over (0, 1)^N."""

    grid: Grid
    operator: EllipticOperatorAssembly
    drift: list[_Term]
    noise: list[_Term]
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def free(self) -> np.ndarray:
        return self.grid.free

    @property
    def vol(self) -> float:
        return self.grid.h**self.grid.dim

    @property
    def K(self) -> sp.csr_matrix:
        """Free-node stiffness divided by the lumped mass h^N."""
        if "K" not in self._cache:
            self._cache["K"] = (self.operator.system / self.vol).tocsr()
        return self._cache["K"]

    @property
    def m(self) -> int:
        return len(self.noise)

    def factor(self, dt: float):
        key = ("lu", float(dt))
        if key not in self._cache:
            n = self.K.shape[0]
            M = (sp.identity(n, format="csc") + (dt * dt / 4.0) * self.K).tocsc()
            try:
                self._cache[key] = splu(M)
            except RuntimeError as exc:
                raise SolverError(f"factorisation of the implicit stiffness failed: {exc}") from exc
        return self._cache[key]

    def drift_value(self, t: float, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        for term in self.drift:
            out += _bcast(term.coef, u) * term.time(t) * term.phi(u)
        return out

    def noise_value(self, t: float, u: np.ndarray, dW: np.ndarray) -> np.ndarray:
        """sum_k g_k(t, u) e_k dW_k; ``dW`` has shape (m,) or (m, P)."""
        out = np.zeros_like(u)
        for k, term in enumerate(self.noise):
            out += _bcast(term.coef, u) * term.time(t) * term.phi(u) * dW[k]
        return out


def _bcast(coef: np.ndarray, u: np.ndarray) -> np.ndarray:
    return coef if u.ndim == 1 else coef[:, None]


def _rate_terms(rate: Rate, x_coords, free, eps: float, extra: np.ndarray | None = None) -> _Term:
    y = tuple(c / eps for c in x_coords)
    coef = rate.weight * rate.space(y).ravel()[free]
    if extra is not None:
        coef = coef * extra[free]
    time_prof = rate.time
    return _Term(coef, lambda t, p=time_prof, e=eps: float(p(t / e)), rate.phi)


def oscillatory_system(grid: Grid, field_: OscillatingMatrixField, drift: DriftField,
                       noise: NoiseModel, eps: float) -> WaveSystem:
    """u_eps system: A_0(x, x/eps), f(x/eps, t/eps, u), g_k(x/eps, t/eps, u) e_k(x)."""
    if eps <= 0:
        raise InputError("eps must be positive")
    if grid.periodic or grid.lower != 0.0 or grid.upper != 1.0:
        raise InputError("wave problems live on a Dirichlet grid over (0, 1)^N")
    if field_.dim != grid.dim:
        raise InputError("coefficient and grid dimensions differ")
    op = EllipticOperatorAssembly(grid, lambda c: field_(c, tuple(ci / eps for ci in c)))
    coords = grid.node_coords()
    free = grid.free
    drift_terms = [] if drift.rate.space.is_constant and drift.rate.space.constant == 0 else [
        _rate_terms(drift.rate, coords, free, eps)]
    modes = noise.spatial_modes(grid)
    noise_terms = [_rate_terms(r, coords, free, eps, modes[k]) for k, r in enumerate(noise.diffusion.modes)]
    return WaveSystem(grid, op, drift_terms, noise_terms, f"oscillatory eps={eps:g}")


def homogenized_system(grid: Grid, tensor, effective: EffectiveNonlinearity | None,
                       noise: NoiseModel) -> WaveSystem:
    """u_0 system: constant tensor, averaged rates lambda -> M(f(., ., lambda)), same noise basis."""
    mat = tensor.symmetrized() if isinstance(tensor, EffectiveTensor) else np.atleast_2d(np.asarray(tensor, dtype=float))
    if mat.shape != (grid.dim, grid.dim):
        raise InputError("tensor shape does not match grid dimension")
    op = EllipticOperatorAssembly(grid, lambda c: np.broadcast_to(mat, c[0].shape + mat.shape))
    free = grid.free
    ones = np.ones(free.size)
    drift_terms, noise_terms = [], []
    if effective is not None:
        if effective.drift.mean_factor != 0:
            drift_terms.append(_Term(effective.drift.mean_factor * ones, lambda t: 1.0,
                                     NONLINEARITIES[effective.drift.nonlinearity][0]))
        if effective.m != noise.m:
            raise InputError("averaged noise modes do not match the noise model")
        modes = noise.spatial_modes(grid)
        for k, r in enumerate(effective.modes):
            noise_terms.append(_Term(r.mean_factor * modes[k][free], lambda t: 1.0,
                                     NONLINEARITIES[r.nonlinearity][0]))
    return WaveSystem(grid, op, drift_terms, noise_terms, "homogenized")


# ----------------------------------------------------------------------------
# states, norms, stepping
# ----------------------------------------------------------------------------

@dataclass
class WaveState:
    """Nodal displacement and velocity on the full grid (boundary nodes included).

    Arrays have shape (nodes,) for one path or (nodes, paths) for a batch.
    """

    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    @classmethod
    def from_functions(cls, grid: Grid, u0: Callable, u1: Callable | None = None, paths: int | None = None) -> WaveState:
        coords = grid.node_coords()
        u = np.broadcast_to(np.asarray(u0(*coords), dtype=float), grid.shape).ravel().copy()
        v = (np.zeros(grid.size) if u1 is None else
             np.broadcast_to(np.asarray(u1(*coords), dtype=float), grid.shape).ravel().copy())
        mask = grid.boundary_mask.ravel()
        u[mask] = 0.0
        v[mask] = 0.0
        if paths is not None:
            u = np.repeat(u[:, None], paths, axis=1)
            v = np.repeat(v[:, None], paths, axis=1)
        return cls(u, v, 0.0)

    @classmethod
    def zero(cls, grid: Grid, paths: int | None = None) -> WaveState:
        shape = (grid.size,) if paths is None else (grid.size, paths)
        return cls(np.zeros(shape), np.zeros(shape), 0.0)

    def copy(self) -> WaveState:
        return WaveState(self.u.copy(), self.v.copy(), self.t)


class Norms:
    """H1_0 seminorm (edge differences), midpoint-rule L2 norm, discrete energy."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.D = [edge_difference(grid, d) for d in range(grid.dim)]
        self.edge_w = []
        tw = grid.transverse_weights()
        for d in range(grid.dim):
            w = np.ones(grid.edge_shape(d))
            for k in range(grid.dim):
                if k != d:
                    shape = [1] * grid.dim
                    shape[k] = grid.points
                    w = w * tw.reshape(shape)
            self.edge_w.append(w.ravel() * grid.h**grid.dim)
        self.avg = _kron_all([_avg1d(grid)] * grid.dim)

    def h1(self, u: np.ndarray) -> np.ndarray:
        s = 0.0
        for D, w in zip(self.D, self.edge_w):
            g = D @ u
            s = s + (_bcast(w, g) * g**2).sum(axis=0)
        return np.sqrt(s)

    def l2(self, u: np.ndarray) -> np.ndarray:
        c = self.avg @ u
        return np.sqrt((c**2).sum(axis=0) * self.grid.h**self.grid.dim)


def discrete_energy(state: WaveState, system: WaveSystem) -> np.ndarray:
    """1/2 h^N sum v^2 + 1/2 (A grad u, grad u) with the stiffness face coefficients."""
    K = system.operator.stiffness
    kin = 0.5 * system.vol * (state.v**2).sum(axis=0)
    pot = 0.5 * (state.u * (K @ state.u)).sum(axis=0)
    return kin + pot


def step(state: WaveState, system: WaveSystem, dt: float, dW: np.ndarray | None = None) -> WaveState:
    """Advance one step of size ``dt``; ``dW`` is the (m,) or (m, P) Brownian increment."""
    if not dt > 0:
        raise InputError("time step must be positive")
    free = system.free
    u, v = state.u[free], state.v[free]
    K = system.K
    t_mid = state.t + 0.5 * dt
    if system.noise and dW is None:
        raise InputError("noisy system needs Brownian increments")
    # overflow surfaces as a BlowUpError below
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = v - dt * (K @ u) - (0.25 * dt * dt) * (K @ v)
        if system.drift:
            rhs += dt * system.drift_value(t_mid, u)
        if system.noise:
            rhs += system.noise_value(t_mid, u, np.asarray(dW))
        v_new = system.factor(dt).solve(rhs)
        u_new = u + 0.5 * dt * (v + v_new)
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        raise BlowUpError(f"non-finite state at t = {state.t + dt:.6g} "
                          f"(max |u| before the step {np.abs(u).max():.3e})")
    out_u = np.zeros_like(state.u)
    out_v = np.zeros_like(state.v)
    out_u[free] = u_new
    out_v[free] = v_new
    return WaveState(out_u, out_v, state.t + dt)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    h1: np.ndarray
    l2v: np.ndarray
    energy: np.ndarray
    sup4_h1: np.ndarray
    sup4_l2v: np.ndarray
    snapshots: list[np.ndarray] | None
    final: WaveState

    @property
    def max_sup4(self):
        return self.sup4_h1[-1], self.sup4_l2v[-1]


def step_count(T: float, dt: float) -> int:
    if not T > 0 or not dt > 0:
        raise InputError("T and dt must be positive")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise InputError(f"dt = {dt:g} does not divide T = {T:g}")
    return steps


def run(initial: WaveState, system: WaveSystem, T: float, dt: float, *, increments: np.ndarray | None = None,
        seed: int = 0, stride: int = 1, snapshots: bool = False) -> TrajectoryRecord:
    """March from ``initial`` to time T, recording norms every ``stride`` steps.

    ``increments`` has shape (steps, m) or (steps, m, P) matching the state's
    batch axis; when omitted for a noisy system the increments are generated
    from ``seed``.
    """
    steps = step_count(T, dt)
    if stride < 1:
        raise InputError("recording stride must be >= 1")
    batched = initial.u.ndim == 2
    paths = initial.u.shape[1] if batched else None
    if system.m and increments is None:
        increments = (path_increments(seed, steps, system.m, dt, paths) if batched
                      else brownian_increments(seed, steps, system.m, dt))
    if increments is not None and increments.shape[0] < steps:
        raise InputError("not enough Brownian increments for the requested horizon")
    norms = Norms(system.grid)
    state = initial.copy()
    times, h1s, l2s, ens = [], [], [], []
    sup_u = norms.h1(state.u) ** 4
    sup_v = norms.l2(state.v) ** 4
    sup_us, sup_vs, snaps = [], [], [] if snapshots else None

    def record(s):
        times.append(s.t)
        h1s.append(norms.h1(s.u))
        l2s.append(norms.l2(s.v))
        ens.append(discrete_energy(s, system))
        sup_us.append(np.copy(sup_u))
        sup_vs.append(np.copy(sup_v))
        if snaps is not None:
            snaps.append(s.u.copy())

    record(state)
    for i in range(steps):
        dW = None if increments is None or not system.m else increments[i]
        state = step(state, system, dt, dW)
        sup_u = np.maximum(sup_u, norms.h1(state.u) ** 4)
        sup_v = np.maximum(sup_v, norms.l2(state.v) ** 4)
        if (i + 1) % stride == 0 or i + 1 == steps:
            record(state)
    return TrajectoryRecord(np.array(times), np.array(h1s), np.array(l2s), np.array(ens),
                            np.array(sup_us), np.array(sup_vs), snaps, state)
