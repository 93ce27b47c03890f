"""Structured oscillating coefficient families and mean-value estimation.

Every scalar profile is a finite trigonometric sum plus an optional set of
decaying bumps:

    p(y) = c + sum_i a_i * cos|sin(2*pi*k_i . y) + sum_j b_j * bump_j(|y|)

which covers constant, periodic (integer frequencies), quasi-periodic
(incommensurate frequencies) and asymptotically almost periodic data.  The
mean value of such a profile is its constant term; the quadrature routines
below provide the independent check.

Coordinates are passed as a tuple of broadcastable arrays, one per axis; a
bare array is accepted in one dimension.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError, InputError

TWO_PI = 2.0 * math.pi


def as_coords(y, dim: int) -> tuple[np.ndarray, ...]:
    """Normalise ``y`` to a tuple of ``dim`` coordinate arrays."""
    if isinstance(y, (tuple, list)):
        coords = tuple(np.asarray(c, dtype=float) for c in y)
    elif dim == 1:
        coords = (np.asarray(y, dtype=float),)
    else:
        arr = np.asarray(y, dtype=float)
        if arr.shape[-1:] != (dim,):
            raise InputError(f"expected {dim} coordinates, got array of shape {arr.shape}")
        coords = tuple(arr[..., k] for k in range(dim))
    if len(coords) != dim:
        raise InputError(f"expected {dim} coordinates, got {len(coords)}")
    return coords


@dataclass(frozen=True)
class Wave:
    amplitude: float
    frequency: tuple[float, ...]
    kind: str = "cos"

    def __post_init__(self):
        if self.kind not in ("cos", "sin"):
            raise InputError(f"unknown wave kind {self.kind!r}")

    def __call__(self, coords):
        phase = sum(k * c for k, c in zip(self.frequency, coords))
        trig = np.cos if self.kind == "cos" else np.sin
        return self.amplitude * trig(TWO_PI * phase)


@dataclass(frozen=True)
class Bump:
    """Decaying term ``amplitude * exp(-(|y|/scale)^2)`` or ``exp(-|y|/scale)``."""

    amplitude: float
    scale: float = 1.0
    kind: str = "gauss"

    def __post_init__(self):
        if self.kind not in ("gauss", "exp"):
            raise InputError(f"unknown bump kind {self.kind!r}")
        if self.scale <= 0:
            raise InputError("bump scale must be positive")

    def __call__(self, coords):
        r2 = sum(c * c for c in coords)
        if self.kind == "gauss":
            return self.amplitude * np.exp(-r2 / self.scale**2)
        return self.amplitude * np.exp(-np.sqrt(r2) / self.scale)


@dataclass(frozen=True)
class Profile:
    """Scalar function on R^dim: constant + trigonometric sum + decaying bumps."""

    constant: float = 0.0
    waves: tuple[Wave, ...] = ()
    bumps: tuple[Bump, ...] = ()
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InputError(f"profile dimension must be 1, 2 or 3, got {self.dim}")
        const = float(self.constant)
        kept = []
        for w in self.waves:
            if len(w.frequency) != self.dim:
                raise InputError(f"wave frequency {w.frequency} does not match dimension {self.dim}")
            if all(k == 0 for k in w.frequency):
                # zero-frequency cos is a constant, zero-frequency sin vanishes
                if w.kind == "cos":
                    const += w.amplitude
                continue
            if w.amplitude != 0:
                kept.append(w)
        object.__setattr__(self, "constant", const)
        object.__setattr__(self, "waves", tuple(kept))
        object.__setattr__(self, "bumps", tuple(b for b in self.bumps if b.amplitude != 0))

    @classmethod
    def const(cls, value: float, dim: int = 1) -> Profile:
        return cls(constant=value, dim=dim)

    @classmethod
    def cosine(cls, mean: float, amplitude: float, frequency, dim: int = 1) -> Profile:
        freq = tuple(np.atleast_1d(np.asarray(frequency, dtype=float)).tolist())
        return cls(constant=mean, waves=(Wave(amplitude, freq, "cos"),), dim=dim)

    def __call__(self, y):
        coords = as_coords(y, self.dim)
        shape = np.broadcast_shapes(*(c.shape for c in coords))
        out = np.full(shape, self.constant, dtype=float)
        for w in self.waves:
            out = out + w(coords)
        for b in self.bumps:
            out = out + b(coords)
        return out

    def __add__(self, other: Profile) -> Profile:
        if not isinstance(other, Profile) or other.dim != self.dim:
            return NotImplemented
        return Profile(self.constant + other.constant, self.waves + other.waves,
                       self.bumps + other.bumps, self.dim)

    def scaled(self, factor: float) -> Profile:
        return Profile(
            self.constant * factor,
            tuple(Wave(w.amplitude * factor, w.frequency, w.kind) for w in self.waves),
            tuple(Bump(b.amplitude * factor, b.scale, b.kind) for b in self.bumps),
            self.dim,
        )

    @property
    def structure(self) -> str:
        if self.bumps:
            return "asymptotic"
        if not self.waves:
            return "constant"
        integral = all(float(k).is_integer() for w in self.waves for k in w.frequency)
        return "periodic" if integral else "quasiperiodic"

    @property
    def is_constant(self) -> bool:
        return not self.waves and not self.bumps

    def mean(self) -> float:
        """Exact mean value: bumps vanish at infinity and waves average to zero."""
        return self.constant

    def sup_bound(self) -> float:
        return abs(self.constant) + sum(abs(w.amplitude) for w in self.waves) + sum(
            abs(b.amplitude) for b in self.bumps)

    def lower_bound(self) -> float:
        return self.constant - sum(abs(w.amplitude) for w in self.waves) - sum(
            max(-b.amplitude, 0.0) for b in self.bumps)

    def max_frequency(self) -> float:
        return max((math.hypot(*w.frequency) for w in self.waves), default=0.0)

    def points_per_unit(self, per_wavelength: int = 64) -> int:
        """Quadrature density giving ``per_wavelength`` points per shortest wavelength."""
        return int(math.ceil(per_wavelength * max(1.0, self.max_frequency())))


# ----------------------------------------------------------------------------
# matrix coefficient
# ----------------------------------------------------------------------------

def _probe_directions(dim: int, count: int = 64) -> np.ndarray:
    if dim == 1:
        return np.ones((1, 1))
    theta = np.pi * np.arange(count) / count
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def min_rayleigh(matrices: np.ndarray, directions: int = 64) -> float:
    """Minimum of xi.M xi over a unit-vector probe set and all stacked matrices."""
    m = np.asarray(matrices, dtype=float)
    dim = m.shape[-1]
    xi = _probe_directions(dim, directions)
    q = np.einsum("pi,...ij,pj->...p", xi, m, xi)
    return float(q.min())


@dataclass(frozen=True)
class OscillatingMatrixField:
    """Symmetric matrix field A(x, y) = x_factor(x) * [p_ij(y)].

    ``entries[i][j]`` and ``entries[j][i]`` are the same profile object, so
    symmetry holds exactly.  ``x_factor`` (positive, optional) carries the
    macroscopic dependence; ``alpha`` is the declared ellipticity floor.
    """

    entries: tuple[tuple[Profile, ...], ...]
    alpha: float
    x_factor: Callable | None = None
    label: str = ""

    def __post_init__(self):
        n = len(self.entries)
        if n not in (1, 2) or any(len(row) != n for row in self.entries):
            raise InputError("matrix field must be 1x1 or 2x2")
        for i in range(n):
            for j in range(n):
                if self.entries[i][j].dim != n:
                    raise InputError("entry profiles must live in the field dimension")
                if self.entries[i][j] is not self.entries[j][i] and self.entries[i][j] != self.entries[j][i]:
                    raise InputError("matrix field entries must be symmetric")
        if not self.alpha > 0:
            raise InputError("ellipticity floor alpha must be positive")

    # construction helpers --------------------------------------------------
    @classmethod
    def from_entries(cls, profiles: dict, dim: int, alpha: float | None = None, **kw) -> OscillatingMatrixField:
        zero = Profile(dim=dim)
        rows = [[zero] * dim for _ in range(dim)]
        for (i, j), p in profiles.items():
            rows[i][j] = p
            rows[j][i] = p
        field_ = tuple(tuple(r) for r in rows)
        if alpha is None:
            alpha = _floor_estimate(field_)
        return cls(field_, alpha, **kw)

    @classmethod
    def constant(cls, matrix, alpha: float | None = None) -> OscillatingMatrixField:
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if not np.array_equal(m, m.T):
            raise InputError("constant matrix must be symmetric")
        dim = m.shape[0]
        prof = {(i, j): Profile.const(m[i, j], dim) for i in range(dim) for j in range(i, dim)}
        if alpha is None:
            alpha = float(np.linalg.eigvalsh(m).min())
        return cls.from_entries(prof, dim, alpha)

    @classmethod
    def diagonal(cls, *profiles: Profile, alpha: float | None = None) -> OscillatingMatrixField:
        dim = len(profiles)
        return cls.from_entries({(i, i): p for i, p in enumerate(profiles)}, dim, alpha)

    @classmethod
    def isotropic(cls, profile: Profile, alpha: float | None = None) -> OscillatingMatrixField:
        return cls.diagonal(*([profile] * profile.dim), alpha=alpha)

    # evaluation ------------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def is_diagonal(self) -> bool:
        return all(self.entries[i][j].is_constant and self.entries[i][j].constant == 0
                   for i in range(self.dim) for j in range(self.dim) if i != j)

    @property
    def structure(self) -> str:
        tags = {p.structure for row in self.entries for p in row}
        for tag in ("asymptotic", "quasiperiodic", "periodic"):
            if tag in tags:
                return tag
        return "constant"

    def _factor(self, x):
        if self.x_factor is None or x is None:
            return 1.0
        return np.asarray(self.x_factor(*as_coords(x, self.dim)), dtype=float)

    def entry(self, i: int, j: int, x, y) -> np.ndarray:
        return self._factor(x) * self.entries[i][j](y)

    def __call__(self, x, y) -> np.ndarray:
        """Matrix values with shape ``broadcast(x, y) + (N, N)``."""
        coords = as_coords(y, self.dim)
        fac = self._factor(x)
        vals = [[None] * self.dim for _ in range(self.dim)]
        for i in range(self.dim):
            for j in range(i, self.dim):
                v = fac * self.entries[i][j](coords)
                vals[i][j] = vals[j][i] = v
        shape = np.broadcast_shapes(*(np.shape(v) for row in vals for v in row))
        out = np.empty(shape + (self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                out[..., i, j] = vals[i][j]
        if not np.all(np.isfinite(out)):
            raise EvaluationError("matrix field produced non-finite values")
        return out

    def mean_matrix(self) -> np.ndarray:
        """Arithmetic mean value M(A) (the Voigt bound), exact from constant terms."""
        return np.array([[p.mean() for p in row] for row in self.entries])

    def check_ellipticity(self, x, y, *, rtol: float = 1e-12) -> float:
        """Return the minimum Rayleigh quotient on the samples; raise if below alpha."""
        q = min_rayleigh(self(x, y))
        if q < self.alpha * (1 - rtol):
            raise InputError(f"ellipticity probe failed: min xi.A xi = {q:.6g} < alpha = {self.alpha:.6g}")
        return q


def _floor_estimate(entries) -> float:
    dim = len(entries)
    if dim == 1:
        lb = entries[0][0].lower_bound()
    else:
        # Gershgorin with sup bounds on the off-diagonal entry
        off = entries[0][1].sup_bound()
        lb = min(entries[0][0].lower_bound(), entries[1][1].lower_bound()) - off
    if lb <= 0:
        raise InputError("cannot certify ellipticity from bounds; pass alpha explicitly")
    return lb


# ----------------------------------------------------------------------------
# drift and diffusion
# ----------------------------------------------------------------------------

NONLINEARITIES: dict[str, tuple[Callable, float]] = {
    "linear": (lambda lam: lam, 1.0),
    "sin": (np.sin, 1.0),
    "tanh": (np.tanh, 1.0),
}


@dataclass(frozen=True)
class Rate:
    """Separable rate ``weight * space(y) * time(tau) * phi(lambda)`` with phi(0) = 0."""

    space: Profile
    time: Profile = field(default_factory=lambda: Profile.const(1.0))
    nonlinearity: str = "linear"
    weight: float = 1.0

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise InputError(f"unknown nonlinearity {self.nonlinearity!r}; "
                             f"choose from {sorted(NONLINEARITIES)}")
        if self.time.dim != 1:
            raise InputError("time profile must be one-dimensional")

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def phi(self) -> Callable:
        return NONLINEARITIES[self.nonlinearity][0]

    def __call__(self, y, tau, lam):
        out = self.weight * self.space(y) * self.time(tau) * self.phi(np.asarray(lam, dtype=float))
        if not np.all(np.isfinite(out)):
            raise EvaluationError("rate produced non-finite values")
        return out

    def lipschitz_bound(self) -> float:
        return abs(self.weight) * self.space.sup_bound() * self.time.sup_bound() * NONLINEARITIES[self.nonlinearity][1]

    def mean_factor(self) -> float:
        """M(weight * space * time); the joint mean of a separable product."""
        return self.weight * self.space.mean() * self.time.mean()

    @property
    def structure(self) -> str:
        tags = {self.space.structure, self.time.structure}
        for tag in ("asymptotic", "quasiperiodic", "periodic"):
            if tag in tags:
                return tag
        return "constant"


@dataclass(frozen=True)
class DriftField:
    """Drift f(y, tau, lambda) with declared Lipschitz constant c1."""

    rate: Rate
    lipschitz: float | None = None

    def __post_init__(self):
        if self.lipschitz is None:
            object.__setattr__(self, "lipschitz", self.rate.lipschitz_bound())

    @classmethod
    def zero(cls, dim: int = 1) -> DriftField:
        return cls(Rate(Profile(dim=dim)), 0.0)

    @property
    def dim(self) -> int:
        return self.rate.dim

    @property
    def growth(self) -> float:
        """Linear growth constant c2; f(.,.,0) = 0 makes c1 admissible."""
        return self.lipschitz

    def __call__(self, y, tau, lam):
        return self.rate(y, tau, lam)


@dataclass(frozen=True)
class DiffusionField:
    """Noise coefficients g_k(y, tau, lambda), k = 1..m, each a weighted Rate.

    The weight of each rate is its mode weight sigma_k; ``total`` bounds the
    sum of squared weights (the Hilbert-Schmidt surrogate).
    """

    modes: tuple[Rate, ...]
    lipschitz: float | None = None
    total: float | None = None

    def __post_init__(self):
        dims = {r.dim for r in self.modes}
        if len(dims) > 1:
            raise InputError("all noise modes must share a spatial dimension")
        if self.lipschitz is None:
            object.__setattr__(self, "lipschitz", float(math.sqrt(sum(r.lipschitz_bound() ** 2 for r in self.modes))))
        s2 = float(sum(r.weight**2 for r in self.modes))
        if self.total is None:
            object.__setattr__(self, "total", s2)
        elif s2 > self.total * (1 + 1e-12):
            raise InputError(f"sum of squared mode weights {s2:.6g} exceeds declared total {self.total:.6g}")

    @classmethod
    def zero(cls, dim: int = 1) -> DiffusionField:
        return cls((), 0.0, 0.0)

    @classmethod
    def uniform(cls, space: Profile, time: Profile, weights: Sequence[float],
                nonlinearity: str = "linear") -> DiffusionField:
        return cls(tuple(Rate(space, time, nonlinearity, float(w)) for w in weights))

    @property
    def m(self) -> int:
        return len(self.modes)

    @property
    def dim(self) -> int:
        return self.modes[0].dim if self.modes else 1

    @property
    def weights(self) -> np.ndarray:
        return np.array([r.weight for r in self.modes])

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.weights**2)

    def __call__(self, k: int, y, tau, lam):
        return self.modes[k](y, tau, lam)


def inverse_square_weights(m: int) -> list[float]:
    """Mode weights sigma_k = k^-2."""
    return [1.0 / k**2 for k in range(1, m + 1)]


# ----------------------------------------------------------------------------
# probes
# ----------------------------------------------------------------------------

def check_symmetry(field_: OscillatingMatrixField, x, y) -> None:
    m = field_(x, y)
    if not np.array_equal(m, np.swapaxes(m, -1, -2)):
        raise InputError("matrix field is not symmetric on the probe set")


def check_rate_field(fieldlike, rng: np.random.Generator, samples: int = 256, box: float = 50.0) -> None:
    """Zero-preservation and Lipschitz probes for a DriftField or DiffusionField."""
    if isinstance(fieldlike, DriftField):
        rates, c = (fieldlike.rate,), fieldlike.lipschitz
    else:
        rates, c = fieldlike.modes, fieldlike.lipschitz
    if not rates:
        return
    dim = rates[0].dim
    y = tuple(rng.uniform(-box, box, samples) for _ in range(dim))
    tau = rng.uniform(-box, box, samples)
    lam = rng.normal(0, 3, samples)
    mu = rng.normal(0, 3, samples)
    zero_vals = np.stack([r(y, tau, 0.0) for r in rates])
    if np.any(zero_vals != 0):
        raise InputError("rate does not vanish at lambda = 0")
    diff = np.stack([r(y, tau, lam) - r(y, tau, mu) for r in rates])
    # mode-wise values combine in the Hilbert-Schmidt (l2 over modes) sense
    lhs = np.sqrt((diff**2).sum(axis=0))
    if np.any(lhs > c * np.abs(lam - mu) * (1 + 1e-12) + 1e-300):
        raise InputError(f"Lipschitz probe violated declared constant {c:.6g}")


# ----------------------------------------------------------------------------
# mean values
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MeanValueEstimate:
    value: float
    radii: tuple[float, ...]
    values: tuple[float, ...]
    differences: tuple[float, ...]

    @classmethod
    def from_sequence(cls, radii, values) -> MeanValueEstimate:
        vals = tuple(float(v) for v in values)
        diffs = tuple(abs(b - a) for a, b in zip(vals, vals[1:]))
        return cls(vals[-1], tuple(float(r) for r in radii), vals, diffs)


def _box_average(u: Callable, R: float, dim: int, points_per_unit: int, power: float | None = None) -> float:
    n = max(1, int(math.ceil(2 * R * points_per_unit)))
    h = 2 * R / n
    t = -R + (np.arange(n) + 0.5) * h
    total = 0.0
    if dim == 1:
        chunks = [(t,)]
    elif dim == 2:
        step = max(1, 2_000_000 // n)
        chunks = [(t[s:s + step, None], t[None, :]) for s in range(0, n, step)]
    elif dim == 3:
        step = max(1, 2_000_000 // (n * n))
        chunks = [(t[s:s + step, None, None], t[None, :, None], t[None, None, :]) for s in range(0, n, step)]
    else:
        raise InputError("mean values are supported for dimensions 1 to 3")
    for coords in chunks:
        vals = np.asarray(u(coords) if dim > 1 else u(coords[0]), dtype=float)
        vals = np.broadcast_to(vals, np.broadcast_shapes(*(c.shape for c in coords)))
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("non-finite field value in mean-value quadrature")
        if power is not None:
            vals = np.abs(vals) ** power
        total += float(vals.sum())
    return total / n**dim


def _check_schedule(radii) -> tuple[float, ...]:
    r = tuple(float(x) for x in radii)
    if len(r) < 2 or any(b <= a for a, b in zip(r, r[1:])) or r[0] <= 0:
        raise InputError("radius schedule must be positive, strictly increasing, with at least 2 entries")
    return r


def mean_value(u: Callable, radii: Sequence[float], *, dim: int = 1, points_per_unit: int = 64) -> MeanValueEstimate:
    """Box averages of ``u`` over [-R, R]^dim by the midpoint rule, for each R.

    ``u`` receives a tuple of broadcastable coordinate arrays (a bare array in
    one dimension).
    """
    r = _check_schedule(radii)
    return MeanValueEstimate.from_sequence(r, [_box_average(u, R, dim, points_per_unit) for R in r])


def besicovitch_seminorm(u: Callable, p: float, radii: Sequence[float], *, dim: int = 1,
                         points_per_unit: int = 64) -> MeanValueEstimate:
    """(box average of |u|^p)^(1/p) for each radius."""
    if p < 1:
        raise InputError("exponent p must be >= 1")
    r = _check_schedule(radii)
    vals = [_box_average(u, R, dim, points_per_unit, power=p) ** (1.0 / p) for R in r]
    return MeanValueEstimate.from_sequence(r, vals)


def evaluate_field(fieldlike, *args):
    """Uniform entry point: ``(x, y)`` for matrix fields, ``(y, tau, lam)`` for rates,
    ``(k, y, tau, lam)`` for diffusion fields, ``(y,)`` for profiles."""
    if isinstance(fieldlike, OscillatingMatrixField):
        if len(args) != 2:
            raise InputError("matrix fields take (x, y)")
        return fieldlike(*args)
    if isinstance(fieldlike, DiffusionField):
        if len(args) != 4:
            raise InputError("diffusion fields take (k, y, tau, lam)")
        return fieldlike(*args)
    if isinstance(fieldlike, (DriftField, Rate)):
        if len(args) != 3:
            raise InputError("drift fields take (y, tau, lam)")
        return fieldlike(*args)
    if isinstance(fieldlike, Profile):
        if len(args) != 1:
            raise InputError("profiles take (y,)")
        return fieldlike(args[0])
    raise InputError(f"cannot evaluate object of type {type(fieldlike).__name__}")
