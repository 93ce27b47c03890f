"""INI scenario files: parsing, overrides and conversion to library objects.

Profile expressions are sums of terms built from

    c                 constant
    A*cos(k[, k2])    A cos(2 pi k.y)
    A*sin(k[, k2])    A sin(2 pi k.y)
    A*gauss(s)        A exp(-|y|^2 / s^2)
    A*expdecay(s)     A exp(-|y| / s)

where numbers may use + - * /, pi and sqrt.  Initial data are arbitrary
numpy expressions in x (and y in two dimensions).
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .coefficient_fields import (
    NONLINEARITIES,
    Bump,
    DiffusionField,
    DriftField,
    OscillatingMatrixField,
    Profile,
    Rate,
    Wave,
)
from .errors import ConfigError, HomogError
from .homogenization_experiments import PRESETS, Scenario, preset_scenario

SECTIONS = ("scenario", "coefficient", "drift", "diffusion", "cell", "effective", "spde")

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}
_CONSTS = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt}


def _parse(text: str) -> ast.AST:
    try:
        return ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None


def _number(node: ast.AST) -> float:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _CONSTS:
        return _CONSTS[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _number(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        try:
            return _BINOPS[type(node.op)](_number(node.left), _number(node.right))
        except ZeroDivisionError:
            raise ConfigError("division by zero in numeric expression") from None
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and len(node.args) == 1:
        return _FUNCS[node.func.id](_number(node.args[0]))
    raise ConfigError(f"not a numeric expression: {ast.unparse(node)!r}")


def parse_number(text: str) -> float:
    v = _number(_parse(text))
    if not math.isfinite(v):
        raise ConfigError(f"non-finite number {text!r}")
    return v


def parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def parse_list(text: str) -> tuple[float, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty list")
    return tuple(parse_number(p) for p in parts)


def _terms(node: ast.AST, sign: float = 1.0):
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub)):
        yield from _terms(node.left, sign)
        yield from _terms(node.right, sign if isinstance(node.op, ast.Add) else -sign)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        yield from _terms(node.operand, -sign)
    else:
        yield sign, node


def _basis_call(node: ast.AST):
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and \
            node.func.id in ("cos", "sin", "gauss", "expdecay"):
        return node
    return None


def parse_profile(text: str, dim: int = 1) -> Profile:
    """Parse a structured profile expression (see module docstring)."""
    constant, waves, bumps = 0.0, [], []
    for sign, node in _terms(_parse(text)):
        amp, call = sign, _basis_call(node)
        if call is None and isinstance(node, ast.BinOp) and isinstance(node.op, ast.Mult):
            call = _basis_call(node.right)
            if call is not None:
                amp *= _number(node.left)
            else:
                call = _basis_call(node.left)
                if call is not None:
                    amp *= _number(node.right)
        if call is None:
            constant += sign * _number(node)
            continue
        args = [_number(a) for a in call.args]
        name = call.func.id
        try:
            if name in ("cos", "sin"):
                if len(args) not in (1, dim):
                    raise ConfigError(f"{name}() takes {dim} frequency components")
                freq = tuple(args) if len(args) == dim else tuple(args) + (0.0,) * (dim - 1)
                waves.append(Wave(amp, freq, name))
            else:
                if len(args) != 1:
                    raise ConfigError(f"{name}() takes one length scale")
                bumps.append(Bump(amp, args[0], "gauss" if name == "gauss" else "exp"))
        except HomogError as exc:
            raise ConfigError(str(exc)) from None
    try:
        return Profile(constant, tuple(waves), tuple(bumps), dim)
    except HomogError as exc:
        raise ConfigError(str(exc)) from None


_ALLOWED_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh}


def parse_initial(text: str, dim: int = 1):
    """Compile a numpy expression in x (and y) into a function of node coordinates."""
    if not text.strip():
        raise ConfigError("empty initial-data expression")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    names = {"x"} if dim == 1 else {"x", "y"}
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id not in names | set(_ALLOWED_FUNCS) | set(_CONSTS):
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, (ast.Attribute, ast.Subscript, ast.Lambda, ast.comprehension)):
            raise ConfigError(f"unsupported syntax in {text!r}")
    code = compile(tree, "<initial>", "eval")

    def fn(*coords):
        env = dict(_ALLOWED_FUNCS, **_CONSTS, x=coords[0])
        if dim > 1:
            env["y"] = coords[1]
        return np.broadcast_to(eval(code, {"__builtins__": {}}, env), np.shape(coords[0])) * 1.0

    fn.expression = text.strip()
    return fn


# ----------------------------------------------------------------------------
# run configuration
# ----------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Parsed configuration: raw sections plus typed accessors."""

    sections: dict[str, dict[str, str]] = field(default_factory=dict)
    source: str | None = None

    @classmethod
    def from_text(cls, text: str, source: str | None = None) -> RunConfig:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            parser.read_string(text, source=source or "<config>")
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        unknown = [s for s in parser.sections() if s not in SECTIONS]
        if unknown:
            raise ConfigError(f"unknown section(s) {unknown}; allowed: {list(SECTIONS)}")
        return cls({s: dict(parser[s]) for s in parser.sections()}, source)

    @classmethod
    def from_file(cls, path) -> RunConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, str(path))

    def override(self, item: str) -> None:
        """Apply ``section.key=value`` (section defaults to ``scenario``)."""
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        key = key.strip()
        section, _, name = key.rpartition(".")
        section = section or "scenario"
        if section not in SECTIONS or not name:
            raise ConfigError(f"override key {key!r} must be [section.]key with section in {list(SECTIONS)}")
        self.sections.setdefault(section, {})[name.lower()] = value.strip()

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def number(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else parse_number(v)

    def integer(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else parse_int(v)

    def numbers(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else parse_list(v)

    def render(self) -> str:
        lines = []
        for s in SECTIONS:
            if s in self.sections:
                lines.append(f"[{s}]")
                lines += [f"{k} = {v}" for k, v in sorted(self.sections[s].items())]
                lines.append("")
        return "\n".join(lines)

    # ------------------------------------------------------------------
    # conversion
    # ------------------------------------------------------------------

    def dim(self, base: Scenario | None) -> int:
        d = self.integer("scenario", "dim", base.dim if base else 1)
        if d not in (1, 2):
            raise ConfigError("dim must be 1 or 2")
        return d

    def coefficient(self, dim: int, base: OscillatingMatrixField | None) -> OscillatingMatrixField:
        sec = self.sections.get("coefficient", {})
        keys = {k for k in sec if k != "alpha"}
        alpha = self.number("coefficient", "alpha")
        if not keys:
            if base is None:
                raise ConfigError("[coefficient] needs 'a' or entries a11, a12, ...")
            if alpha is not None:
                return replace(base, alpha=alpha)
            return base
        try:
            if keys == {"a"}:
                prof = parse_profile(sec["a"], dim)
                return OscillatingMatrixField.isotropic(prof, alpha=alpha)
            entries = {}
            for k in keys:
                if len(k) != 3 or k[0] != "a" or not k[1:].isdigit():
                    raise ConfigError(f"unknown coefficient key {k!r}")
                i, j = int(k[1]) - 1, int(k[2]) - 1
                if not (0 <= i < dim and 0 <= j < dim):
                    raise ConfigError(f"coefficient entry {k} outside a {dim}x{dim} matrix")
                entries[(i, j)] = parse_profile(sec[k], dim)
            for (i, j), p in list(entries.items()):
                entries.setdefault((j, i), p)
            return OscillatingMatrixField.from_entries(entries, dim, alpha)
        except ConfigError:
            raise
        except HomogError as exc:
            raise ConfigError(f"[coefficient]: {exc}") from None

    def _rate(self, section: str, dim: int, weight: float = 1.0) -> Rate:
        space = parse_profile(self.get(section, "space", "1"), dim)
        time = parse_profile(self.get(section, "time", "1"), 1)
        nl = self.get(section, "nonlinearity", "linear").strip()
        if nl not in NONLINEARITIES:
            raise ConfigError(f"[{section}] nonlinearity must be one of {list(NONLINEARITIES)}")
        return Rate(space, time, nl, weight)

    def drift(self, dim: int, base: DriftField | None) -> DriftField:
        if "drift" not in self.sections:
            return base if base is not None else DriftField.zero(dim)
        try:
            return DriftField(self._rate("drift", dim, self.number("drift", "weight", 1.0)))
        except ConfigError:
            raise
        except HomogError as exc:
            raise ConfigError(f"[drift]: {exc}") from None

    def diffusion(self, dim: int, base: DiffusionField | None) -> DiffusionField:
        sec = self.sections.get("diffusion")
        if not sec or set(sec) <= {"basis"}:
            return base if base is not None else DiffusionField.zero(dim)
        weights = self.numbers("diffusion", "weights", (1.0,))
        modes = self.integer("diffusion", "modes", len(weights))
        if len(weights) == 1 and modes > 1:
            weights = weights * modes
        if len(weights) != modes:
            raise ConfigError("[diffusion] weights must list one value per mode")
        try:
            rates = tuple(self._rate("diffusion", dim, w) for w in weights)
            return DiffusionField(rates)
        except ConfigError:
            raise
        except HomogError as exc:
            raise ConfigError(f"[diffusion]: {exc}") from None

    def scenario(self) -> Scenario:
        """Build the experiment scenario, starting from ``[scenario] preset`` if given."""
        preset = self.get("scenario", "preset")
        try:
            base = preset_scenario(preset) if preset else None
        except HomogError as exc:
            raise ConfigError(str(exc)) from None
        dim = self.dim(base)
        if base is not None and dim != base.dim:
            raise ConfigError(f"preset {preset} is {base.dim}-dimensional")
        fld = self.coefficient(dim, base.field if base else None)
        if fld.dim != dim:
            raise ConfigError("coefficient dimension differs from scenario dim")
        kw = {}
        num = {"T": "t", "dt": "dt", "cauchy_tol": "cauchy_tol"}
        for attr, key in num.items():
            v = self.number("scenario", key)
            if v is not None:
                kw[attr] = v
        for attr in ("paths", "seed", "n", "stride", "cell_n", "points_per_unit"):
            v = self.integer("scenario", attr)
            if v is not None:
                kw[attr] = v
        for attr in ("eps", "deltas", "delta_factors", "radii"):
            v = self.numbers("scenario", attr)
            if v is not None:
                kw[attr] = v
        for key, attr in (("u0", "u0"), ("u1", "u1")):
            v = self.get("scenario", key)
            if v is not None:
                kw[attr] = parse_initial(v, dim)
        basis = self.get("diffusion", "basis")
        if basis is not None:
            kw["basis"] = basis.strip()
        name = self.get("scenario", "name")
        if name is not None:
            kw["name"] = name.strip()
        kw["field"] = fld
        kw["drift"] = self.drift(dim, base.drift if base else None)
        kw["diffusion"] = self.diffusion(dim, base.diffusion if base else None)
        try:
            if base is not None:
                return replace(base, **kw)
            kw.setdefault("name", "custom")
            return Scenario(**kw)
        except HomogError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None


def preset_names() -> list[str]:
    return list(PRESETS)
