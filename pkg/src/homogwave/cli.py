"""Command-line front end.

Every subcommand writes fixed-column CSV files plus ``manifest.txt`` into the
output directory.  Exit codes: 0 success, 2 configuration error, 3
precondition refusal, 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import Grid
from .cell_problem import flux, solve_periodic_cell, solve_truncated_cell
from .config import RunConfig, parse_list, parse_number
from .effective_coefficients import (
    INTERIOR_WINDOW,
    assemble_effective_periodic,
    convergence_study,
)
from .errors import (
    BlowUpError,
    ConfigError,
    EvaluationError,
    HomogError,
    InputError,
    PreconditionError,
    SolverError,
)
from .homogenization_experiments import (
    NODES_PER_PERIOD,
    PRESETS,
    compare_epsilon_sweep,
    homogenized_data,
    preset_scenario,
    required_cells,
)
from .spde_wave_solver import WaveState, homogenized_system, oscillatory_system, run

log = logging.getLogger("homogwave")

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_SOLVER = 0, 2, 3, 4


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    return format(float(v), ".17g")


class Output:
    """Collects CSV files written into one directory and the run manifest."""

    def __init__(self, directory: str):
        self.dir = Path(directory)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            probe = self.dir / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {directory} is not writable: {exc.strerror}") from None
        self.files: list[str] = []

    def table(self, name: str, header: list[str], rows) -> Path:
        path = self.dir / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        self.files.append(name)
        return path

    def manifest(self, argv_summary: list[str], cfg: RunConfig) -> None:
        lines = [f"homogwave {__version__}", "command: " + " ".join(argv_summary), "", "# resolved configuration",
                 cfg.render().rstrip(), "", "# outputs (sha256)"]
        for name in self.files:
            digest = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()
            lines.append(f"{name} {digest}")
        (self.dir / "manifest.txt").write_text("\n".join(lines) + "\n")
        (self.dir / "config.ini").write_text(cfg.render())


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------

def _x_sample(cfg: RunConfig):
    v = cfg.get("cell", "x")
    return None if v is None else parse_list(v)


def _directions(cfg: RunConfig, dim: int) -> list[int]:
    v = (cfg.get("cell", "direction") or "all").strip()
    if v == "all":
        return list(range(dim))
    try:
        j = int(v)
    except ValueError:
        raise ConfigError(f"[cell] direction must be 'all' or an index, got {v!r}") from None
    if not 0 <= j < dim:
        raise ConfigError(f"[cell] direction {j} outside 0..{dim - 1}")
    return [j]


def cmd_cell_solve(cfg: RunConfig, out: Output, args) -> int:
    sc = cfg.scenario()
    fld = sc.field
    kind = (cfg.get("cell", "kind") or ("periodic" if fld.structure in ("constant", "periodic") else "truncated")).strip()
    tol = cfg.number("cell", "tol", 1e-10)
    xs = _x_sample(cfg)
    sols = []
    for j in _directions(cfg, fld.dim):
        if kind == "periodic":
            sols.append(solve_periodic_cell(fld, xs, j, cfg.integer("cell", "n", sc.cell_n), tol=tol))
        elif kind == "truncated":
            R = cfg.number("cell", "r", 8.0)
            n = cfg.integer("cell", "n", int(round(2 * R * sc.points_per_unit)))
            sols.append(solve_truncated_cell(fld, xs, j, R, n, tol=tol))
        else:
            raise ConfigError(f"[cell] kind must be 'periodic' or 'truncated', got {kind!r}")
    dim = fld.dim
    coord_cols = ["y1", "y2"][:dim]
    flux_cols = ["flux1", "flux2"][:dim]
    rows, summary = [], []
    for s in sols:
        j = s.direction
        coords = [c.ravel() for c in s.grid.node_coords()]
        q = [c.ravel() for c in flux(s).nodal()]
        vals = s.values.ravel()
        for i in range(vals.size):
            rows.append([j, *(c[i] for c in coords), vals[i], *(c[i] for c in q)])
        avg = flux(s).average(1.0)
        summary.append([j, kind, s.grid.n, s.R, s.residual, s.iterations, s.mean, *avg])
        print(f"direction {j}: residual {s.residual:.3e} after {s.iterations} iterations, "
              f"flux average {np.array2string(avg, precision=10)}")
    out.table("cell_solution.csv", ["direction", *coord_cols, "chi", *flux_cols], rows)
    out.table("cell_summary.csv", ["direction", "kind", "n", "R", "residual", "iterations", "chi_mean",
                                   *[f"flux_avg{d + 1}" for d in range(dim)]], summary)
    return EXIT_OK


def _window(cfg: RunConfig) -> float:
    w = cfg.number("effective", "window", 1.0)
    if w not in (1.0, INTERIOR_WINDOW):
        raise ConfigError(f"[effective] window must be 1 or {INTERIOR_WINDOW}")
    return w


def _study(cfg: RunConfig, sc, threads: int):
    fld = sc.field
    radii = cfg.numbers("effective", "radii", sc.radii)
    ppu = cfg.integer("effective", "points_per_unit", sc.points_per_unit)
    default_ref = "periodic" if fld.structure in ("constant", "periodic") else "largest"
    ref = (cfg.get("effective", "reference") or default_ref).strip()
    oracle = None
    if ref == "oracle":
        vals = cfg.numbers("effective", "oracle")
        if vals is None or len(vals) != fld.dim**2:
            raise ConfigError(f"[effective] oracle needs {fld.dim ** 2} comma-separated entries")
        oracle = np.array(vals).reshape(fld.dim, fld.dim)
    return convergence_study(fld, radii, reference=ref, oracle=oracle, points_per_unit=ppu,
                             x_sample=_x_sample(cfg), tol=cfg.number("cell", "tol", 1e-10),
                             window=_window(cfg), periodic_n=cfg.integer("effective", "periodic_n", sc.cell_n),
                             threads=threads)


def _convergence_rows(rec):
    rows = []
    for r in rec.rows:
        d = r.tensor.shape[0]
        for i in range(d):
            for j in range(d):
                rows.append([r.R, r.n, i, j, r.tensor_full[i, j], r.tensor_interior[i, j], r.tensor[i, j],
                             rec.reference[i, j], r.error, r.cauchy, r.residual])
    return rows


CONVERGENCE_COLUMNS = ["R", "n", "i", "j", "a_full", "a_interior", "a_selected", "reference", "error", "cauchy",
                       "residual"]


def cmd_converge_r(cfg: RunConfig, out: Output, args) -> int:
    sc = cfg.scenario()
    rec = _study(cfg, sc, args.threads)
    out.table("convergence.csv", CONVERGENCE_COLUMNS, _convergence_rows(rec))
    for r in rec.rows:
        c = "" if r.cauchy is None else f" cauchy {r.cauchy:.3e}"
        print(f"R = {r.R:g}: error {r.error:.3e}{c}")
    print(f"monotone error: {rec.monotone}; decreasing Cauchy differences: {rec.cauchy_monotone}")
    return EXIT_OK


def cmd_effective(cfg: RunConfig, out: Output, args) -> int:
    sc = cfg.scenario()
    fld = sc.field
    rec = _study(cfg, sc, args.threads)
    if fld.structure in ("constant", "periodic"):
        t = assemble_effective_periodic(fld, cfg.integer("effective", "periodic_n", sc.cell_n),
                                        x_sample=_x_sample(cfg))
        mat, prov, R = t.matrix, t.provenance, None
    else:
        mat, prov, R = rec.final, "truncated", rec.rows[-1].R
    d = fld.dim
    out.table("tensor.csv", ["i", "j", "value", "provenance", "R"],
              [[i, j, mat[i, j], prov, R] for i in range(d) for j in range(d)])
    out.table("convergence.csv", CONVERGENCE_COLUMNS, _convergence_rows(rec))
    entries = " ".join(f"A{i + 1}{j + 1}={mat[i, j]:.10g}" for i in range(d) for j in range(d))
    print(f"effective tensor ({prov}): {entries}; final convergence error {rec.rows[-1].error:.3e}")
    return EXIT_OK


def _spde_eps(cfg: RunConfig):
    v = (cfg.get("spde", "eps") or "homogenized").strip()
    if v in ("homogenized", "0"):
        return None
    e = parse_number(v)
    if e <= 0:
        raise ConfigError("[spde] eps must be positive or 'homogenized'")
    return e


def cmd_spde_run(cfg: RunConfig, out: Output, args) -> int:
    sc = cfg.scenario()
    eps = _spde_eps(cfg)
    n = cfg.integer("spde", "n", sc.n if sc.n is not None else (required_cells(eps) if eps else 64))
    if eps is not None and n < required_cells(eps):
        raise PreconditionError(f"grid with {n} cells resolves eps = {eps:g} with fewer than {NODES_PER_PERIOD} "
                                f"nodes per period; need n >= {required_cells(eps)}")
    paths = cfg.integer("spde", "paths", 1)
    if paths < 1:
        raise ConfigError("[spde] paths must be >= 1")
    grid = Grid.domain(n, sc.dim)
    if eps is None:
        data = homogenized_data(sc)
        system = homogenized_system(grid, data.tensor, data.nonlinearity, sc.noise())
    else:
        system = oscillatory_system(grid, sc.field, sc.drift, sc.noise(), eps)
    start = WaveState.from_functions(grid, sc.u0, sc.u1, paths=paths)
    rec = run(start, system, sc.T, sc.dt, seed=sc.seed, stride=sc.stride)
    rows = [[t, e.mean(), h.mean(), v.mean(), s1.mean(), s2.mean()]
            for t, e, h, v, s1, s2 in zip(rec.times, rec.energy, rec.h1, rec.l2v, rec.sup4_h1, rec.sup4_l2v)]
    out.table("trajectory.csv", ["t", "energy_mean", "h1_mean", "l2v_mean", "sup4_h1_mean", "sup4_l2v_mean"], rows)
    coords = [c.ravel() for c in grid.node_coords()]
    u = rec.final.u
    std = u.std(axis=1, ddof=1) if paths > 1 else np.zeros(u.shape[0])
    out.table("final.csv", ["x1", "x2"][:sc.dim] + ["u_mean", "u_std"],
              [[*(c[i] for c in coords), u[i].mean(), std[i]] for i in range(u.shape[0])])
    label = "homogenized" if eps is None else f"eps = {eps:g}"
    print(f"{label}: {paths} path(s), {len(rec.times) - 1} records, final mean energy {rec.energy[-1].mean():.6g}")
    return EXIT_OK


def cmd_homog_compare(cfg: RunConfig, out: Output, args) -> int:
    sc = cfg.scenario()
    res = compare_epsilon_sweep(sc, threads=args.threads)
    out.table("errors.csv", ["eps", "path", "e"],
              [[e, p, res.errors[i, p]] for i, e in enumerate(res.eps) for p in range(res.paths)])
    prob, msq = res.prob, res.mean_sq
    out.table("summary.csv", ["eps", "mean_e2", "delta", "prob_exceed"],
              [[e, msq[i], d, prob[i, k]] for i, e in enumerate(res.eps) for k, d in enumerate(res.deltas)])
    d = res.tensor.shape[0]
    out.table("tensor.csv", ["i", "j", "value"], [[i, j, res.tensor[i, j]] for i in range(d) for j in range(d)])
    for i, e in enumerate(res.eps):
        print(f"eps = {e:g}: mean e^2 = {msq[i]:.6e}, P(e > delta) = {np.array2string(prob[i], precision=4)}")
    print(f"verdict: {res.verdict} (mean e^2 decreasing: {res.mean_sq_decreasing}; "
          f"P non-increasing: {res.prob_nonincreasing})")
    return EXIT_OK


def cmd_preset_list(cfg: RunConfig, out: Output | None, args) -> int:
    rows = []
    for name in PRESETS:
        sc = preset_scenario(name)
        rows.append([name, sc.dim, sc.field.structure, sc.description])
        print(f"{name:<12} dim={sc.dim} {sc.field.structure:<14} {sc.description}")
    if out is not None:
        out.table("presets.csv", ["name", "dim", "structure", "description"], rows)
    return EXIT_OK


COMMANDS = {
    "cell-solve": cmd_cell_solve,
    "effective": cmd_effective,
    "converge-R": cmd_converge_r,
    "spde-run": cmd_spde_run,
    "homog-compare": cmd_homog_compare,
    "preset-list": cmd_preset_list,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homogwave", description="Numerical homogenization of stochastic wave equations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="INI scenario file")
        s.add_argument("--preset", help="start from a named preset scenario")
        s.add_argument("--out", default=None, help="output directory (default: out/<command>)")
        s.add_argument("--seed", type=int, default=None, help="master seed (non-negative)")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="[section.]key=value, repeatable")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.preset:
        cfg.override(f"scenario.preset={args.preset}")
    for item in args.override:
        cfg.override(item)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.override(f"scenario.seed={args.seed}")
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if args.command != "preset-list" and cfg.get("scenario", "preset") is None and "coefficient" not in cfg.sections:
        raise ConfigError("no scenario given: pass --config, --preset or --override scenario.preset=NAME")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = _load(args)
        out = Output(args.out or f"out/{args.command}")
        code = COMMANDS[args.command](cfg, out, args)
        out.manifest(argv, cfg)
        return code
    except (ConfigError, InputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition refused: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (SolverError, BlowUpError, EvaluationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HomogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
