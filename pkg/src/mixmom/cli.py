"""Command-line front end: run configs and presets, build tables, audit field files.

``MIXMOM_NUM_THREADS`` caps the BLAS/OpenMP thread pools; it is applied before
numpy is first imported, so heavy imports happen inside the command handlers.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("mixmom")


def _apply_thread_env():
    n = os.environ.get("MIXMOM_NUM_THREADS")
    if n:
        for var in THREAD_VARS:
            os.environ[var] = n


def initial_density(cfg, x, y):
    """Phase-space density of the initial condition at points ``(x, y)``."""
    import numpy as np

    ic = cfg.initial
    if ic.kind == "uniform":
        return np.full(np.broadcast(x, y).shape, ic.value)
    r2 = (np.asarray(x) - ic.center_x) ** 2 + (np.asarray(y) - ic.center_y) ** 2
    return np.maximum(ic.peak() * np.exp(-r2 / (2.0 * ic.sigma ** 2)), ic.floor)


def build(cfg):
    """Closure, solver and initial state for a validated config."""
    from . import entropy
    from .closures import LB_MODES, make_closure
    from .solver import Beam, Grid, ProblemCoefficients, SideBC, Solver

    cfg.validate()
    lb = cfg.lb or LB_MODES[cfg.closure][0]
    needs_table = cfg.sigma_s > 0 and lb == "tabulated"
    table = entropy.cached_table(cfg.table_resolution, cfg.table_path) if needs_table else None
    closure = make_closure(cfg.closure, cfg.lb, trace_cap=cfg.trace_cap, table=table, n_mu=cfg.n_mu,
                           n_phi=cfg.n_phi, tol=cfg.tol, max_iter=cfg.max_iter)
    grid = Grid(cfg.nx, cfg.ny, cfg.x_min, cfg.x_max, cfg.y_min, cfg.y_max)
    bc = {}
    for side, sc in cfg.boundary.items():
        beams = tuple(Beam((b.segment_lo, b.segment_hi), b.direction, b.sigma2, b.amplitude) for b in sc.beams)
        bc[side] = SideBC(sc.kind, sc.value, beams)
    solver = Solver(closure, grid, ProblemCoefficients(cfg.sigma_s, cfg.sigma_a, cfg.Q), bc, scheme=cfg.flux,
                    order=cfg.order, cfl=cfg.cfl, slope_limiter=cfg.slope_limiter,
                    boundary_quad=cfg.boundary_quadrature)
    psi = grid.cell_average(lambda x, y: initial_density(cfg, x, y))
    state = solver.initial_state(closure.isotropic(psi))
    return closure, solver, state


def run(cfg, out_dir=None, quiet: bool = False) -> dict:
    """Execute a run and write the field, cut and summary files; returns the summary record."""
    import time
    from pathlib import Path

    import numpy as np

    from . import config as config_mod
    from . import fieldio
    from .solver import cut, diagnostics

    t_start = time.perf_counter()
    closure, solver, state = build(cfg)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config_mod.to_text(cfg))
    grid = solver.grid
    mass0 = state.mass_history[0][1]
    times = [cfg.t_final * k / (cfg.snapshots + 1) for k in range(1, cfg.snapshots + 1)]
    for k, t_out in enumerate(times):
        solver.run(state, t_out)
        fieldio.write_field(out / f"{cfg.name}_field_{k:04d}.txt", grid, state.U, closure, state.t)
    solver.run(state, cfg.t_final)
    fieldio.write_field(out / f"{cfg.name}_field_final.txt", grid, state.U, closure, state.t)
    diag = diagnostics(state, closure)
    rho = closure.mass(state.U)[..., None]
    meta = {"closure": closure.name, "t": repr(state.t)}
    peaks = {}
    if cfg.cuts:
        for which in ("horizontal", "diagonal"):
            s, x, y, vals = cut(grid, state.U, which)
            fieldio.write_cut(out / f"{cfg.name}_cut_{which}.txt", s, x, y, vals, closure.labels,
                              dict(meta, cut=which))
    for which in ("horizontal", "diagonal"):
        peaks[which] = float(cut(grid, rho, which)[3].max())
    np.savetxt(out / f"{cfg.name}_mass_history.txt", np.asarray(state.mass_history),
               header="t mass boundary_and_source_change limiter_change", fmt="%.17g")
    record = {
        "mass_initial": mass0,
        "mass_final": diag["mass"],
        "min_u00": diag["min_u00"],
        "limiter_activations": diag["limiter_activations"],
        "symmetry_error": float(diag["symmetry_error"]),
        "wall_seconds": time.perf_counter() - t_start,
        "max_u00": diag["max_u00"],
        "steps": state.steps,
        "t_final": state.t,
        "max_mass_defect": float(state.max_mass_defect),
        "realizability_violations": diag["realizability_violations"],
        "trace_cap_hits": closure.capped,
        "max_u00_horizontal_cut": peaks["horizontal"],
        "max_u00_diagonal_cut": peaks["diagonal"],
        "anisotropy_ratio": peaks["horizontal"] / peaks["diagonal"] if peaks["diagonal"] > 0 else float("nan"),
        "closure": closure.name,
        "lb": closure.lb_mode,
    }
    fieldio.write_summary(out / "summary.txt", record)
    if not quiet:
        for k in fieldio.SUMMARY_KEYS:
            print(f"{k} = {record[k]}")
    return record


def _cmd_run(args):
    from . import config as config_mod

    cfg = config_mod.apply_overrides(config_mod.load(args.config), args.override)
    run(cfg, args.out)
    return 0


def _cmd_preset(args):
    from . import config as config_mod

    cfg = config_mod.preset(args.name, nx=args.nx, closure=args.closure)
    cfg = config_mod.apply_overrides(cfg, args.override)
    if args.write_config:
        print(config_mod.to_text(cfg), end="")
        return 0
    run(cfg, args.out)
    return 0


def _cmd_tabulate(args):
    from . import entropy

    table = entropy.qm1_tabulate(args.resolution)
    table.save(args.out)
    print(f"wrote {args.out} ({len(table.data)} grid rows, {len(table.ring)} boundary rows)")
    return 0


def _cmd_check(args):
    from . import fieldio

    rep = fieldio.check_realizability(args.field, args.slack)
    print(f"cells = {rep['cells']}")
    print(f"violations = {rep['violations']}")
    for i, j, m in rep["worst"]:
        print(f"cell ({i}, {j}) margin = {m:.6e}")
    return 0 if rep["violations"] == 0 else 1


def _cmd_cuts(args):
    from pathlib import Path

    from . import fieldio
    from .closures import make_closure
    from .solver import Grid, cut

    f = fieldio.read_field(args.field)
    grid = Grid(f.nx, f.ny, *f.bounds)
    labels = make_closure(f.closure).labels
    stem = Path(args.field).with_suffix("")
    for which in ("horizontal", "diagonal"):
        s, x, y, vals = cut(grid, f.moments, which)
        path = Path(f"{stem}_cut_{which}.txt")
        fieldio.write_cut(path, s, x, y, vals, labels, {"closure": f.closure, "t": repr(f.t), "cut": which})
        print(f"wrote {path}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixmom", description="Moment-closure transport simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configuration file")
    r.add_argument("config")
    r.add_argument("--override", "-o", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--out", default=None, help="output directory (default: output.directory)")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("preset", help="run a benchmark preset")
    s.add_argument("name", choices=("linesource", "twobeams", "twobeams-rotated"))
    s.add_argument("--nx", type=int, default=100)
    s.add_argument("--closure", default="mk1")
    s.add_argument("--override", "-o", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out", default=None)
    s.add_argument("--write-config", action="store_true", help="print the config instead of running")
    s.set_defaults(func=_cmd_preset)

    t = sub.add_parser("tabulate", help="build the quarter entropy table")
    t.add_argument("--resolution", type=int, default=128)
    t.add_argument("--out", default="qm1_table.txt")
    t.set_defaults(func=_cmd_tabulate)

    c = sub.add_parser("check", help="audit realizability of a field file")
    c.add_argument("field")
    c.add_argument("--slack", type=float, default=1e-10)
    c.set_defaults(func=_cmd_check)

    k = sub.add_parser("cuts", help="extract horizontal and diagonal cuts from a field file")
    k.add_argument("field")
    k.set_defaults(func=_cmd_cuts)
    return p


def main(argv=None) -> int:
    _apply_thread_env()
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from .config import ConfigError
    from .fieldio import FieldFormatError
    from .solver import SolverError

    try:
        return args.func(args)
    except (ConfigError, FieldFormatError, SolverError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
