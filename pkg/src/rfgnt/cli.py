"""Command-line front end: ``rfgnt run | compare | gat-demo | gradient-check``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
Output directories default to ``$RFGNT_OUTPUT_ROOT/<method>-<fd_scheme>-seed<seed>``
(``./runs`` when the variable is unset).
"""

from __future__ import annotations

import argparse
import io as _stdio
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .drivers import (HISTORY_COLUMNS, LCURVE_COLUMNS, DriverResult, TargetUnreachable, early_stopping_run,
                      gnt_run, lcurve_corner, lcurve_sweep, min_error_index, rfgnt_run)
from .gat import deblur_problem, gat_run
from .io import (ConfigError, ExperimentConfig, config_from_mapping, echo_config, format_kv, load_config,
                 parse_kv, write_field, write_pgm)
from .ledger import RunLedger
from .newton import TRACE_COLUMNS, NewtonConfig, format_cell, write_rows_csv
from .objective import ObjectiveContext, directional_fd_check
from .scattering import ForwardSolveError, GridConfig, attach_data, make_phantom, make_problem
from .sparse import SingularMatrixError

log = logging.getLogger("rfgnt")

OUTPUT_ROOT_ENV = "RFGNT_OUTPUT_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
NUMERICAL_ERRORS = (TargetUnreachable, ForwardSolveError, SingularMatrixError, np.linalg.LinAlgError,
                    FloatingPointError, ArithmeticError)

COMPARE_COLUMNS = ("newton_iterations", "cg_iterations", "objective_evaluations", "gradient_evaluations",
                   "pde_solves", "adjoint_solves", "helmholtz_solves", "rel_error", "alpha")
COMPARE_HEADERS = ("Newton", "CG", "J evals", "grad J evals", "PDE", "Adjoint", "Helmholtz",
                   "Rel. error", "alpha")
SCHEME_TAGS = {"backward": "B", "central": "C", "forward": "F"}

# Published full-scale reference rows (200x200 interior, 50 angles); None is an empty cell, printed as ".".
REFERENCE_TABLE = (
    ("B", "GNT", 54, 175, 101, 108, 209, 108, 15850, 0.0803, 0.3431),
    ("B", "RFGNT", 21, 73, 44, 42, 86, 42, 6400, 0.0746, 0.3613),
    ("C", "GNT", 65, 225, 118, 195, 313, 195, 25400, 0.0702, 0.3398),
    ("C", "RFGNT", 21, 72, 44, 63, 107, 63, 8500, 0.0746, 0.3613),
    ("F", "GNT", 54, 175, 101, 108, 209, 108, 15850, 0.0804, 0.3429),
    ("F", "RFGNT", 21, 81, 44, 42, 86, 42, 6400, 0.0747, 0.3613),
    ("F", "Early stopping", 3, 7, 8, 6, 14, 6, 1000, 0.2089, None),
    ("F", "L-curve", 9, 37, 20, 18, 38, 18, 2800, 0.0871, 0.1400),
    ("F", "L-curve (all)", 267, 983, 633, 534, 1167, 534, 85050, None, None),
)


class UsageError(Exception):
    pass


@dataclass
class RunOutcome:
    exit_code: int
    output_dir: Path
    ledger: Optional[RunLedger] = None
    rel_error: float = float("nan")
    result: Optional[DriverResult] = None
    message: str = ""


def output_dir_for(config: ExperimentConfig) -> Path:
    if config.output_dir:
        return Path(config.output_dir)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{config.method}-{config.fd_scheme}-seed{config.seed}"


def newton_config(config: ExperimentConfig) -> NewtonConfig:
    return NewtonConfig(cg_step_floor=config.cg_step_floor, stagnation_tol=config.stagnation_tol,
                        max_newton=config.max_newton, max_backtracks=config.max_backtracks,
                        fd_scheme=config.fd_scheme, h_fd=config.h_fd)


def build_problem(config: ExperimentConfig):
    """Desk problem for ``config`` with synthetic data attached."""
    grid_cfg = GridConfig(config.interior_n, config.buffer_n, config.pre_tail_n, config.tail_n,
                          config.tail_angle, config.half_width)
    problem = make_problem(grid_cfg, config.n_angles, config.k0, config.eta, config.solver, config.workers)
    phantom = make_phantom(problem.grid, config.k0, config.phantom_radius)
    return attach_data(problem, phantom, config.seed, config.noise_level, config.sigma)


def _run_method(config: ExperimentConfig, ctx: ObjectiveContext, out: Path):
    k_init = ctx.problem.exact_field.copy() if config.init == "exact" else ctx.problem.prior()
    nc = newton_config(config)
    if config.method == "gnt":
        return gnt_run(ctx, k_init, config.gnt_alpha0, max_outer=config.max_outer, config=nc)
    if config.method == "rfgnt":
        return rfgnt_run(ctx, k_init, config.alpha0, config.alpha1, max_outer=config.max_outer, config=nc)
    if config.method == "early-stop":
        return early_stopping_run(ctx, k_init, max_steps=config.max_newton, config=nc)
    alphas = np.linspace(config.lcurve_alpha_min, config.lcurve_alpha_max, config.lcurve_points)
    trace_rows = []
    points = lcurve_sweep(ctx, k_init, alphas, nc, trace_rows)
    corner = lcurve_corner(points)
    best = min_error_index(points)
    rows = [(p.alpha, p.D, p.R, p.J, p.rel_error, p.newton_steps, p.status) for p in points]
    write_rows_csv(out / "lcurve.csv", LCURVE_COLUMNS, rows)
    pick = points[corner.index]
    status = "degenerate-corner" if corner.degenerate else "corner"
    return DriverResult("lcurve", pick.k, pick.alpha, pick.D, status, [], ctx.ledger.snapshot(), trace_rows,
                        {"corner_index": corner.index, "min_error_index": best})


def _write_ledger(out: Path, config: ExperimentConfig, ledger: RunLedger, extra: dict):
    record = {"method": config.method, "fd_scheme": config.fd_scheme, "angles": config.n_angles}
    record.update(ledger.as_dict())
    record.update(extra)
    (out / "ledger.kv").write_text(format_kv(record))
    width = max(len(k) for k in record)
    lines = [f"{k.replace('_', ' '):<{width}}  {format_cell(v)}" for k, v in record.items()]
    (out / "ledger.txt").write_text("\n".join(lines) + "\n")


def run_gat_demo(n: int = 32, width: float = 0.05, noise: float = 0.05, seed: int = 0, alpha0: float = 1.0,
                 eta: float = 1.0):
    prob = deblur_problem(n, width, noise, seed)
    res = gat_run(prob.A, prob.b, eta * prob.eps, alpha0)
    x = np.real(res.x)
    rel = float(np.linalg.norm(x - prob.x_true) / np.linalg.norm(prob.x_true))
    return prob, res, x, rel


def _gat_demo_experiment(config: ExperimentConfig, out: Path) -> RunOutcome:
    prob, res, x, rel = run_gat_demo(config.gat_n, config.gat_blur_width, config.noise_level, config.seed,
                                     config.gat_alpha0, config.eta)
    write_rows_csv(out / "gat_history.csv", ("iteration", "alpha", "d_zero", "d_alpha", "stalled"), res.history)
    write_rows_csv(out / "gat_solution.csv", ("index", "x", "x_true"),
                   [(j, x[j], prob.x_true[j]) for j in range(x.size)])
    _write_ledger(out, config, RunLedger(), {"status": res.status, "extensions": res.extensions,
                                             "rel_error": rel, "alpha": float(res.alpha)})
    return RunOutcome(EXIT_OK, out, RunLedger(), rel, None, res.status)


def run_experiment(config: ExperimentConfig, output_dir=None) -> RunOutcome:
    """Run one configured reconstruction and write its artifacts.

    Files: ``config.txt``, ``reconstruction.{txt,pgm}``, ``phantom.{txt,pgm}``
    (each image with a ``.scale.txt`` sidecar), ``trace.csv``, ``history.csv``,
    ``lcurve.csv`` (L-curve only), ``ledger.txt`` and ``ledger.kv``.
    """
    out = Path(output_dir) if output_dir is not None else output_dir_for(config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(echo_config(config))
    try:
        if config.method == "gat-demo":
            return _gat_demo_experiment(config, out)
        problem = build_problem(config)
        n = config.interior_n
        write_field(out / "phantom.txt", problem.exact_field, n)
        write_pgm(out / "phantom.pgm", problem.exact_field, n)
        ctx = ObjectiveContext(problem, 0.0)
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            result = _run_method(config, ctx, out)
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return RunOutcome(EXIT_NUMERICAL, out, message=str(exc))

    ledger = ctx.ledger
    rel = problem.relative_error(result.k)
    write_field(out / "reconstruction.txt", result.k, n)
    write_pgm(out / "reconstruction.pgm", result.k, n)
    write_rows_csv(out / "trace.csv", ("outer", "phase") + TRACE_COLUMNS, result.newton_trace)
    write_rows_csv(out / "history.csv", HISTORY_COLUMNS, result.history)
    _write_ledger(out, config, ledger, {"status": result.status, "eta_eps": problem.eta_eps,
                                        "D": float(result.D), "rel_error": rel, "alpha": float(result.alpha)})
    bad = ledger.identity_violations(config.n_angles)
    if bad:
        msg = "ledger identities violated: " + "; ".join(bad)
        log.error(msg)
        return RunOutcome(EXIT_NUMERICAL, out, ledger, rel, result, msg)
    log.info("%s finished (%s): rel_error=%.6g alpha=%.6g newton=%d", config.method, result.status, rel,
             result.alpha, ledger.newton_iterations)
    return RunOutcome(EXIT_OK, out, ledger, rel, result, result.status)


def _reference_row(entry):
    tag, name, *vals = entry
    return f"{tag} {name} (reference)", vals


def compare_runs(paths, include_reference: bool = False):
    """Table of ledger files: rows are runs, columns the nine cost/quality figures.

    Returns ``(text, csv_text)``.  A missing or malformed file raises
    ``ValueError`` naming it.
    """
    if not paths:
        raise ValueError("at least one ledger file is required")
    rows = []
    for path in paths:
        try:
            rec = parse_kv(Path(path).read_text())
            vals = [int(rec[c]) for c in COMPARE_COLUMNS[:7]]
            vals += [float(rec["rel_error"]), float(rec["alpha"])]
            label = f"{SCHEME_TAGS.get(rec.get('fd_scheme', ''), '?')} {rec['method']}"
        except (OSError, KeyError, ValueError) as exc:
            raise ValueError(f"malformed ledger file {path}: {exc}") from exc
        rows.append((label, vals))
    if include_reference:
        rows += [_reference_row(e) for e in REFERENCE_TABLE]

    def cell(v):
        if v is None:
            return "."
        if isinstance(v, float):
            return "nan" if np.isnan(v) else f"{v:.4f}"
        return str(v)

    label_w = max(len("run"), *(len(r[0]) for r in rows))
    widths = [max(len(h), *(len(cell(r[1][j])) for r in rows)) for j, h in enumerate(COMPARE_HEADERS)]
    lines = ["  ".join([f"{'run':<{label_w}}"] + [f"{h:>{w}}" for h, w in zip(COMPARE_HEADERS, widths)])]
    lines.append("-" * len(lines[0]))
    for label, vals in rows:
        lines.append("  ".join([f"{label:<{label_w}}"] + [f"{cell(v):>{w}}" for v, w in zip(vals, widths)]))
    text = "\n".join(lines) + "\n"

    buf = _stdio.StringIO()
    buf.write(",".join(("run",) + COMPARE_COLUMNS) + "\n")
    for label, vals in rows:
        buf.write(",".join([label] + ["" if v is None else format_cell(v) for v in vals]) + "\n")
    return text, buf.getvalue()


def gradient_check(interior_n: int = 16, n_angles: int = 3, n_directions: int = 10, alpha: float = 0.3,
                   seed: int = 0) -> float:
    """Max relative error of adjoint directional derivatives against central differences of J."""
    grid_cfg = GridConfig(interior_n, 2, 2, 6)
    problem = make_problem(grid_cfg, n_angles)
    attach_data(problem, make_phantom(problem.grid), seed)
    ctx = ObjectiveContext(problem, alpha)
    rng = np.random.default_rng(seed)
    k = problem.prior() + 0.1 * rng.random(problem.n_unknowns)
    dirs = rng.standard_normal((n_directions, problem.n_unknowns))
    return float(np.max(directional_fd_check(ctx, k, dirs)))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rfgnt", description="Regularized Newton reconstructions for 2-D inverse scattering.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("config", help="flat 'key = value' config file ('-' for all defaults)")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    r.add_argument("--output", help="output directory")

    c = sub.add_parser("compare", help="tabulate ledger.kv files")
    c.add_argument("ledgers", nargs="+")
    c.add_argument("--csv", help="also write the table as CSV")
    c.add_argument("--reference", action="store_true", help="append the published full-scale rows")

    g = sub.add_parser("gat-demo", help="linear deblurring with GAT")
    g.add_argument("--n", type=int, default=32)
    g.add_argument("--width", type=float, default=0.05)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--alpha0", type=float, default=1.0)

    f = sub.add_parser("gradient-check", help="adjoint gradient vs finite differences")
    f.add_argument("--interior", type=int, default=16)
    f.add_argument("--angles", type=int, default=3)
    f.add_argument("--directions", type=int, default=10)
    f.add_argument("--alpha", type=float, default=0.3)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--tol", type=float, default=1e-5)
    return p


def _load_run_config(args) -> ExperimentConfig:
    config = ExperimentConfig() if args.config == "-" else load_config(args.config)
    if args.set:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        merged = {k: v for k, v in (line.split(" = ", 1) for line in echo_config(config).splitlines())}
        merged.update(overrides)
        config = config_from_mapping(merged)
    if args.output:
        config = replace(config, output_dir=args.output)
    return config


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")

    if args.command == "run":
        try:
            config = _load_run_config(args)
        except (OSError, ConfigError) as exc:
            print(f"rfgnt run: {exc}", file=sys.stderr)
            return EXIT_USAGE
        outcome = run_experiment(config)
        if outcome.exit_code:
            print(f"rfgnt run: {outcome.message}", file=sys.stderr)
        else:
            print(f"{config.method}: rel_error={outcome.rel_error:.6g} status={outcome.message} "
                  f"output={outcome.output_dir}")
        return outcome.exit_code

    if args.command == "compare":
        try:
            text, csv_text = compare_runs(args.ledgers, args.reference)
        except ValueError as exc:
            print(f"rfgnt compare: {exc}", file=sys.stderr)
            return EXIT_USAGE
        sys.stdout.write(text)
        if args.csv:
            Path(args.csv).write_text(csv_text)
        return EXIT_OK

    if args.command == "gat-demo":
        try:
            _, res, _, rel = run_gat_demo(args.n, args.width, args.noise, args.seed, args.alpha0)
        except (ValueError, np.linalg.LinAlgError) as exc:
            print(f"rfgnt gat-demo: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        for rec in res.history:
            print(f"iter {rec.iteration:3d}  alpha {rec.alpha:.6e}  D(0) {rec.d_zero:.6e}  D(alpha) {rec.d_alpha:.6e}")
        print(f"status={res.status} alpha={res.alpha:.6g} extensions={res.extensions} rel_error={rel:.4g}")
        return EXIT_OK if res.status.startswith("converged") else EXIT_NUMERICAL

    try:
        err = gradient_check(args.interior, args.angles, args.directions, args.alpha, args.seed)
    except NUMERICAL_ERRORS as exc:
        print(f"rfgnt gradient-check: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    ok = err < args.tol
    print(f"max relative error {err:.3e} ({'ok' if ok else 'FAILED'}, tolerance {args.tol:g})")
    return EXIT_OK if ok else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
