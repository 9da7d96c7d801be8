"""Automatic regularization drivers.

* :func:`gnt_run` - secant updates of alpha against the discrepancy target,
  restarting the regularized Newton sequence from the initial guess every
  outer iteration (i outer iterations cost ``i (i + 3) / 2`` Newton steps).
* :func:`rfgnt_run` - regula falsi on a bracket ``[alpha_lo, alpha_hi]``
  with each inner solve warm-started by interpolating the bracket solutions.
* :func:`early_stopping_run` and :func:`lcurve_sweep` / :func:`lcurve_corner`
  as baselines.

All drivers take an :class:`~rfgnt.objective.ObjectiveContext` (any alpha);
contexts for other alphas are derived from it and share its ledger.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .gat import gat_alpha_update
from .ledger import RunLedger
from .newton import NewtonConfig, NewtonRecord, newton_solve

log = logging.getLogger(__name__)


class TargetUnreachable(RuntimeError):
    pass


@dataclass
class DiscrepancyPoint:
    alpha: float
    D: float
    R: float
    J: float
    k: np.ndarray = field(repr=False)
    newton_steps: int = 0
    status: str = ""


class HistoryRow(NamedTuple):
    outer_iter: int
    phase: str
    alpha: float
    D: float
    R: float
    newton_steps: int
    rel_error: float
    newton_iterations: int
    cg_iterations: int
    objective_evaluations: int
    gradient_evaluations: int
    pde_solves: int
    adjoint_solves: int
    helmholtz_solves: int


HISTORY_COLUMNS = HistoryRow._fields


@dataclass
class DriverResult:
    method: str
    k: np.ndarray
    alpha: float
    D: float
    status: str
    history: list = field(default_factory=list)
    ledger: RunLedger = field(default_factory=RunLedger)
    newton_trace: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _exact(ctx):
    problem = getattr(ctx, "problem", None)
    return None if problem is None else problem.exact_field


def _rel_error(ctx, k) -> float:
    exact = _exact(ctx)
    if exact is None:
        return float("nan")
    return float(np.linalg.norm(k - exact) / np.linalg.norm(exact))


def _row(ctx, outer, phase, alpha, D, R, steps, k) -> HistoryRow:
    led = ctx.ledger
    return HistoryRow(outer, phase, alpha, D, R, steps, _rel_error(ctx, k), led.newton_iterations,
                      led.cg_iterations, led.objective_evaluations, led.gradient_evaluations,
                      led.pde_solves, led.adjoint_solves, led.helmholtz_solves)


def _collect(trace_rows: list, result, phase: str, outer: int):
    for rec in result.trace.records:
        trace_rows.append((outer, phase) + tuple(rec))


def newton_point(ctx, alpha: float, k_start, config: NewtonConfig,
                 trace_rows: Optional[list] = None, phase: str = "", outer: int = 0) -> DiscrepancyPoint:
    """Newton solve at ``alpha`` to stagnation, packaged as a discrepancy-curve point."""
    res = newton_solve(ctx.with_alpha(alpha), k_start, config, exact=_exact(ctx))
    if trace_rows is not None:
        _collect(trace_rows, res, phase, outer)
    return DiscrepancyPoint(alpha, res.value.D, res.value.R, res.value.J, res.k, res.steps, res.status)


def gnt_run(ctx, k_init, alpha0: float = 1.0, eta_eps: Optional[float] = None, max_outer: int = 20,
            config: NewtonConfig = NewtonConfig()) -> DriverResult:
    """Generalized Newton-Tikhonov.

    Outer iteration ``i``: one more Newton step on the unregularized sequence
    (continued from its last iterate), ``i`` Newton steps at ``alpha_{i-1}``
    restarted from ``k_init``, then stop if ``D_i(alpha_{i-1}) <= eta_eps`` or
    apply the absolute-value secant update through ``(0, D_i(0))``.
    Stagnation is not checked inside these fixed-length Newton runs.
    """
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    if eta_eps is None:
        eta_eps = ctx.problem.eta_eps
    k_init = np.asarray(k_init, dtype=float)
    exact = _exact(ctx)
    ctx0 = ctx.with_alpha(0.0)
    k_zero, val_zero = k_init, None
    alpha = float(alpha0)
    history, trace_rows = [], []
    k_reg, d_alpha = k_init, float("nan")
    status = "max-outer"
    for i in range(1, max_outer + 1):
        res0 = newton_solve(ctx0, k_zero, config, max_steps=1, stop_on_stagnation=False,
                            initial_value=val_zero, exact=exact)
        _collect(trace_rows, res0, "unregularized", i)
        k_zero, val_zero = res0.k, res0.value
        resa = newton_solve(ctx.with_alpha(alpha), k_init, config, max_steps=i,
                            stop_on_stagnation=False, exact=exact)
        _collect(trace_rows, resa, "regularized", i)
        k_reg, d_alpha = resa.k, resa.value.D
        history.append(_row(ctx, i, "gnt", alpha, d_alpha, resa.value.R, res0.steps + resa.steps, k_reg))
        log.info("GNT %d: alpha=%.6g D(0)=%.6g D(alpha)=%.6g target=%.6g",
                 i, alpha, val_zero.D, d_alpha, eta_eps)
        if d_alpha <= eta_eps:
            status = "converged"
            break
        alpha = gat_alpha_update(eta_eps, val_zero.D, d_alpha, alpha)
    return DriverResult("gnt", k_reg, alpha, d_alpha, status, history, ctx.ledger.snapshot(), trace_rows)


def regula_falsi_alpha(lo: DiscrepancyPoint, hi: DiscrepancyPoint, eta_eps: float) -> float:
    """Where the chord through the two curve points reaches ``eta_eps``."""
    return (eta_eps - lo.D) / (hi.D - lo.D) * (hi.alpha - lo.alpha) + lo.alpha


def interpolate_warm_start(alpha: float, lo: DiscrepancyPoint, hi: DiscrepancyPoint) -> np.ndarray:
    """Linear interpolation (in alpha) between the two bracket solutions."""
    w = (alpha - lo.alpha) / (hi.alpha - lo.alpha)
    return w * (hi.k - lo.k) + lo.k


def _migrate(solve, lo, hi, eta_eps, cap):
    """Secant-shift ``[lo, hi]`` until ``lo.D <= eta_eps <= hi.D``."""
    moves = 0
    while not (lo.D <= eta_eps <= hi.D):
        if moves >= cap:
            raise TargetUnreachable("discrepancy target unreachable in given range")
        moves += 1
        slope_ok = hi.D != lo.D and np.isfinite(hi.D - lo.D)
        guess = regula_falsi_alpha(lo, hi, eta_eps) if slope_ok else np.nan
        if hi.D < eta_eps:
            # both points fit too well: move right
            new_alpha = guess if np.isfinite(guess) and guess > hi.alpha else 2.0 * hi.alpha
            near = hi
            pt = solve(new_alpha, near.k, moves)
            lo, hi = hi, pt
        else:
            # both points fit too poorly: move left
            if lo.alpha == 0.0:
                raise TargetUnreachable("discrepancy target unreachable in given range")
            new_alpha = guess if np.isfinite(guess) and 0.0 <= guess < lo.alpha else 0.5 * lo.alpha
            pt = solve(new_alpha, lo.k, moves)
            lo, hi = pt, lo
    return lo, hi, moves


def rfgnt_run(ctx, k_init, alpha_lo: float = 0.0, alpha_hi: float = 1.0, eta_eps: Optional[float] = None,
              max_outer: int = 30, config: NewtonConfig = NewtonConfig(), alpha_tol: float = 1e-3,
              migration_cap: int = 20,
              solve_point: Optional[Callable[[float, np.ndarray], DiscrepancyPoint]] = None) -> DriverResult:
    """Regula falsi generalized Newton-Tikhonov.

    Parameters
    ----------
    ctx : ObjectiveContext
        Problem and shared ledger.
    alpha_lo, alpha_hi : float
        Initial bracket; shifted by secant steps if it does not enclose the
        target.
    alpha_tol : float
        Stop once ``|alpha_2 - alpha_2_old| / alpha_2_old < alpha_tol``.
    solve_point : callable, optional
        ``(alpha, k_start) -> DiscrepancyPoint`` replacing the Newton solve
        (test hook).

    Returns
    -------
    DriverResult
        ``extra["brackets"]`` lists ``(alpha_lo, D_lo, alpha_hi, D_hi)`` after
        every replacement, ``extra["inner_steps"]`` the Newton steps of each
        regula falsi solve.
    """
    if not alpha_lo < alpha_hi:
        raise ValueError("alpha_lo must be smaller than alpha_hi")
    if eta_eps is None:
        eta_eps = ctx.problem.eta_eps
    k_init = np.asarray(k_init, dtype=float)
    history, trace_rows = [], []

    def default_solve(alpha, k_start, outer=0, phase=""):
        return newton_point(ctx, alpha, k_start, config, trace_rows, phase, outer)

    def solve(alpha, k_start, outer=0, phase=""):
        if solve_point is not None:
            return solve_point(alpha, k_start)
        return default_solve(alpha, k_start, outer, phase)

    def note(outer, phase, pt):
        history.append(_row(ctx, outer, phase, pt.alpha, pt.D, pt.R, pt.newton_steps, pt.k))

    lo = solve(alpha_lo, k_init, 0, "initial-lo")
    note(0, "initial-lo", lo)
    hi = solve(alpha_hi, k_init, 0, "initial-hi")
    note(0, "initial-hi", hi)

    def migrate_solve(alpha, k_start, move):
        pt = solve(alpha, k_start, 0, "migrate")
        note(0, "migrate", pt)
        return pt

    lo, hi, moves = _migrate(migrate_solve, lo, hi, eta_eps, migration_cap)
    brackets = [(lo.alpha, lo.D, hi.alpha, hi.D)]
    inner_steps = []
    bracket_range = (lo.alpha, hi.alpha)
    alpha_old = None
    current = None
    status = "max-outer"
    for i in range(1, max_outer + 1):
        if hi.D == lo.D:
            status = "flat-bracket"
            break
        alpha2 = regula_falsi_alpha(lo, hi, eta_eps)
        start = interpolate_warm_start(alpha2, lo, hi)
        current = solve(alpha2, start, i, "regula-falsi")
        inner_steps.append(current.newton_steps)
        note(i, "regula-falsi", current)
        log.info("RFGNT %d: alpha=%.8g D=%.8g target=%.8g steps=%d",
                 i, alpha2, current.D, eta_eps, current.newton_steps)
        if current.D == eta_eps:
            status = "converged"
            break
        if alpha_old is not None:
            if alpha_old != 0.0:
                done = abs(alpha2 - alpha_old) / alpha_old < alpha_tol
            else:
                done = abs(alpha2 - alpha_old) < 1e-12
            if done:
                status = "converged"
                break
        alpha_old = alpha2
        if current.D <= eta_eps:
            lo = current
        else:
            hi = current
        brackets.append((lo.alpha, lo.D, hi.alpha, hi.D))
    if current is None:
        current = lo if abs(lo.D - eta_eps) <= abs(hi.D - eta_eps) else hi
    ledger = ctx.ledger.snapshot() if hasattr(ctx, "ledger") else RunLedger()
    return DriverResult("rfgnt", current.k, current.alpha, current.D, status, history, ledger, trace_rows,
                        {"brackets": brackets, "inner_steps": inner_steps, "migrations": moves,
                         "bracket_range": bracket_range})


def early_stopping_run(ctx, k_init, eta_eps: Optional[float] = None, max_steps: int = 50,
                       config: NewtonConfig = NewtonConfig()) -> DriverResult:
    """Unregularized Newton stopped as soon as ``D <= eta_eps`` (or on stagnation)."""
    if eta_eps is None:
        eta_eps = ctx.problem.eta_eps
    ctx0 = ctx.with_alpha(0.0)
    k_init = np.asarray(k_init, dtype=float)
    value = ctx0.evaluate_objective(k_init)
    history, trace_rows = [], []
    if value.D <= eta_eps:
        history.append(_row(ctx, 0, "early-stop", 0.0, value.D, value.R, 0, k_init))
        return DriverResult("early-stop", k_init, 0.0, value.D, "target-met", history,
                            ctx.ledger.snapshot(), trace_rows)
    res = newton_solve(ctx0, k_init, config, max_steps=max_steps, initial_value=value,
                       stop_when=lambda v: v.D <= eta_eps, exact=_exact(ctx))
    _collect(trace_rows, res, "unregularized", 1)
    history.append(_row(ctx, 1, "early-stop", 0.0, res.value.D, res.value.R, res.steps, res.k))
    status = "target-met" if res.value.D <= eta_eps else res.status
    return DriverResult("early-stop", res.k, 0.0, res.value.D, status, history,
                        ctx.ledger.snapshot(), trace_rows)


class LCurvePoint(NamedTuple):
    alpha: float
    D: float
    R: float
    J: float
    k: np.ndarray
    rel_error: float
    newton_steps: int
    status: str


LCURVE_COLUMNS = ("alpha", "D", "R", "J", "rel_error", "newton_steps", "status")


def lcurve_sweep(ctx, k_init, alphas, config: NewtonConfig = NewtonConfig(),
                 trace_rows: Optional[list] = None) -> list:
    """Full Newton solve from ``k_init`` at every alpha (nondecreasing).

    A failing point is recorded with NaN values and the sweep continues.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("alphas must be nonempty")
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be nondecreasing")
    k_init = np.asarray(k_init, dtype=float)
    points = []
    for j, a in enumerate(alphas):
        try:
            pt = newton_point(ctx, a, k_init, config, trace_rows, "lcurve", j)
        except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("L-curve point alpha=%g failed: %s", a, exc)
            nan = float("nan")
            points.append(LCurvePoint(a, nan, nan, nan, k_init, nan, 0, f"failed: {exc}"))
            continue
        points.append(LCurvePoint(a, pt.D, pt.R, pt.J, pt.k, _rel_error(ctx, pt.k), pt.newton_steps, pt.status))
    return points


def min_error_index(points) -> Optional[int]:
    errs = np.array([p.rel_error for p in points], dtype=float)
    if np.all(np.isnan(errs)):
        return None
    return int(np.nanargmin(errs))


class CornerResult(NamedTuple):
    index: int
    curvature: np.ndarray
    degenerate: bool


def lcurve_corner(points, tiny: float = 1e-12) -> CornerResult:
    """Maximum signed Menger curvature of the ``(log D, log R)`` polyline.

    Points are taken in the given (increasing alpha) order; a corner bending
    towards the origin has positive curvature.  Ties go to the larger alpha.
    If no interior point bends that way beyond ``tiny`` the curve is
    degenerate and the first (smallest alpha) index is returned.
    """
    if len(points) < 3:
        raise ValueError("need at least three points")
    D = np.array([p.D if hasattr(p, "D") else p[0] for p in points], dtype=float)
    R = np.array([p.R if hasattr(p, "R") else p[1] for p in points], dtype=float)
    floor = np.finfo(float).tiny
    x = np.log(np.maximum(D, floor))
    y = np.log(np.maximum(R, floor))
    kappa = np.full(len(points), np.nan)
    for j in range(1, len(points) - 1):
        ax, ay = x[j] - x[j - 1], y[j] - y[j - 1]
        bx, by = x[j + 1] - x[j], y[j + 1] - y[j]
        cx, cy = x[j + 1] - x[j - 1], y[j + 1] - y[j - 1]
        denom = np.hypot(ax, ay) * np.hypot(bx, by) * np.hypot(cx, cy)
        if denom == 0 or not np.isfinite(denom):
            continue
        kappa[j] = 2.0 * (ax * by - ay * bx) / denom
    inner = kappa[1:-1]
    if np.all(np.isnan(inner)) or np.nanmax(inner) <= tiny:
        return CornerResult(0, kappa, True)
    best = np.nanmax(inner)
    idx = max(j for j in range(1, len(points) - 1) if kappa[j] == best)
    return CornerResult(idx, kappa, False)
