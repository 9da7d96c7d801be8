"""Line-search Newton-CG at fixed regularization.

Each iteration takes the adjoint gradient, solves the Newton system with CG
on finite-difference Hessian products (inexact, forcing term
``min(0.5, sqrt(||g||)) ||g||``), then backtracks from ``gamma = 1`` by
halving until ``J`` strictly decreases.  Iterations stop once the relative
change of ``J`` falls under ``stagnation_tol``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .ledger import RunLedger
from .objective import FD_SCHEMES, ObjectiveValue
from .sparse import cg_real


@dataclass(frozen=True)
class NewtonConfig:
    cg_step_floor: float = 1e-3
    stagnation_tol: float = 1e-3
    max_newton: int = 50
    max_backtracks: int = 30
    fd_scheme: str = "forward"
    max_cg: Optional[int] = None     # None: dimension of k
    h_fd: Optional[float] = None     # None: sqrt(eps) (1 + ||k||) / ||v||

    def __post_init__(self):
        if self.fd_scheme not in FD_SCHEMES:
            raise ValueError(f"unknown finite-difference scheme {self.fd_scheme!r}")
        if min(self.cg_step_floor, self.stagnation_tol) <= 0:
            raise ValueError("tolerances must be positive")


class NewtonRecord(NamedTuple):
    iteration: int
    J: float
    D: float
    R: float
    grad_norm: float
    gamma: float
    cg_iters: int
    rel_error: float
    alpha: float


TRACE_COLUMNS = NewtonRecord._fields


@dataclass
class NewtonTrace:
    records: list = field(default_factory=list)
    ledger_delta: RunLedger = field(default_factory=RunLedger)

    def append(self, rec: NewtonRecord):
        self.records.append(rec)

    @property
    def accepted_steps(self) -> int:
        return sum(1 for r in self.records if r.gamma > 0)

    def write_csv(self, path):
        write_rows_csv(path, TRACE_COLUMNS, self.records)


class NewtonResult(NamedTuple):
    k: np.ndarray
    trace: NewtonTrace
    status: str
    value: ObjectiveValue
    steps: int


class CGOutcome(NamedTuple):
    step: np.ndarray
    cg_iters: int
    status: str


class BacktrackResult(NamedTuple):
    gamma: float
    k: np.ndarray
    value: Optional[ObjectiveValue]
    evals: int
    success: bool


def forcing_threshold(grad_norm: float) -> float:
    return min(0.5, np.sqrt(grad_norm)) * grad_norm


def _ledger_of(ctx) -> Optional[RunLedger]:
    return getattr(ctx, "ledger", None)


def cg_inner(ctx, k, grad, config: NewtonConfig) -> CGOutcome:
    """Truncated CG for ``Hess dk = -grad`` with finite-difference products.

    Falls back to ``-grad`` (status ``"steepest-descent"``) when CG cannot
    produce a nonzero step, e.g. negative curvature on the first direction.
    """
    k = np.asarray(k, dtype=float)
    g = np.asarray(grad, dtype=float)
    gnorm = float(np.linalg.norm(g))
    max_cg = config.max_cg if config.max_cg is not None else k.size

    def matvec(v):
        return ctx.hessian_vector_product(k, v, config.fd_scheme, config.h_fd, grad_k=g)

    def small_step(x):
        return np.linalg.norm(x) < config.cg_step_floor

    dk, rep = cg_real(matvec, -g, forcing_threshold(gnorm), max_cg, step_guard=small_step)
    if not np.any(dk):
        return CGOutcome(-g, rep.iterations, "steepest-descent")
    return CGOutcome(dk, rep.iterations, rep.status)


def backtrack(ctx, k, dk, value_k: ObjectiveValue, max_backtracks: int = 30) -> BacktrackResult:
    """First ``gamma`` in ``1, 1/2, 1/4, ...`` with ``J(k + gamma dk) < J(k)``."""
    gamma = 1.0
    for n in range(1, max_backtracks + 1):
        trial = k + gamma * dk
        val = ctx.evaluate_objective(trial)
        if val.J < value_k.J:
            return BacktrackResult(gamma, trial, val, n, True)
        gamma *= 0.5
    return BacktrackResult(0.0, k, None, max_backtracks, False)


def newton_solve(ctx, k_init, config: NewtonConfig = NewtonConfig(), max_steps: Optional[int] = None,
                 stop_on_stagnation: bool = True, initial_value: Optional[ObjectiveValue] = None,
                 stop_when: Optional[Callable[[ObjectiveValue], bool]] = None,
                 exact: Optional[np.ndarray] = None) -> NewtonResult:
    """Minimize ``ctx`` from ``k_init``.

    Parameters
    ----------
    ctx : ObjectiveContext or compatible
        Supplies ``evaluate_objective``, ``gradient`` and
        ``hessian_vector_product``; its ``ledger`` (if any) is updated.
    max_steps : int, optional
        Newton iteration cap (defaults to ``config.max_newton``).
    stop_on_stagnation : bool
        With False exactly ``max_steps`` iterations run unless the gradient
        vanishes or the line search fails.
    stop_when : callable, optional
        Called with the new value after every accepted step; True stops.
    exact : array, optional
        Ground truth for the relative-error column of the trace.

    Returns
    -------
    NewtonResult
        With ``max_steps = 0`` nothing is evaluated and ``value`` is
        ``initial_value`` (possibly None).  ``status`` is one of ``"stagnation"``, ``"max-steps"``,
        ``"line-search-failure"``, ``"zero-gradient"``, ``"stopped"``.
    """
    if max_steps is None:
        max_steps = config.max_newton
    k = np.array(k_init, dtype=float)
    if max_steps == 0:
        return NewtonResult(k, NewtonTrace(), "max-steps", initial_value, 0)
    ledger = _ledger_of(ctx)
    start = ledger.snapshot() if ledger is not None else None
    value = ctx.evaluate_objective(k) if initial_value is None else initial_value
    alpha = float(getattr(ctx, "alpha", np.nan))

    def rel_err(kk):
        if exact is None:
            return float("nan")
        return float(np.linalg.norm(kk - exact) / np.linalg.norm(exact))

    trace = NewtonTrace()
    trace.append(NewtonRecord(0, value.J, value.D, value.R, float("nan"), float("nan"), 0, rel_err(k), alpha))
    status = "max-steps"
    steps = 0
    for it in range(1, max_steps + 1):
        grad = ctx.gradient(k).gradient
        gnorm = float(np.linalg.norm(grad))
        if gnorm == 0.0:
            status = "zero-gradient"
            break
        dk, cg_iters, _ = cg_inner(ctx, k, grad, config)
        steps += 1
        if ledger is not None:
            ledger.newton_iterations += 1
            ledger.cg_iterations += cg_iters
        ls = backtrack(ctx, k, dk, value, config.max_backtracks)
        if not ls.success:
            trace.append(NewtonRecord(it, value.J, value.D, value.R, gnorm, 0.0, cg_iters, rel_err(k), alpha))
            status = "line-search-failure"
            break
        change = abs(ls.value.J - value.J) / max(abs(value.J), 1e-300)
        k, value = ls.k, ls.value
        trace.append(NewtonRecord(it, value.J, value.D, value.R, gnorm, ls.gamma, cg_iters, rel_err(k), alpha))
        if stop_when is not None and stop_when(value):
            status = "stopped"
            break
        if stop_on_stagnation and change < config.stagnation_tol:
            status = "stagnation"
            break
    if ledger is not None:
        trace.ledger_delta = ledger - start
    return NewtonResult(k, trace, status, value, steps)


def write_rows_csv(path, columns, rows):
    """CSV with a header row, LF endings and 17 significant digits for floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_cell(v) for v in row])


def format_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)
