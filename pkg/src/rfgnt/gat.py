"""Generalized Arnoldi-Tikhonov for linear problems.

Solves ``min ||Ax - b||^2 + alpha ||x||^2`` over a growing Krylov space
``K_i(A, b)`` while secant-updating ``alpha`` towards the discrepancy target
``eta * eps``.  The Krylov basis does not depend on ``alpha``, so every outer
iteration costs exactly one new basis vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .sparse import TOLERANCES, arnoldi_extend, arnoldi_start


class GatRecord(NamedTuple):
    iteration: int
    alpha: float
    d_zero: float
    d_alpha: float
    stalled: bool


@dataclass
class GatState:
    basis: np.ndarray
    hessenberg: np.ndarray
    beta: float
    alpha: float
    eta_eps: float
    history: list = field(default_factory=list)
    breakdown: bool = False
    extensions: int = 0

    @property
    def dimension(self) -> int:
        return self.hessenberg.shape[1]

    def record(self, rec: GatRecord):
        if self.history and rec.iteration <= self.history[-1].iteration:
            raise ValueError("history iterations must increase")
        self.history.append(rec)


def gat_init(b, eta_eps: float, alpha0: float = 1.0) -> GatState:
    if eta_eps <= 0:
        raise ValueError("eta_eps must be positive")
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    V, H = arnoldi_start(b)
    return GatState(V, H, float(np.linalg.norm(b)), float(alpha0), float(eta_eps))


def extend(state: GatState, A) -> bool:
    """Grow the Krylov space by one vector; returns True on breakdown."""
    V, H, broke = arnoldi_extend(A, state.basis, state.hessenberg)
    state.basis, state.hessenberg, state.breakdown = V, H, broke
    state.extensions += 1
    return broke


def projected_tikhonov_solve(state: GatState, alpha: float):
    """Tikhonov minimizer restricted to the current Krylov space.

    Solves the small least-squares problem ``[H; sqrt(alpha) I] y ~ [beta e1; 0]``
    and returns ``(x, ||Ax - b||^2)`` with ``x = V y``.
    """
    H = state.hessenberg
    m, i = H.shape
    if i < 1:
        raise ValueError("Krylov space is empty; extend it first")
    rhs = np.zeros(m, dtype=np.complex128)
    rhs[0] = state.beta
    if alpha > 0:
        M = np.vstack([H, np.sqrt(alpha) * np.eye(i)])
        r = np.concatenate([rhs, np.zeros(i)])
    else:
        M, r = H, rhs
    y = np.linalg.lstsq(M, r, rcond=None)[0]
    x = state.basis[:, :i] @ y
    res = H @ y - rhs
    return x, float(np.real(np.vdot(res, res)))


def _stalled(d_zero: float, d_alpha: float) -> bool:
    return abs(d_alpha - d_zero) < TOLERANCES.stalled_update * max(d_alpha, d_zero, 1.0)


def gat_alpha_update(eta_eps: float, d_zero: float, d_alpha: float, alpha_prev: float) -> float:
    """Secant step through ``(0, D(0))`` and ``(alpha, D(alpha))``, in absolute value.

    A degenerate secant (the two discrepancies coincide) leaves alpha unchanged.
    """
    if _stalled(d_zero, d_alpha):
        return alpha_prev
    return abs((eta_eps - d_zero) / (d_alpha - d_zero)) * alpha_prev


class GatResult(NamedTuple):
    x: np.ndarray
    alpha: float
    history: list
    status: str
    extensions: int


def gat_run(A, b, eta_eps: float, alpha0: float = 1.0, max_iter: int | None = None) -> GatResult:
    """Run GAT until the discrepancy principle ``D_i(alpha_{i-1}) <= eta_eps`` holds.

    ``status`` is ``"converged"``, ``"converged-breakdown"`` (target met after
    the Krylov space became invariant) or ``"max-iter"``.  In the last case
    the returned iterate uses the most recent alpha update.
    """
    b = np.asarray(b, dtype=np.complex128)
    if max_iter is None:
        max_iter = b.shape[0]
    state = gat_init(b, eta_eps, alpha0)
    alpha = state.alpha
    for i in range(1, max_iter + 1):
        if not state.breakdown:
            extend(state, A)
        _, d0 = projected_tikhonov_solve(state, 0.0)
        x, da = projected_tikhonov_solve(state, alpha)
        state.record(GatRecord(i, alpha, d0, da, _stalled(d0, da)))
        if da <= eta_eps:
            state.alpha = alpha
            status = "converged-breakdown" if state.breakdown else "converged"
            return GatResult(x, alpha, state.history, status, state.extensions)
        alpha = gat_alpha_update(eta_eps, d0, da, alpha)
        state.alpha = alpha
    x, _ = projected_tikhonov_solve(state, alpha)
    return GatResult(x, alpha, state.history, "max-iter", state.extensions)


class DeblurProblem(NamedTuple):
    A: np.ndarray
    x_true: np.ndarray
    b: np.ndarray
    eps: float


def deblur_problem(n: int = 32, width: float = 0.05, noise_level: float = 0.05, seed: int = 0) -> DeblurProblem:
    """1-D Gaussian blur on ``[0, 1]`` applied to a box plus a bump, with white noise.

    ``noise_level`` is the relative noise norm ``||e|| / ||A x||``; ``eps`` is
    ``||e||^2``.
    """
    t = (np.arange(n) + 0.5) / n
    A = np.exp(-((t[:, None] - t[None, :]) ** 2) / (2 * width ** 2))
    A /= A.sum(axis=1, keepdims=True)
    x = ((t > 0.2) & (t < 0.45)).astype(float) + 0.6 * np.exp(-((t - 0.7) / 0.08) ** 2)
    clean = A @ x
    e = np.random.default_rng(seed).standard_normal(n)
    e *= noise_level * np.linalg.norm(clean) / np.linalg.norm(e)
    return DeblurProblem(A, x, clean + e, float(e @ e))
