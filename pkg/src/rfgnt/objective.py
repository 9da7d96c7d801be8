"""Tikhonov cost functional, adjoint-state gradient and finite-difference Hessian products.

``J(k) = D(k) + alpha R(k)`` with ``D(k) = ||L u(k) - data||^2`` summed over
all angles and ``R(k) = ||k - k_prior||^2``.  ``k`` lives on the interior grid;
outside it the wave number is frozen at ``k0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .ledger import RunLedger
from .scattering import ScatteringProblem, forward_solve, restrict, restrict_adjoint

FD_SCHEMES = ("forward", "central", "backward")


class ObjectiveValue(NamedTuple):
    J: float
    D: float
    R: float
    u: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GradientReport:
    value: float
    discrepancy: float
    regularization: float
    gradient: np.ndarray


class ObjectiveContext:
    """Cost functional at a fixed ``alpha`` over a :class:`ScatteringProblem`.

    Contexts made with :meth:`with_alpha` share the problem, the prior and
    the ledger, so one ledger accounts for a whole driver run.
    """

    def __init__(self, problem: ScatteringProblem, alpha: float = 0.0,
                 k_prior: Optional[np.ndarray] = None, ledger: Optional[RunLedger] = None):
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if problem.observations is None:
            raise ValueError("problem has no observations attached")
        self.problem = problem
        self.alpha = float(alpha)
        self.k_prior = problem.prior() if k_prior is None else np.asarray(k_prior, dtype=float)
        if self.k_prior.size != problem.n_unknowns:
            raise ValueError("k_prior does not match the interior grid")
        self.ledger = RunLedger() if ledger is None else ledger

    def with_alpha(self, alpha: float) -> "ObjectiveContext":
        return ObjectiveContext(self.problem, alpha, self.k_prior, self.ledger)

    @property
    def n_angles(self) -> int:
        return self.problem.n_angles

    def _residual(self, u):
        return restrict(self.problem, u) - self.problem.observations

    def evaluate_objective(self, k) -> ObjectiveValue:
        """One multi-angle forward solve; returns J, D, R and the scattered waves."""
        k = np.asarray(k, dtype=float)
        u = forward_solve(self.problem, k)
        self.ledger.count_objective(self.n_angles)
        res = self._residual(u)
        D = float(np.sum(res.real ** 2 + res.imag ** 2))
        dk = k - self.k_prior
        R = float(dk @ dk)
        return ObjectiveValue(D + self.alpha * R, D, R, u)

    def solve_adjoint(self, k, u) -> np.ndarray:
        """``H^*(k) lam = L^*(L u - data)`` for every angle."""
        rhs = restrict_adjoint(self.problem, self._residual(u))
        lam = self.problem.model.solve(k, rhs, adjoint=True)
        self.ledger.adjoint_solves += 1
        self.ledger.helmholtz_solves += self.n_angles
        return lam

    def gradient(self, k) -> GradientReport:
        """Adjoint-state gradient: one forward and one adjoint multi-angle solve.

        Per interior point ``j``: ``dJ/dk_j = 2 Re sum_theta conj(lam_j) (df/dk_j - dH/dk_j u)_j
        + 2 alpha (k_j - k_prior_j)`` with ``df/dk_j = -2 k_j u_in`` and ``dH/dk_j u = 2 k_j u_j``.
        """
        k = np.asarray(k, dtype=float)
        u = forward_solve(self.problem, k)
        res = self._residual(u)
        rhs = restrict_adjoint(self.problem, res)
        lam = self.problem.model.solve(k, rhs, adjoint=True)
        self.ledger.count_gradient(self.n_angles)
        idx = self.problem.model.interior
        total = self.problem.u_in[:, idx] + u[:, idx]
        g = -4.0 * k * np.sum(np.real(np.conj(lam[:, idx]) * total), axis=0)
        dk = k - self.k_prior
        g += 2.0 * self.alpha * dk
        D = float(np.sum(res.real ** 2 + res.imag ** 2))
        R = float(dk @ dk)
        return GradientReport(D + self.alpha * R, D, R, g)

    def hessian_vector_product(self, k, v, scheme: str = "forward", h_fd: Optional[float] = None,
                               grad_k: Optional[np.ndarray] = None) -> np.ndarray:
        """Finite difference of gradients along ``v``.

        Central costs two gradients; forward/backward cost one plus the
        gradient at ``k`` (pass it as ``grad_k`` to avoid recomputing it).
        """
        return fd_hessian_vector_product(self, k, v, scheme, h_fd, grad_k)


def default_fd_step(k, v) -> float:
    return float(np.sqrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(k)) / np.linalg.norm(v))


def fd_hessian_vector_product(ctx, k, v, scheme="forward", h_fd=None, grad_k=None):
    """Shared by every context type exposing ``gradient(k).gradient``."""
    if scheme not in FD_SCHEMES:
        raise ValueError(f"unknown finite-difference scheme {scheme!r}")
    k = np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("direction must be nonzero")
    h = default_fd_step(k, v) if h_fd is None else float(h_fd)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    if scheme == "central":
        return (ctx.gradient(k + h * v).gradient - ctx.gradient(k - h * v).gradient) / (2 * h)
    if grad_k is None:
        grad_k = ctx.gradient(k).gradient
    if scheme == "forward":
        return (ctx.gradient(k + h * v).gradient - grad_k) / h
    return (grad_k - ctx.gradient(k - h * v).gradient) / h


def directional_fd_check(ctx: ObjectiveContext, k, directions, step: Optional[float] = None):
    """Compare adjoint directional derivatives with central differences of ``J``.

    Returns the array of relative errors ``|<g, v> - fd| / (|fd| + 1e-12)``.
    """
    k = np.asarray(k, dtype=float)
    if step is None:
        step = 1e-6 * (1.0 + np.linalg.norm(k))
    g = ctx.gradient(k).gradient
    errs = []
    for v in directions:
        v = np.asarray(v, dtype=float)
        fd = (ctx.evaluate_objective(k + step * v).J - ctx.evaluate_objective(k - step * v).J) / (2 * step)
        errs.append(abs(g @ v - fd) / (abs(fd) + 1e-12))
    return np.array(errs)
