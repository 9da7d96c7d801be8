import time

import numpy as np
import pytest

from rfgnt.drivers import early_stopping_run, gnt_run, lcurve_sweep, rfgnt_run
from rfgnt.ledger import RunLedger
from rfgnt.newton import NewtonConfig
from rfgnt.objective import GradientReport, ObjectiveContext, ObjectiveValue, fd_hessian_vector_product
from rfgnt.scattering import GridConfig, attach_data, make_phantom, make_problem

SMALL = GridConfig(16, 2, 2, 6)


class QuadraticContext:
    """``J(k) = 1/2 k^T Q k - c^T k`` with the objective-context interface."""

    def __init__(self, Q, c, alpha=0.0):
        self.Q = np.asarray(Q, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.alpha = alpha
        self.ledger = RunLedger()

    def evaluate_objective(self, k):
        self.ledger.count_objective(1)
        J = 0.5 * k @ self.Q @ k - self.c @ k
        return ObjectiveValue(J, J, 0.0)

    def gradient(self, k):
        self.ledger.count_gradient(1)
        J = 0.5 * k @ self.Q @ k - self.c @ k
        return GradientReport(J, J, 0.0, self.Q @ k - self.c)

    def hessian_vector_product(self, k, v, scheme="forward", h_fd=None, grad_k=None):
        return fd_hessian_vector_product(self, k, v, scheme, h_fd, grad_k)

    @property
    def minimizer(self):
        return np.linalg.solve(self.Q, self.c)


@pytest.fixture
def quadratic():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((6, 6))
    return QuadraticContext(m @ m.T + 6 * np.eye(6), rng.standard_normal(6))


@pytest.fixture(scope="session")
def small_problem():
    """16x16 interior, 3 angles, 10% noise."""
    problem = make_problem(SMALL, n_angles=3)
    return attach_data(problem, make_phantom(problem.grid), seed=0)


@pytest.fixture(scope="session")
def noiseless_small():
    problem = make_problem(SMALL, n_angles=3)
    return attach_data(problem, make_phantom(problem.grid), seed=0, sigma=0.0)


DESK_SEED = 0


class DeskRun:
    def __init__(self, result, ctx, seconds):
        self.result = result
        self.ledger = ctx.ledger
        self.problem = ctx.problem
        k = getattr(result, "k", None)
        self.rel_error = ctx.problem.relative_error(k) if k is not None else float("nan")
        self.seconds = seconds


def _timed(fn, problem):
    ctx = ObjectiveContext(problem)
    t0 = time.perf_counter()
    result = fn(ctx)
    return DeskRun(result, ctx, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def desk_problem_shared():
    """48x48 interior, 8 angles, 10% noise, eta = 1."""
    problem = make_problem()
    return attach_data(problem, make_phantom(problem.grid), seed=DESK_SEED, noise_target=0.1)


@pytest.fixture(scope="session")
def desk_rfgnt(desk_problem_shared):
    p = desk_problem_shared
    return _timed(lambda ctx: rfgnt_run(ctx, p.prior(), 0.0, 1.0), p)


@pytest.fixture(scope="session")
def desk_rfgnt_central(desk_problem_shared):
    p = desk_problem_shared
    return _timed(lambda ctx: rfgnt_run(ctx, p.prior(), 0.0, 1.0, config=NewtonConfig(fd_scheme="central")), p)


@pytest.fixture(scope="session")
def desk_gnt(desk_problem_shared):
    p = desk_problem_shared
    return _timed(lambda ctx: gnt_run(ctx, p.prior(), alpha0=1.0), p)


@pytest.fixture(scope="session")
def desk_early(desk_problem_shared):
    p = desk_problem_shared
    return _timed(lambda ctx: early_stopping_run(ctx, p.prior()), p)


@pytest.fixture(scope="session")
def desk_lcurve(desk_problem_shared):
    p = desk_problem_shared
    return _timed(lambda ctx: lcurve_sweep(ctx, p.prior(), np.linspace(0.0, 0.5, 10)), p)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
