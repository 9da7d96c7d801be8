import numpy as np
import pytest

from rfgnt.drivers import (DiscrepancyPoint, LCurvePoint, TargetUnreachable, early_stopping_run, gnt_run,
                           interpolate_warm_start, lcurve_corner, lcurve_sweep, min_error_index,
                           regula_falsi_alpha, rfgnt_run)
from rfgnt.newton import NewtonConfig, newton_solve
from rfgnt.objective import ObjectiveContext


def affine_hook(intercept, slope, calls=None):
    """Discrepancy curve ``D(alpha) = intercept + slope * alpha`` with ``k = alpha * ones``."""
    def solve(alpha, k_start):
        if calls is not None:
            calls.append((alpha, np.array(k_start)))
        D = intercept + slope * alpha
        return DiscrepancyPoint(alpha, D, 1.0 / (1.0 + alpha), D, np.full(3, alpha), 1, "hook")
    return solve


class FakeCtx:
    def __init__(self):
        from rfgnt.ledger import RunLedger
        self.ledger = RunLedger()


def point(alpha, D, k):
    return DiscrepancyPoint(alpha, D, 0.0, D, np.asarray(k, dtype=float))


class TestRegulaFalsiPieces:
    def test_chord_root(self):
        assert regula_falsi_alpha(point(0, 1, [0]), point(1, 3, [0]), 2.0) == pytest.approx(0.5)
        assert regula_falsi_alpha(point(0.2, 4, [0]), point(0.6, 8, [0]), 5.0) == pytest.approx(0.3)

    def test_warm_start_endpoints(self):
        lo, hi = point(0.1, 1, [1.0, 2.0]), point(0.5, 2, [3.0, 6.0])
        np.testing.assert_allclose(interpolate_warm_start(0.1, lo, hi), lo.k)
        np.testing.assert_allclose(interpolate_warm_start(0.5, lo, hi), hi.k)
        np.testing.assert_allclose(interpolate_warm_start(0.3, lo, hi), [2.0, 4.0])


class TestRfgntHook:
    def test_affine_curve_one_step(self):
        calls = []
        res = rfgnt_run(FakeCtx(), np.zeros(3), 0.0, 1.0, eta_eps=2.5, solve_point=affine_hook(1.0, 2.0, calls))
        assert calls[2][0] == pytest.approx(0.75, abs=1e-15)
        assert res.alpha == pytest.approx(0.75, abs=1e-15)
        assert res.status == "converged"
        assert len(res.extra["inner_steps"]) == 1
        # warm start of the first regula falsi solve interpolates the bracket solutions
        np.testing.assert_allclose(calls[2][1], np.full(3, 0.75))

    def test_migration_right(self):
        calls = []
        res = rfgnt_run(FakeCtx(), np.zeros(3), 0.0, 1.0, eta_eps=7.0, solve_point=affine_hook(1.0, 2.0, calls))
        assert res.extra["migrations"] >= 1
        assert res.alpha == pytest.approx(3.0)
        for lo_a, lo_d, hi_a, hi_d in res.extra["brackets"]:
            assert lo_a < hi_a and lo_d <= 7.0 <= hi_d

    def test_unreachable_target(self):
        with pytest.raises(TargetUnreachable):
            rfgnt_run(FakeCtx(), np.zeros(3), 0.0, 1.0, eta_eps=0.5, solve_point=affine_hook(1.0, 2.0))

    def test_bad_bracket(self):
        with pytest.raises(ValueError):
            rfgnt_run(FakeCtx(), np.zeros(3), 1.0, 0.5, eta_eps=1.0, solve_point=affine_hook(0, 1))

    def test_migration_cap(self):
        def saturating(alpha, k_start):
            D = 2.0 - np.exp(-alpha)
            return DiscrepancyPoint(alpha, D, 0.0, D, np.zeros(3), 1)
        with pytest.raises(TargetUnreachable):
            rfgnt_run(FakeCtx(), np.zeros(3), 0.0, 1.0, eta_eps=5.0, migration_cap=3, solve_point=saturating)

    def test_nonlinear_curve_stays_in_bracket(self):
        def solve(alpha, k_start):
            D = 1.0 + np.sqrt(alpha)
            return DiscrepancyPoint(alpha, D, 0.0, D, np.full(2, alpha), 1)
        res = rfgnt_run(FakeCtx(), np.zeros(2), 0.0, 1.0, eta_eps=1.5, solve_point=solve)
        assert res.status == "converged"
        assert res.alpha == pytest.approx(0.25, rel=2e-3)
        for row in res.history:
            assert 0.0 <= row.alpha <= 1.0


class TestGnt:
    def test_step_identity(self, small_problem):
        ctx = ObjectiveContext(small_problem)
        res = gnt_run(ctx, small_problem.prior(), alpha0=1.0, max_outer=6)
        for i, row in enumerate(res.history, start=1):
            assert row.newton_iterations == i * (i + 3) // 2
        assert res.D <= small_problem.eta_eps or res.status == "max-outer"
        assert res.alpha > 0

    def test_immediate_stop(self, small_problem):
        ctx = ObjectiveContext(small_problem)
        res = gnt_run(ctx, small_problem.prior(), alpha0=0.7, eta_eps=1e12)
        assert res.status == "converged"
        assert ctx.ledger.newton_iterations == 2
        assert res.alpha == 0.7
        assert len(res.history) == 1

    def test_rejects_nonpositive_alpha(self, small_problem):
        with pytest.raises(ValueError):
            gnt_run(ObjectiveContext(small_problem), small_problem.prior(), alpha0=0.0)


class TestEarlyStopping:
    def test_exact_start(self, noiseless_small):
        ctx = ObjectiveContext(noiseless_small)
        res = early_stopping_run(ctx, noiseless_small.exact_field)
        assert res.status == "target-met"
        assert ctx.ledger.newton_iterations == 0

    def test_infinite_target(self, small_problem):
        ctx = ObjectiveContext(small_problem)
        res = early_stopping_run(ctx, small_problem.prior(), eta_eps=np.inf)
        assert ctx.ledger.newton_iterations == 0
        np.testing.assert_array_equal(res.k, small_problem.prior())

    def test_stops_at_target(self, small_problem):
        ctx = ObjectiveContext(small_problem)
        res = early_stopping_run(ctx, small_problem.prior())
        assert res.D <= small_problem.eta_eps
        assert ctx.ledger.identity_violations(small_problem.n_angles) == []


class TestLCurve:
    def test_single_point_matches_newton(self, small_problem):
        ctx = ObjectiveContext(small_problem)
        pts = lcurve_sweep(ctx, small_problem.prior(), [0.2])
        ref = newton_solve(ObjectiveContext(small_problem, 0.2), small_problem.prior())
        assert len(pts) == 1
        np.testing.assert_array_equal(pts[0].k, ref.k)
        assert pts[0].D == ref.value.D

    def test_rejects_bad_grids(self, small_problem):
        ctx = ObjectiveContext(small_problem)
        with pytest.raises(ValueError):
            lcurve_sweep(ctx, small_problem.prior(), [])
        with pytest.raises(ValueError):
            lcurve_sweep(ctx, small_problem.prior(), [0.3, 0.1])

    def test_corner_of_synthetic_l(self):
        # log R falls steeply then log D grows with R flat: corner at index 3
        logD = [0.0, 0.01, 0.02, 0.03, 1.0, 2.0, 3.0]
        logR = [3.0, 2.0, 1.0, 0.0, -0.01, -0.02, -0.03]
        pts = [(np.exp(d), np.exp(r)) for d, r in zip(logD, logR)]
        res = lcurve_corner(pts)
        assert res.index == 3 and not res.degenerate

    def test_collinear_is_degenerate(self):
        pts = [(np.exp(t), np.exp(-t)) for t in (0.0, 1.0, 2.0)]
        res = lcurve_corner(pts)
        assert res.degenerate and res.index == 0

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            lcurve_corner([(1, 1), (2, 0.5)])

    def test_min_error_index(self):
        mk = lambda e: LCurvePoint(0, 1, 1, 1, None, e, 0, "")
        assert min_error_index([mk(0.3), mk(0.1), mk(np.nan)]) == 1
        assert min_error_index([mk(np.nan)]) is None


def test_rfgnt_repeatable(small_problem):
    runs = []
    for _ in range(2):
        ctx = ObjectiveContext(small_problem)
        runs.append(rfgnt_run(ctx, small_problem.prior(), config=NewtonConfig(), max_outer=4))
    np.testing.assert_array_equal(runs[0].k, runs[1].k)
    assert runs[0].history == runs[1].history
