import csv

import numpy as np
import pytest

from rfgnt.newton import (TRACE_COLUMNS, NewtonConfig, backtrack, cg_inner, forcing_threshold, newton_solve,
                          write_rows_csv)
from rfgnt.objective import ObjectiveContext
from rfgnt.scattering import attach_data, make_phantom, make_problem

from conftest import QuadraticContext


def test_forcing_threshold():
    assert forcing_threshold(4.0) == pytest.approx(2.0)
    assert forcing_threshold(0.09) == pytest.approx(0.027)


def test_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(fd_scheme="sideways")
    with pytest.raises(ValueError):
        NewtonConfig(stagnation_tol=0.0)


class TestCgInner:
    def test_identity_hessian(self):
        g = np.array([1.0, -2.0, 0.5, 3.0])
        ctx = QuadraticContext(np.eye(4), -g)
        out = cg_inner(ctx, np.zeros(4), g, NewtonConfig())
        np.testing.assert_allclose(out.step, -g, rtol=1e-6)
        assert out.cg_iters == 1

    def test_negative_curvature_falls_back_to_descent(self):
        g = np.array([1.0, 2.0, 3.0])
        ctx = QuadraticContext(-np.eye(3), -g)
        out = cg_inner(ctx, np.zeros(3), g, NewtonConfig())
        assert out.status == "steepest-descent"
        np.testing.assert_array_equal(out.step, -g)


class TestBacktrack:
    def newton_dir(self, ctx, k):
        return np.linalg.solve(ctx.Q, -(ctx.Q @ k - ctx.c))

    def test_full_step_accepted(self, quadratic):
        k = np.zeros(6)
        res = backtrack(quadratic, k, self.newton_dir(quadratic, k), quadratic.evaluate_objective(k))
        assert res.success and res.gamma == 1.0 and res.evals == 1

    def test_ascent_direction_fails(self, quadratic):
        k = np.zeros(6)
        g = quadratic.Q @ k - quadratic.c
        res = backtrack(quadratic, k, g, quadratic.evaluate_objective(k), max_backtracks=12)
        assert not res.success
        assert res.evals == 12 and res.gamma == 0.0
        np.testing.assert_array_equal(res.k, k)

    @pytest.mark.parametrize("scale,gamma", [(1.0, 1.0), (3.0, 0.5), (6.0, 0.25), (12.0, 0.125)])
    def test_evaluation_count(self, quadratic, scale, gamma):
        # along the Newton ray J decreases exactly for step lengths in (0, 2)
        k = np.zeros(6)
        res = backtrack(quadratic, k, scale * self.newton_dir(quadratic, k), quadratic.evaluate_objective(k))
        assert res.gamma == gamma
        assert res.evals == np.log2(1 / res.gamma) + 1


class TestNewtonSolve:
    def test_scaled_identity_one_step(self):
        ctx = QuadraticContext(2.0 * np.eye(5), np.arange(1.0, 6.0))
        res = newton_solve(ctx, np.zeros(5), max_steps=1)
        assert res.steps == 1
        assert res.trace.records[-1].gamma == 1.0
        np.testing.assert_allclose(res.k, ctx.minimizer, rtol=1e-7)

    def test_quadratic_converges(self, quadratic):
        res = newton_solve(quadratic, np.zeros(6), NewtonConfig(stagnation_tol=1e-10))
        # inexact CG: each step cuts the error by the forcing factor
        np.testing.assert_allclose(res.k, quadratic.minimizer, rtol=1e-4)
        assert res.trace.records[1].gamma == 1.0
        J = [r.J for r in res.trace.records if r.gamma != 0]
        assert all(b < a for a, b in zip(J, J[1:]))

    def test_zero_steps_leaves_everything(self, quadratic):
        k0 = np.ones(6)
        res = newton_solve(quadratic, k0, max_steps=0)
        np.testing.assert_array_equal(res.k, k0)
        assert res.steps == 0 and res.trace.records == []
        assert quadratic.ledger.as_dict() == dict.fromkeys(quadratic.ledger.as_dict(), 0)

    def test_exact_start_noiseless(self, noiseless_small):
        ctx = ObjectiveContext(noiseless_small, 0.0)
        res = newton_solve(ctx, noiseless_small.exact_field)
        assert res.steps == 0
        assert res.status == "zero-gradient"
        assert ctx.ledger.newton_iterations == 0
        np.testing.assert_array_equal(res.k, noiseless_small.exact_field)

    def test_stop_callback(self, small_problem):
        ctx = ObjectiveContext(small_problem, 0.0)
        res = newton_solve(ctx, small_problem.prior(), stop_when=lambda v: True)
        assert res.status == "stopped" and res.steps == 1

    def test_ledger_accounting(self, small_problem):
        ctx = ObjectiveContext(small_problem, 0.2)
        res = newton_solve(ctx, small_problem.prior(), NewtonConfig(fd_scheme="central"), max_steps=2)
        led = res.trace.ledger_delta
        assert led.newton_iterations == res.steps
        cg = sum(r.cg_iters for r in res.trace.records)
        assert led.cg_iterations == cg
        # one gradient per Newton step plus two per central-difference product
        assert led.gradient_evaluations == res.steps + 2 * cg
        assert led.identity_violations(3) == []

    def test_forward_scheme_gradient_count(self, small_problem):
        ctx = ObjectiveContext(small_problem, 0.2)
        res = newton_solve(ctx, small_problem.prior(), NewtonConfig(fd_scheme="forward"), max_steps=2)
        led = res.trace.ledger_delta
        cg = sum(r.cg_iters for r in res.trace.records)
        assert led.gradient_evaluations == res.steps + cg

    def test_desk_trace(self):
        problem = make_problem()
        attach_data(problem, make_phantom(problem.grid), seed=0)
        ctx = ObjectiveContext(problem, 0.3)
        k0 = problem.prior()
        g0 = np.linalg.norm(ctx.gradient(k0).gradient)
        res = newton_solve(ctx, k0, exact=problem.exact_field)
        J = [r.J for r in res.trace.records if r.gamma != 0]
        assert all(b < a for a, b in zip(J, J[1:]))
        assert np.linalg.norm(ctx.gradient(res.k).gradient) <= g0 / 10
        assert res.trace.records[-1].rel_error < res.trace.records[0].rel_error

    def test_trace_csv(self, quadratic, tmp_path):
        res = newton_solve(quadratic, np.zeros(6), max_steps=2)
        path = tmp_path / "trace.csv"
        res.trace.write_csv(path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        rows = list(csv.reader(raw.decode().splitlines()))
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert len(rows) == len(res.trace.records) + 1
        assert float(rows[1][1]) == res.trace.records[0].J


def test_csv_float_format(tmp_path):
    path = tmp_path / "x.csv"
    write_rows_csv(path, ("a", "b", "c"), [(0.1, 3, "x"), (np.float64(1 / 3), np.int64(2), True)])
    assert path.read_text() == "a,b,c\n0.10000000000000001,3,x\n0.33333333333333331,2,1\n"
