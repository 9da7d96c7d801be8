"""Desk-scale behaviour of the drivers beyond the numbered acceptance criteria."""

import numpy as np

from rfgnt.drivers import lcurve_corner, min_error_index


def test_gnt_meets_discrepancy(desk_gnt):
    res = desk_gnt.result
    target = desk_gnt.problem.eta_eps
    assert res.status == "converged"
    assert res.D <= target
    assert abs(res.D - target) / target < 0.05
    assert res.alpha > 0


def test_rfgnt_warm_starts_are_cheap(desk_rfgnt):
    steps = desk_rfgnt.result.extra["inner_steps"]
    assert max(steps) <= 3
    assert steps.count(1) >= len(steps) // 2


def test_rfgnt_alpha_stays_in_initial_bracket(desk_rfgnt):
    res = desk_rfgnt.result
    assert res.extra["migrations"] == 0
    for row in res.history:
        assert 0.0 <= row.alpha <= 1.0


def test_rfgnt_discrepancy_recomputes(desk_rfgnt):
    from rfgnt.objective import ObjectiveContext
    res = desk_rfgnt.result
    val = ObjectiveContext(desk_rfgnt.problem).evaluate_objective(res.k)
    assert abs(val.D - res.D) <= 1e-10 * res.D


def test_early_stopping_is_cheaper_but_worse(desk_early, desk_rfgnt):
    assert desk_early.result.D <= desk_early.problem.eta_eps
    assert desk_early.ledger.newton_iterations < desk_rfgnt.ledger.newton_iterations
    assert desk_early.rel_error > desk_rfgnt.rel_error


def test_lcurve_corner_near_discrepancy_alpha(desk_lcurve, desk_rfgnt):
    pts = desk_lcurve.result
    corner = lcurve_corner(pts)
    a_corner, a_rf = pts[corner.index].alpha, desk_rfgnt.result.alpha
    assert a_rf / 4 <= a_corner <= 4 * a_rf


def test_lcurve_min_error_is_regularized(desk_lcurve):
    pts = desk_lcurve.result
    best = min_error_index(pts)
    assert best is not None and pts[best].alpha > 0
    assert np.isfinite([p.D for p in pts]).all()


def test_central_scheme_costs_more_per_step(desk_rfgnt, desk_rfgnt_central):
    f, c = desk_rfgnt.ledger, desk_rfgnt_central.ledger
    assert c.gradient_evaluations / c.newton_iterations > f.gradient_evaluations / f.newton_iterations
