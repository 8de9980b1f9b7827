"""Tests for convergence-order studies and the slope fit."""

import math

import numpy as np
import pytest

from ergosde import converge, model
from ergosde.converge import StudyBudget, analytic_em_ou_rows, ergodic_error_study, fit_order

P1 = model.get_problem("p1")
PHI_SQ = model.get_test_function("square")

SMALL_GRID = (0.2, 0.1, 0.05, 0.025)


def small_budget(seed=1, factor=1.0):
    return StudyBudget(
        n_chains=256,
        pilot_steps=int(4_000_000 * factor),
        max_row_steps=4e8 * factor,
        min_row_steps=2e6 * factor,
        seed=seed,
    )


def test_fit_order_exact_quadratic_rows():
    rows = [(t, t**2, 0.0) for t in (0.04, 0.02, 0.01, 0.005)]
    slope, ci = fit_order(rows)
    assert abs(slope - 2.0) < 1e-9
    assert ci[0] <= 2.0 <= ci[1]


def test_fit_order_analytic_ar1_rows():
    # exact EM-on-OU ergodic errors tau/(2 - tau): first order up to O(tau)
    slope, ci = fit_order(analytic_em_ou_rows())
    assert 0.95 <= slope <= 1.05


def test_fit_order_requires_three_rows():
    with pytest.raises(ValueError, match="at least 3"):
        fit_order([(0.1, 0.1, 0.0), (0.05, 0.05, 0.0)])


def test_fit_order_rejects_zero_errors():
    with pytest.raises(ValueError, match="positive"):
        fit_order([(0.1, 0.0, 0.0), (0.05, 0.05, 0.0), (0.025, 0.02, 0.0)])


def test_fit_order_known_variance_ci_width():
    rows = [(0.04, 0.1, 0.01), (0.02, 0.05, 0.005), (0.01, 0.025, 0.0025)]
    slope, ci = fit_order(rows)
    assert ci[0] < slope < ci[1]
    # 10% relative noise per row on a 3-row ln-2-spaced grid
    assert (ci[1] - ci[0]) / 2.0 == pytest.approx(1.96 * 0.1 / (0.5661 * math.sqrt(3)), rel=0.05)


def test_ou_em_study_first_order():
    rep = ergodic_error_study(P1, "em", PHI_SQ, tau_grid=SMALL_GRID, budget=small_budget())
    assert rep.status == "ok"
    assert 0.9 <= rep.slope <= 1.1
    assert rep.slope_ci[0] > 0.5
    taus = [r.tau for r in rep.rows]
    assert taus == sorted(taus, reverse=True)
    # errors shadow the exact AR(1) values
    for row in rep.rows:
        exact = row.tau / (2.0 - row.tau)
        assert abs(row.abs_error - exact) <= 4.0 * row.stderr + 1e-12


def test_study_reproducible_bitwise():
    a = ergodic_error_study(P1, "em", PHI_SQ, tau_grid=SMALL_GRID, budget=small_budget())
    b = ergodic_error_study(P1, "em", PHI_SQ, tau_grid=SMALL_GRID, budget=small_budget())
    assert a == b


def test_budget_monotonicity_keeps_verdict():
    # quadrupling the budget must not flip a passing slope verdict
    lo = ergodic_error_study(P1, "em", PHI_SQ, tau_grid=SMALL_GRID, budget=small_budget())
    hi = ergodic_error_study(
        P1, "em", PHI_SQ, tau_grid=SMALL_GRID, budget=small_budget(factor=4.0)
    )
    assert lo.status == "ok" and hi.status == "ok"
    assert 0.9 <= lo.slope <= 1.1
    assert 0.9 <= hi.slope <= 1.1


def test_starved_budget_reports_inconclusive():
    budget = StudyBudget(
        n_chains=64,
        pilot_steps=200_000,
        max_row_steps=2e5,
        min_row_steps=1e5,
        stderr_factor=5.0,
        seed=3,
    )
    rep = ergodic_error_study(
        P1, "em", PHI_SQ, tau_grid=(0.002, 0.001, 0.0005), budget=budget
    )
    assert rep.status == "inconclusive - increase budget"
    assert math.isnan(rep.slope)
    assert not any(r.included for r in rep.rows)


def test_study_requires_three_taus():
    with pytest.raises(ValueError, match="three distinct"):
        ergodic_error_study(P1, "em", PHI_SQ, tau_grid=(0.1, 0.05), budget=small_budget())
