import math

import numpy as np
import pytest

from bspde_lab.comparison import (
    GENERAL_TOL,
    MONOTONE_TOL,
    explicit_step_monotone,
    run_comparison,
    verify_hypotheses,
)
from bspde_lab.errors import ConfigurationError
from bspde_lab.field import constant, make_grid
from bspde_lab.levy import LambdaWeight, LevyModel
from bspde_lab.problem import ConcaveDriver, ExpressionDriver, LinearDriver, ProblemSpec, Terminal
from bspde_lab.solver import SchemeParams, solve_stochastic
from bspde_lab.tree import build_tree

PI = math.pi
GRID = make_grid(0, PI, 41)
LEVY = LevyModel((0.5,), (1.0,))
LAM = LambdaWeight.constant([0.5], 1.0)
PHI = "sin(x)*(1 + 0.3*sin(B) + 0.2*L)"


def make(phi=PHI, **kw):
    base = dict(grid=GRID, T=1.0, a_diff=lambda t, x: 0.8 + 0.2 * np.sin(x), phi=Terminal.from_expression(phi),
                levy=LEVY, lam=LAM)
    base.update(kw)
    return ProblemSpec(**base)


def test_verify_identical():
    s = make(driver=ConcaveDriver(gamma=0.5))
    tree = build_tree(6, 1.0, LEVY)
    hyp = verify_hypotheses(s, s, solve_stochastic(s, tree, SchemeParams(6)))
    assert hyp.passed and hyp.terminal_gap == 0.0 and hyp.driver_gap == 0.0


def test_verify_ordered_terminals():
    s1 = make(phi="sin(x)")
    s2 = make(phi="sin(x) + 0.1*x*(pi - x)")
    tree = build_tree(4, 1.0, LEVY)
    hyp = verify_hypotheses(s1, s2, solve_stochastic(s1, tree, SchemeParams(4)))
    assert hyp.terminal_ordered and hyp.passed
    # both data are pinned to g = 0 on the boundary, so the worst gap is attained there
    assert hyp.terminal_gap == pytest.approx(0.0, abs=1e-15)


def test_verify_driver_gap_voids():
    s1 = make(driver=LinearDriver(c0=constant(0.1)))
    s2 = make(driver=LinearDriver(c0=constant(0.0)))
    tree = build_tree(4, 1.0, LEVY)
    hyp = verify_hypotheses(s1, s2, solve_stochastic(s1, tree, SchemeParams(4)))
    assert not hyp.driver_dominated and hyp.driver_gap == pytest.approx(0.1, abs=1e-14)
    rep = run_comparison(s1, s2, SchemeParams(4), tree=tree)
    assert rep.verdict == "void" and not rep.hypotheses.passed
    assert any("b1 > b2" in f for f in rep.hypotheses.failures())


def test_verify_second_problem_assumptions():
    tree = build_tree(4, 1.0, LEVY)
    s1 = make()
    bad_lambda = make(lam=LambdaWeight.constant([1.5], 1.0))
    assert not verify_hypotheses(s1, bad_lambda, solve_stochastic(s1, tree, SchemeParams(4))).A3.passed
    no_lipschitz = make(driver=ExpressionDriver("rint"))
    hyp = verify_hypotheses(s1, no_lipschitz, solve_stochastic(s1, tree, SchemeParams(4)))
    assert hyp.A2.passed is None and not hyp.passed
    declared = make(driver=ExpressionDriver("rint", lipschitz=1.0))
    assert verify_hypotheses(s1, declared, solve_stochastic(s1, tree, SchemeParams(4))).passed


def test_mismatched_discretisations():
    s1 = make()
    with pytest.raises(ConfigurationError):
        run_comparison(s1, make(grid=make_grid(0, PI, 21)), SchemeParams(3))
    with pytest.raises(ConfigurationError):
        run_comparison(s1, make(a_diff=constant(1.0)), SchemeParams(3))
    with pytest.raises(ConfigurationError):
        run_comparison(s1, make(beta=lambda t: 0.1), SchemeParams(3))
    with pytest.raises(ConfigurationError):
        run_comparison(s1, make(levy=LevyModel((0.5,), (2.0,)), lam=LAM), SchemeParams(3))


def test_run_identical():
    s = make(driver=ConcaveDriver(gamma=1.0), beta=lambda t: 0.3)
    rep = run_comparison(s, s, SchemeParams(6))
    assert rep.verdict == "pass" and rep.max_positive_part == 0.0 and np.all(rep.expected_defect == 0.0)


def test_run_ordered_monotone_tier():
    drv = LinearDriver(c0=lambda t, x: np.cos(x), c_u=0.5)
    s1 = make(driver=drv, lam=None)
    s2 = make(phi=PHI + " + 0.2*sin(x)^2", driver=drv, lam=None)
    rep = run_comparison(s1, s2, SchemeParams(6))
    assert rep.tier == "monotone" and rep.tolerance == MONOTONE_TOL
    assert rep.verdict == "pass" and rep.max_positive_part <= MONOTONE_TOL


def test_run_general_tier_with_jumps():
    s1 = make(driver=ConcaveDriver(gamma=1.0), beta=lambda t: 0.3)
    s2 = make(phi=PHI + " + 0.1*sin(x)", driver=ConcaveDriver(c0=constant(0.05), gamma=1.0), beta=lambda t: 0.3)
    rep = run_comparison(s1, s2, SchemeParams(8))
    assert rep.tier == "general" and rep.tolerance == pytest.approx(GENERAL_TOL * rep.scale)
    assert rep.verdict == "pass" and rep.max_positive_part <= rep.tolerance
    assert rep.expected_defect[0] <= rep.expected_defect[-1] + rep.tolerance**2


def test_monotone_tier_conditions():
    tree = build_tree(4, 1.0, LEVY)
    assert explicit_step_monotone(make(driver=ConcaveDriver(gamma=1.0)), tree)
    assert not explicit_step_monotone(make(driver=ConcaveDriver(gamma=3.0)), tree)
    assert not explicit_step_monotone(make(driver=LinearDriver(c_v=0.1)), tree)
    assert not explicit_step_monotone(make(driver=ExpressionDriver("Z")), tree)
    assert not explicit_step_monotone(make(driver=LinearDriver(c_u=5.0)), tree)


def test_swap_is_consistent():
    s1 = make()
    s2 = make(phi=PHI + " + 0.2*sin(x)")
    forward = run_comparison(s1, s2, SchemeParams(6), keep_bundles=True)
    reverse = run_comparison(s2, s1, SchemeParams(6), keep_bundles=True)
    assert forward.verdict == "pass"
    assert reverse.verdict == "void" and not reverse.hypotheses.terminal_ordered
    gap = max(float(np.max(forward.bundle2.u[k] - forward.bundle1.u[k])) for k in range(7))
    assert reverse.max_positive_part == pytest.approx(gap, abs=1e-15) and gap > 0.1


def test_unstable_scheme_reports_fail():
    # explicit diffusion far beyond its stability limit: hypotheses hold, ordering breaks
    s1 = make(phi="0*x", lam=None, levy=LevyModel())
    s2 = make(phi="max(0, 0.5 - abs(x - 1.5))", lam=None, levy=LevyModel())
    rep = run_comparison(s1, s2, SchemeParams(8, theta=0.0))
    assert rep.hypotheses.passed and rep.verdict == "fail"
