import math

import numpy as np
import pytest

from bspde_lab.errors import PreconditionError
from bspde_lab.field import constant, make_grid
from bspde_lab.levy import LambdaWeight, LevyModel
from bspde_lab.problem import ConcaveDriver, ExpressionDriver, LinearDriver, ProblemSpec, Terminal
from bspde_lab.risk import affinity_defect, convexity_suite, monotonicity_suite, rho, translation_suite
from bspde_lab.solver import SchemeParams
from bspde_lab.tree import build_tree

PI = math.pi
LEVY = LevyModel((0.5,), (1.0,))


def make(M=41, **kw):
    base = dict(grid=make_grid(0, PI, M), T=1.0, a_diff=constant(1.0), phi=Terminal.from_function(np.sin))
    base.update(kw)
    return ProblemSpec(**base)


def jumps(**kw):
    return make(levy=LEVY, lam=LambdaWeight.constant([0.4]), **kw)


SIN = Terminal.from_function(np.sin, "sin(x)")
BUMP = Terminal.from_function(lambda x: x * (PI - x) / PI, "x(pi-x)/pi")


def test_rho_heat():
    s = make(M=101)
    r = rho(s, SIN, build_tree(12, 1.0, s.levy), SchemeParams(12))
    assert np.max(np.abs(r + math.exp(-1) * np.sin(s.grid.x))) <= 0.02


def test_rho_zero_and_constant():
    s = make()
    tree = build_tree(5, 1.0, s.levy)
    zero = Terminal.from_function(lambda x: 0 * x)
    assert np.all(rho(s, zero, tree, SchemeParams(5)) == 0.0)
    five = Terminal.from_function(lambda x: 5 + 0 * x)
    r = rho(s, five, tree, SchemeParams(5), boundary=constant(5.0))
    assert np.max(np.abs(r + 5.0)) <= 1e-12


def test_rho_rejects_u_dependence():
    for d in (LinearDriver(c_u=0.1), ExpressionDriver("u + Z")):
        s = make(driver=d)
        with pytest.raises(PreconditionError):
            rho(s, SIN, build_tree(2, 1.0, s.levy), SchemeParams(2))
        with pytest.raises(PreconditionError):
            translation_suite(s, SIN, 1.0, build_tree(2, 1.0, s.levy), SchemeParams(2))


@pytest.mark.parametrize(
    "spec,c",
    [
        (make(), 0.0),
        (make(M=101), 1.0),
        (jumps(driver=ConcaveDriver(c0=constant(0.2), gamma=1.0), beta=lambda t: 0.3), -0.5),
    ],
)
def test_translation(spec, c):
    tree = build_tree(8, 1.0, spec.levy)
    phi = Terminal.from_expression("sin(x)*(1 + 0.5*sin(B) + 0.3*L)")
    rep = translation_suite(spec, phi, c, tree, SchemeParams(8))
    assert rep.passed and rep.worst_violation <= 1e-10 * max(1.0, np.max(np.abs(rep.rho)) + abs(c))
    if c == 0.0:
        assert rep.worst_violation == 0.0


def test_monotonicity():
    s = jumps(driver=ConcaveDriver(gamma=1.0))
    tree = build_tree(7, 1.0, LEVY)
    phi1 = Terminal.from_expression("sin(x)*cos(B)")
    phi2 = Terminal.from_expression("sin(x)*cos(B) + 0.2*sin(x)^2*(1 + L^2)")
    rep = monotonicity_suite(s, phi1, phi2, tree, SchemeParams(7))
    assert rep.passed and rep.rows[0]["verdict"] == "pass"
    with pytest.raises(PreconditionError):
        monotonicity_suite(s, phi2, phi1, tree, SchemeParams(7))


def test_monotonicity_identical_and_monotone_tier():
    s = jumps()
    tree = build_tree(6, 1.0, LEVY)
    rep = monotonicity_suite(s, SIN, SIN, tree, SchemeParams(6))
    assert rep.passed and rep.worst_violation == 0.0
    rep = monotonicity_suite(s, SIN, Terminal.from_function(lambda x: np.sin(x) + 0.1 * np.sin(x) ** 3), tree,
                             SchemeParams(6))
    assert rep.passed and rep.rows[0]["tier"] == "monotone" and rep.tolerance == 1e-10


def test_convexity_identity_cases():
    s = jumps(driver=ConcaveDriver(gamma=1.0))
    tree = build_tree(7, 1.0, LEVY)
    rep = convexity_suite(s, SIN, BUMP, [0.0, 1.0], tree, SchemeParams(7))
    assert rep.passed and all(row["violation"] == 0.0 for row in rep.rows)


def test_convexity_affine_equality():
    s = jumps(driver=LinearDriver(c0=lambda t, x: np.cos(x) * t, c_v=0.4, c_Z=-0.7), beta=lambda t: 0.2)
    tree = build_tree(7, 1.0, LEVY)
    phi1 = Terminal.from_expression("sin(x)*exp(B)")
    rep = convexity_suite(s, phi1, BUMP, [0.0, 0.25, 0.5, 0.75, 1.0], tree, SchemeParams(7))
    scale = max(1.0, float(np.max(np.abs(rep.rho))))
    assert rep.passed and rep.worst_violation <= 1e-10 * 10 * scale
    assert rep.tolerance < 1e-8


def test_convexity_literal_example():
    s = jumps(driver=ConcaveDriver(gamma=1.0))
    rep = convexity_suite(s, SIN, BUMP, [0.5], build_tree(8, 1.0, LEVY), SchemeParams(8))
    assert rep.passed and rep.rows[0]["min_slack"] >= -rep.tolerance


def test_convexity_concave_driver():
    s = jumps(driver=ConcaveDriver(gamma=1.0))
    tree = build_tree(8, 1.0, LEVY)
    phi1 = Terminal.from_expression("sin(x)*(1 + sin(3*B))")
    rep = convexity_suite(s, phi1, BUMP, [0.5], tree, SchemeParams(8))
    assert rep.passed and rep.rows[0]["min_slack"] >= -rep.tolerance
    # the Z-penalty makes the mixture strictly cheaper somewhere
    assert rep.rows[0]["min_slack"] < 1e-6 and max(row["min_slack"] for row in rep.rows) > -rep.tolerance


def test_convexity_preconditions():
    tree = build_tree(2, 1.0, LEVY)
    with pytest.raises(PreconditionError):
        convexity_suite(jumps(driver=ExpressionDriver("abs(Z)")), SIN, BUMP, [0.5], tree, SchemeParams(2))
    with pytest.raises(PreconditionError):
        convexity_suite(jumps(), SIN, BUMP, [1.5], tree, SchemeParams(2))


@pytest.mark.parametrize("alpha", [-1.5, 0.0, 0.3, 2.0])
def test_affine_driver_gives_affine_rho(alpha):
    s = jumps(driver=LinearDriver(c0=lambda t, x: np.sin(2 * x), c_Z=0.5), beta=lambda t: 0.1)
    tree = build_tree(6, 1.0, LEVY)
    phi = Terminal.from_expression("sin(x)*(B + L)")
    assert affinity_defect(s, phi, alpha, tree, SchemeParams(6)) <= 1e-10


def test_concave_driver_not_affine():
    s = jumps(driver=ConcaveDriver(gamma=1.0))
    tree = build_tree(6, 1.0, LEVY)
    phi = Terminal.from_expression("sin(x)*(B + L)")
    assert affinity_defect(s, phi, -1.0, tree, SchemeParams(6)) > 1e-4
