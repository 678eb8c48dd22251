import math

import numpy as np
import pytest

from bspde_lab.errors import ConfigurationError, NumericError, PreconditionError
from bspde_lab.field import constant, make_grid, weak_A
from bspde_lab.levy import LambdaWeight, LevyModel
from bspde_lab.problem import ConcaveDriver, LinearDriver, ProblemSpec, Terminal
from bspde_lab.solver import SchemeParams, residual_check, solve_deterministic, solve_stochastic
from bspde_lab.tree import build_tree

PI = math.pi


def heat(M=101, **kw):
    base = dict(grid=make_grid(0, PI, M), T=1.0, a_diff=constant(1.0), phi=Terminal.from_function(np.sin))
    base.update(kw)
    return ProblemSpec(**base)


def exact_heat(spec, t=0.0):
    return math.exp(-(spec.T - t)) * np.sin(spec.grid.x)


def hat(grid, centre, half_width):
    psi = np.maximum(0.0, 1.0 - np.abs(grid.x - centre) / half_width)
    psi[0] = psi[-1] = 0.0
    return psi


def test_scheme_params_validation():
    with pytest.raises(ConfigurationError):
        SchemeParams(N=0)
    with pytest.raises(ConfigurationError):
        SchemeParams(N=4, theta=1.5)


def test_zero_data_gives_zero():
    s = heat(M=21, phi=Terminal.from_function(lambda x: 0 * x), levy=LevyModel((0.5,), (1.0,)),
             lam=LambdaWeight.constant([0.5]))
    tree = build_tree(5, 1.0, s.levy)
    bundle = solve_stochastic(s, tree, SchemeParams(5))
    for k in range(5):
        assert not np.any(bundle.u[k]) and not np.any(bundle.Z[k]) and not np.any(bundle.r[k])


def test_deterministic_data_collapse_to_oracle():
    s = heat(M=41, driver=LinearDriver(c0=lambda t, x: 0.1 * np.sin(2 * x) + t, c_u=0.4, c_v=0.2),
             levy=LevyModel((1.0,), (0.8,)), beta=lambda t: 0.3, a_diff=lambda t, x: 1 + 0.2 * np.sin(x + t))
    tree = build_tree(7, 1.0, s.levy)
    bundle = solve_stochastic(s, tree, SchemeParams(7))
    det = solve_deterministic(s, SchemeParams(7))
    for k in range(8):
        assert np.max(np.abs(bundle.u[k] - det.u[k][None, :])) <= 1e-10
        if k < 7:
            assert np.max(np.abs(bundle.Z[k])) <= 1e-10 and np.max(np.abs(bundle.r[k])) <= 1e-10
            assert np.all(bundle.u[k] == bundle.u[k][0])


def test_heat_benchmark_deterministic():
    s = heat()
    sol = solve_deterministic(s, SchemeParams(64))
    assert np.max(np.abs(sol.u[0] - exact_heat(s))) <= 0.02


def test_heat_benchmark_on_tree():
    # N = 64 on a binary tree is out of budget; twelve steps already meet the bound
    s = heat()
    bundle = solve_stochastic(s, build_tree(12, 1.0, s.levy), SchemeParams(12))
    assert np.max(np.abs(bundle.root - exact_heat(s))) <= 0.02
    assert np.max(np.abs(bundle.Z[0])) <= 1e-12


def test_reaction_cancels_diffusion():
    s = heat(driver=LinearDriver(c_u=1.0))
    sol = solve_deterministic(s, SchemeParams(64))
    assert np.max(np.abs(sol.u[0] - np.sin(s.grid.x))) <= 0.02


def test_constants_preserved():
    s = heat(M=31, phi=Terminal.from_function(lambda x: 5 + 0 * x), boundary=constant(5.0),
             a_diff=lambda t, x: 0.5 + x * (PI - x) + t, levy=LevyModel((1.0, -1.0), (0.5, 0.5)))
    tree = build_tree(4, 1.0, s.levy)
    bundle = solve_stochastic(s, tree, SchemeParams(4))
    for k in range(5):
        assert np.max(np.abs(bundle.u[k] - 5.0)) <= 1e-12
    for k in range(4):
        assert np.max(np.abs(bundle.Z[k])) <= 1e-12 and np.max(np.abs(bundle.r[k])) <= 1e-12
    det = solve_deterministic(s, SchemeParams(10))
    assert np.max(np.abs(det.u - 5.0)) <= 1e-12


def test_first_order_convergence():
    s = heat()
    errs = [np.max(np.abs(solve_deterministic(s, SchemeParams(N)).u[0] - exact_heat(s))) for N in (16, 32, 64, 128)]
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    assert all(1.7 <= q <= 2.3 for q in ratios), ratios


def test_crank_nicolson_runs_and_is_accurate():
    s = heat()
    sol = solve_deterministic(s, SchemeParams(32, theta=0.5))
    assert np.max(np.abs(sol.u[0] - exact_heat(s))) <= 1e-3


def test_discrete_comparison_principle():
    levy = LevyModel((0.5, -0.8), (0.6, 0.4))
    grid = make_grid(0, PI, 41)
    drv = LinearDriver(c0=lambda t, x: np.cos(3 * x), c_u=0.7)
    phi1 = Terminal.from_expression("sin(x)*(1 + 0.5*sin(B)) + 0.3*L*sin(2*x)")
    phi2 = Terminal.from_expression("sin(x)*(1 + 0.5*sin(B)) + 0.3*L*sin(2*x) + 0.2*sin(x)^2*exp(B)")
    common = dict(grid=grid, T=1.0, a_diff=lambda t, x: 0.6 + 0.3 * np.sin(x), driver=drv, levy=levy)
    s1 = ProblemSpec(phi=phi1, **common)
    s2 = ProblemSpec(phi=phi2, boundary=lambda t, x: 0.1 * (1 - t), **common)
    tree = build_tree(6, 1.0, levy)
    b1 = solve_stochastic(s1, tree, SchemeParams(6))
    b2 = solve_stochastic(s2, tree, SchemeParams(6))
    for k in range(7):
        assert np.max(b1.u[k] - b2.u[k]) <= 1e-12


def test_boundary_pinned_and_finite():
    s = heat(M=21, driver=ConcaveDriver(gamma=0.5), levy=LevyModel((0.3,), (1.0,)), lam=LambdaWeight.constant([0.4]),
             phi=Terminal.from_expression("sin(x)*cos(B + L)"))
    tree = build_tree(5, 1.0, s.levy)
    bundle = solve_stochastic(s, tree, SchemeParams(5))
    for k in range(6):
        assert np.all(bundle.u[k][:, [0, -1]] == 0.0) and np.all(np.isfinite(bundle.u[k]))
    for k in range(5):
        assert np.all(bundle.Z[k][:, [0, -1]] == 0.0) and np.all(bundle.r[k][..., [0, -1]] == 0.0)


def test_terminal_boundary_mismatch_rejected():
    s = heat(M=21, phi=Terminal.from_function(np.cos))
    with pytest.raises(ConfigurationError):
        solve_stochastic(s, build_tree(2, 1.0, s.levy), SchemeParams(2))


def test_A1_failure_requires_force():
    s = heat(M=21, a_diff=constant(0.01), beta=lambda t: 0.5)
    tree = build_tree(3, 1.0, s.levy)
    with pytest.raises(PreconditionError):
        solve_stochastic(s, tree, SchemeParams(3))
    assert solve_stochastic(s, tree, SchemeParams(3), force=True).verified is False
    assert solve_deterministic(s, SchemeParams(3), force=True).verified is False


def test_nonfinite_driver_raises():
    s = heat(M=21, driver=LinearDriver(c0=lambda t, x: np.where(t < 0.5, np.inf, 0.0)))
    with pytest.raises(NumericError):
        solve_deterministic(s, SchemeParams(4))


def test_tree_mismatch_rejected():
    s = heat(M=21)
    with pytest.raises(ConfigurationError):
        solve_stochastic(s, build_tree(3, 1.0, s.levy), SchemeParams(4))
    with pytest.raises(ConfigurationError):
        solve_stochastic(s, build_tree(3, 1.0, LevyModel((1.0,), (1.0,))), SchemeParams(3))


def test_thread_count_bitwise_invariant():
    s = heat(M=41, driver=ConcaveDriver(c0=constant(0.2), gamma=1.0), levy=LevyModel((0.5,), (1.0,)),
             lam=LambdaWeight.constant([0.5]), beta=lambda t: 0.3, phi=Terminal.from_expression("sin(x)*exp(-B^2 + L)"))
    tree = build_tree(8, 1.0, s.levy)
    one = solve_stochastic(s, tree, SchemeParams(8), threads=1)
    many = solve_stochastic(s, tree, SchemeParams(8), threads=4)
    for k in range(9):
        assert np.array_equal(one.u[k], many.u[k])
    for k in range(8):
        assert np.array_equal(one.Z[k], many.Z[k]) and np.array_equal(one.r[k], many.r[k])


def test_residual_zero_solution():
    s = heat(M=21, phi=Terminal.from_function(lambda x: 0 * x))
    tree = build_tree(4, 1.0, s.levy)
    b = solve_stochastic(s, tree, SchemeParams(4))
    assert residual_check(s, b, tree, hat(s.grid, PI / 2, PI / 4)) == 0.0


@pytest.mark.parametrize("theta", [1.0, 0.5])
def test_residual_heat_is_scheme_identity(theta):
    s = heat()
    tree = build_tree(10, 1.0, s.levy)
    b = solve_stochastic(s, tree, SchemeParams(10, theta=theta))
    assert residual_check(s, b, tree, hat(s.grid, PI / 2, PI / 4)) <= 1e-8


def test_residual_with_jumps_and_beta():
    s = heat(M=41, driver=ConcaveDriver(c0=constant(0.1), gamma=0.7), levy=LevyModel((0.5,), (1.0,)),
             lam=LambdaWeight.constant([0.8]), beta=lambda t: 0.3 + 0.1 * t,
             phi=Terminal.from_expression("sin(x)*(1 + 0.5*sin(B) + 0.2*L)"))
    tree = build_tree(7, 1.0, s.levy)
    b = solve_stochastic(s, tree, SchemeParams(7))
    assert np.max(np.abs(b.Z[0])) > 1e-3 and np.max(np.abs(b.r[0])) > 1e-3
    assert residual_check(s, b, tree, hat(s.grid, 1.0, 0.8)) <= 1e-10


def test_residual_detects_corruption():
    s = heat()
    tree = build_tree(10, 1.0, s.levy)
    b = solve_stochastic(s, tree, SchemeParams(10))
    psi = hat(s.grid, PI / 2, PI / 4)
    clean = residual_check(s, b, tree, psi)
    i = 50
    b.u[0][0, i] += 1e-3
    corrupt = residual_check(s, b, tree, psi)
    scale = s.grid.weights[i] * psi[i]  # pairing of a unit nodal bump with psi
    assert corrupt >= 1e-4 * scale
    # the identity is linear in u_0: the nodal pairing plus the implicit flux term
    e = np.zeros(s.grid.M)
    e[i] = 1e-3
    expected = scale * 1e-3 - tree.dt * weak_A(s.grid, s.a_diff, e, psi, 0.0)
    assert corrupt - clean == pytest.approx(expected, rel=1e-6)


def test_residual_preconditions():
    s = heat(M=21)
    tree = build_tree(2, 1.0, s.levy)
    b = solve_stochastic(s, tree, SchemeParams(2))
    with pytest.raises(PreconditionError):
        residual_check(s, b, tree, np.ones(21))
    with pytest.raises(PreconditionError):
        residual_check(s, b, build_tree(2, 1.0, s.levy), hat(s.grid, 1.0, 0.5))
