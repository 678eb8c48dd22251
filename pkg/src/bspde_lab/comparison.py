"""The comparison theorem as an experiment on a shared noise tree.

Two problems that share grid, horizon, jump model, diffusion coefficient and
``beta`` are solved on the same tree.  The theorem's hypotheses are verified
(ordered terminal data, ``b1 <= b2`` along solution 1, assumptions on the
second problem), and the conclusion ``u1 <= u2`` is measured level by level
through the worst positive part and the expected defect
``E[integral ((u1 - u2)^+)^2 dx]``.

Tolerance tiers
---------------
*monotone*: ``theta == 1``, ``beta == 0`` and the second driver's explicit
step is a monotone map of the children values (no ``grad u`` dependence and
nonnegative branch weights).  Then the scheme orders solutions exactly and
the tolerance is ``1e-10``.

*general*: everything else; the ordering holds up to discretisation error
and the tolerance is ``5e-3 * scale`` with ``scale = max(1, max |u|)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .field import gradient, positive_part_defect, sample
from .problem import (
    A1Report,
    A3Report,
    ConcaveDriver,
    LinearDriver,
    LipschitzEstimate,
    ProblemSpec,
    check_A1,
    check_A3,
    driver_values,
    estimate_lipschitz,
    space_samples,
    time_samples,
)
from .solver import SchemeParams, SolutionBundle, solve_stochastic, terminal_values
from .tree import NoiseTree, build_tree

MONOTONE_TOL = 1e-10
GENERAL_TOL = 5e-3


@dataclass
class HypothesisReport:
    terminal_ordered: bool
    terminal_gap: float
    driver_dominated: bool
    driver_gap: float
    A1: A1Report
    A2: LipschitzEstimate
    A3: A3Report

    @property
    def passed(self) -> bool:
        return (
            self.terminal_ordered
            and self.driver_dominated
            and self.A1.passed
            and self.A2.passed is True
            and self.A3.passed
        )

    def failures(self) -> list[str]:
        out = []
        if not self.terminal_ordered:
            out.append(f"terminal/boundary data not ordered (worst gap {self.terminal_gap:.6g})")
        if not self.driver_dominated:
            out.append(f"b1 > b2 along solution 1 (worst gap {self.driver_gap:.6g})")
        if not self.A1.passed:
            out.append(f"ellipticity fails for problem 2 (margin {self.A1.margin:.6g})")
        if self.A2.passed is not True:
            out.append("Lipschitz bound for problem 2 not established")
        if not self.A3.passed:
            out.append("jump monotonicity fails for problem 2")
        return out


@dataclass
class ComparisonReport:
    hypotheses: HypothesisReport
    times: np.ndarray
    worst_positive_part: np.ndarray  # per level, max over nodes and x of (u1 - u2)^+
    expected_defect: np.ndarray  # per level, E[integral ((u1 - u2)^+)^2 dx]
    tier: str
    tolerance: float
    scale: float
    verdict: str  # "pass", "fail" or "void"
    bundle1: SolutionBundle | None = None
    bundle2: SolutionBundle | None = None

    @property
    def max_positive_part(self) -> float:
        return float(np.max(self.worst_positive_part))


def _check_shared(spec1: ProblemSpec, spec2: ProblemSpec, tree: NoiseTree) -> None:
    if spec1.grid != spec2.grid:
        raise ConfigurationError("problems must share one grid")
    if spec1.T != spec2.T:
        raise ConfigurationError("problems must share the horizon T")
    if spec1.levy != spec2.levy or tree.levy != spec1.levy:
        raise ConfigurationError("problems and tree must share one jump model")
    x = space_samples(spec1)
    for t in tree.times():
        if not np.array_equal(sample(spec1.a_diff, t, x), sample(spec2.a_diff, t, x)):
            raise ConfigurationError("problems must share the diffusion coefficient")
        if float(spec1.beta(t)) != float(spec2.beta(t)):
            raise ConfigurationError("problems must share beta")


def verify_hypotheses(
    spec1: ProblemSpec,
    spec2: ProblemSpec,
    bundle1: SolutionBundle,
    n_samples: int = 1000,
    seed: int = 0,
) -> HypothesisReport:
    """Check the theorem's hypotheses; driver dominance is checked along solution 1.

    The drivers are compared at the arguments the scheme actually feeds them:
    the predictor ``ubar``, its gradient, ``Z`` and ``r`` of solution 1, at
    every interior grid point of every non-terminal node.
    """
    tree = bundle1.tree
    _check_shared(spec1, spec2, tree)
    grid = spec1.grid

    phi1 = terminal_values(spec1, tree)
    phi2 = terminal_values(spec2, tree)
    gap = float(np.max(phi1 - phi2))
    ends = np.array([grid.x_left, grid.x_right])
    for t in tree.times():
        gap = max(gap, float(np.max(sample(spec1.boundary, t, ends) - sample(spec2.boundary, t, ends))))

    dgap = -np.inf
    for k, t in enumerate(tree.times()[:-1]):
        ub, zk, rk = bundle1.ubar[k], bundle1.Z[k], bundle1.r[k]
        v = gradient(grid, ub)
        b1 = driver_values(spec1, float(t), grid.x, ub, v, zk, rk)
        b2 = driver_values(spec2, float(t), grid.x, ub, v, zk, rk)
        dgap = max(dgap, float(np.max((b1 - b2)[:, 1:-1])))

    ts = tree.times()
    return HypothesisReport(
        terminal_ordered=gap <= 0.0,
        terminal_gap=gap,
        driver_dominated=dgap <= 0.0,
        driver_gap=dgap,
        A1=check_A1(spec2, ts, space_samples(spec2)),
        A2=estimate_lipschitz(spec2, n_samples=n_samples, seed=seed),
        A3=check_A3(spec2, ts, seed=seed),
    )


def explicit_step_monotone(spec: ProblemSpec, tree: NoiseTree) -> bool:
    """Whether the explicit part of one step is nondecreasing in every child value.

    For ``b = c0 + c_u u + c_Z Z + int r lambda dnu`` the weight of a child is
    its probability times ``1 + dt c_u + c_Z dB`` plus the jump terms; all are
    nonnegative iff ``1 + dt c_u - |c_Z| sqrt(dt) - sum_j lambda_j p_j / (1 - P) >= 0``.
    ``-gamma |Z|`` is the minimum of two such maps with ``c_Z = +-gamma``.
    """
    d = spec.driver
    if isinstance(d, LinearDriver):
        if d.c_v != 0.0:
            return False
        c_u, c_z = d.c_u, abs(d.c_Z)
    elif isinstance(d, ConcaveDriver):
        c_u, c_z = 0.0, d.gamma
    else:
        return False
    dt = tree.dt
    if dt * max(c_u, 0.0) >= 1.0:
        return False
    p = tree.jump_probs
    no_jump = 1.0 - p.sum()
    for t in tree.times()[:-1]:
        lam = spec.lam(float(t))
        if np.any(lam < 0.0):
            return False
        jump_drag = float(np.sum(lam * p)) / no_jump if p.size else 0.0
        if 1.0 + dt * c_u - c_z * np.sqrt(dt) - jump_drag < 0.0:
            return False
    return True


def comparison_tier(spec1: ProblemSpec, spec2: ProblemSpec, tree: NoiseTree, params: SchemeParams) -> str:
    beta_zero = all(float(spec2.beta(float(t))) == 0.0 for t in tree.times())
    if params.theta == 1.0 and beta_zero and explicit_step_monotone(spec2, tree):
        return "monotone"
    return "general"


def run_comparison(
    spec1: ProblemSpec,
    spec2: ProblemSpec,
    params: SchemeParams,
    tree: NoiseTree | None = None,
    threads: int = 1,
    seed: int = 0,
    n_samples: int = 1000,
    force: bool = False,
    keep_bundles: bool = False,
) -> ComparisonReport:
    if tree is None:
        tree = build_tree(params.N, spec1.T, spec1.levy)
    _check_shared(spec1, spec2, tree)
    bundle1 = solve_stochastic(spec1, tree, params, threads=threads, force=force)
    bundle2 = solve_stochastic(spec2, tree, params, threads=threads, force=force)
    hyp = verify_hypotheses(spec1, spec2, bundle1, n_samples=n_samples, seed=seed)

    grid = spec1.grid
    worst = np.empty(tree.N + 1)
    defect = np.empty(tree.N + 1)
    scale = 1.0
    for k in range(tree.N + 1):
        diff = bundle1.u[k] - bundle2.u[k]
        worst[k] = max(0.0, float(np.max(diff)))
        defect[k] = float(np.dot(tree.path_prob[k], positive_part_defect(grid, diff)))
        scale = max(scale, float(np.max(np.abs(bundle1.u[k]))), float(np.max(np.abs(bundle2.u[k]))))

    tier = comparison_tier(spec1, spec2, tree, params)
    tol = MONOTONE_TOL if tier == "monotone" else GENERAL_TOL * scale
    if not hyp.passed:
        verdict = "void"
    elif float(np.max(worst)) <= tol:
        verdict = "pass"
    else:
        verdict = "fail"
    return ComparisonReport(
        hyp,
        tree.times(),
        worst,
        defect,
        tier,
        tol,
        scale,
        verdict,
        bundle1 if keep_bundles else None,
        bundle2 if keep_bundles else None,
    )
