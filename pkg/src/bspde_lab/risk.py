"""Space-dependent risk measure ``rho(phi)(x) = -u(0, x)`` and its axioms.

``rho`` is defined for drivers that do not depend on ``u``.  The three suites
check convexity, antitone monotonicity and translation invariance on one
shared tree, so every compared solve sees the same noise.  Translation is
tested with the Dirichlet data shifted by the same constant as the terminal
datum, since a constant shift is otherwise incompatible with fixed boundary
values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .comparison import GENERAL_TOL, run_comparison
from .errors import PreconditionError
from .problem import (
    ProblemSpec,
    Terminal,
    driver_is_affine,
    driver_is_concave,
    driver_uses_u,
)
from .solver import SchemeParams, solve_stochastic, terminal_values
from .tree import NoiseTree

EXACT_TOL = 1e-10


@dataclass
class RiskReport:
    axiom: str
    rho: np.ndarray
    passed: bool
    worst_violation: float
    tolerance: float
    rows: list[dict] = field(default_factory=list)


def _require_u_free(spec: ProblemSpec) -> None:
    if driver_uses_u(spec.driver):
        raise PreconditionError(
            "the risk measure needs a driver independent of u, b(t, x, u, grad u, Z, r) = b(t, x, grad u, Z, r)"
        )


def rho(
    spec: ProblemSpec,
    phi: Terminal,
    tree: NoiseTree,
    params: SchemeParams,
    threads: int = 1,
    boundary=None,
) -> np.ndarray:
    """``-u(0, .)`` for terminal datum ``phi`` (and optionally new boundary data)."""
    _require_u_free(spec)
    changes = {"phi": phi}
    if boundary is not None:
        changes["boundary"] = boundary
    bundle = solve_stochastic(spec.replace(**changes), tree, params, threads=threads)
    return 0.0 - bundle.root


def _scale(*fields: np.ndarray) -> float:
    return max([1.0] + [float(np.max(np.abs(f))) for f in fields])


def translation_suite(
    spec: ProblemSpec,
    phi: Terminal,
    c: float,
    tree: NoiseTree,
    params: SchemeParams,
    threads: int = 1,
) -> RiskReport:
    """``rho(phi + c) = rho(phi) - c`` with the boundary data co-shifted by ``c``."""
    _require_u_free(spec)
    g = spec.boundary
    base = rho(spec, phi, tree, params, threads)
    shifted = rho(
        spec,
        phi.shifted(c),
        tree,
        params,
        threads,
        boundary=lambda t, x: np.asarray(g(t, x)) + c,
    )
    err = float(np.max(np.abs(shifted - (base - c))))
    tol = EXACT_TOL * _scale(base, shifted)
    return RiskReport("translation", base, err <= tol, err, tol, [{"c": c, "max_error": err}])


def monotonicity_suite(
    spec: ProblemSpec,
    phi1: Terminal,
    phi2: Terminal,
    tree: NoiseTree,
    params: SchemeParams,
    threads: int = 1,
) -> RiskReport:
    """``phi1 <= phi2  =>  rho(phi1) >= rho(phi2)`` through a comparison run."""
    _require_u_free(spec)
    s1, s2 = spec.replace(phi=phi1), spec.replace(phi=phi2)
    gap = float(np.max(terminal_values(s1, tree) - terminal_values(s2, tree)))
    if gap > 0.0:
        raise PreconditionError(f"terminal data are not ordered: phi1 - phi2 reaches {gap:.6g}")
    report = run_comparison(s1, s2, params, tree=tree, threads=threads, keep_bundles=True)
    rho1, rho2 = 0.0 - report.bundle1.root, 0.0 - report.bundle2.root
    violation = max(0.0, float(np.max(rho2 - rho1)))
    passed = violation <= report.tolerance and report.verdict == "pass"
    row = {"tier": report.tier, "verdict": report.verdict, "violation": violation}
    return RiskReport("monotonicity", rho1, passed, violation, report.tolerance, [row])


def convexity_suite(
    spec: ProblemSpec,
    phi1: Terminal,
    phi2: Terminal,
    lambdas: Sequence[float],
    tree: NoiseTree,
    params: SchemeParams,
    threads: int = 1,
) -> RiskReport:
    """``rho(l phi1 + (1 - l) phi2) <= l rho(phi1) + (1 - l) rho(phi2)``.

    Affine drivers make the whole scheme affine in the terminal datum and are
    held to equality at ``1e-10``; concave drivers get the discretisation
    tolerance ``5e-3 * scale``.  The worst violation is the most negative
    slack, reported as a positive number.
    """
    _require_u_free(spec)
    if not driver_is_concave(spec.driver):
        raise PreconditionError("convexity needs a driver concave in (Z, r)")
    if any(not 0.0 <= lam <= 1.0 for lam in lambdas):
        raise PreconditionError("lambda values must lie in [0, 1]")
    rho1 = rho(spec, phi1, tree, params, threads)
    rho2 = rho(spec, phi2, tree, params, threads)
    affine = driver_is_affine(spec.driver)
    rows, worst, scale = [], 0.0, _scale(rho1, rho2)
    for lam in lambdas:
        mixed = rho(spec, phi1.blend(phi2, lam), tree, params, threads)
        slack = lam * rho1 + (1.0 - lam) * rho2 - mixed
        scale = max(scale, _scale(mixed))
        if affine:
            bad = float(np.max(np.abs(slack)))
        else:
            bad = max(0.0, -float(np.min(slack)))
        worst = max(worst, bad)
        rows.append({"lambda": lam, "min_slack": float(np.min(slack)), "violation": bad})
    tol = (EXACT_TOL if affine else GENERAL_TOL) * scale
    return RiskReport("convexity", rho1, worst <= tol, worst, tol, rows)


def affinity_defect(
    spec: ProblemSpec, phi: Terminal, alpha: float, tree: NoiseTree, params: SchemeParams
) -> float:
    """``max |rho(alpha phi) + (alpha - 1) rho(0) - alpha rho(phi)|`` (zero for affine drivers)."""
    zero = Terminal.from_field(np.zeros(spec.grid.M))
    lhs = rho(spec, phi.scaled(alpha), tree, params) + (alpha - 1.0) * rho(spec, zero, tree, params)
    return float(np.max(np.abs(lhs - alpha * rho(spec, phi, tree, params))))
