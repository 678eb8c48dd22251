"""Smooth penalisations ``f_n`` of ``(x^+)^2`` and the functionals built on them.

``f_n`` is the double primitive of the ramp ``psi_n`` (0 below 0, slope ``2n``
up to ``1/n``, then 2), so in closed form::

    f_n(x) = 0                          x <= 0
           = n x^3 / 3                  0 <= x <= 1/n
           = x^2 - x/n + 1/(3 n^2)      x > 1/n

All scalar functions accept numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Grid, l2_inner

RATIO_CONSTANT = 2.0


def _check_n(n) -> None:
    if np.any(np.asarray(n) < 1):
        raise ValueError("penalisation index n must be >= 1")


def psi_n(n, z):
    _check_n(n)
    z = np.asarray(z, dtype=float)
    out = np.where(z <= 0.0, 0.0, np.where(z <= 1.0 / n, 2.0 * n * z, 2.0))
    return out[()] if out.ndim == 0 else out


def f_n(n, x):
    _check_n(n)
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    inner = n * xp**3 / 3.0
    outer = xp**2 - xp / n + 1.0 / (3.0 * n**2)
    out = np.where(x <= 0.0, 0.0, np.where(x <= 1.0 / n, inner, outer))
    return out[()] if out.ndim == 0 else out


def f_n_prime(n, x):
    _check_n(n)
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 0.0, 0.0, np.where(x <= 1.0 / n, n * x**2, 2.0 * x - 1.0 / n))
    return out[()] if out.ndim == 0 else out


def f_n_second(n, x):
    """``f_n'' = psi_n``."""
    return psi_n(n, x)


def F_n(grid: Grid, n: int, h: np.ndarray) -> float:
    """``integral f_n(h(x)) dx`` by the trapezoidal rule."""
    return float(np.sum(f_n(n, h) * grid.weights, axis=-1))


def F_n_prime(grid: Grid, n: int, h: np.ndarray, h1: np.ndarray) -> float:
    return float(l2_inner(grid, f_n_prime(n, h), h1))


def F_n_second(grid: Grid, n: int, h: np.ndarray, h1: np.ndarray, h2: np.ndarray) -> float:
    return float(l2_inner(grid, f_n_second(n, h) * h1, h2))


@dataclass(frozen=True)
class RatioCheck:
    lhs: float
    rhs: float
    passed: bool


def ratio_bound_sides(n, x, y, C: float = RATIO_CONSTANT):
    """Vectorised sides of ``f_n'(x)^2 / f_n''(x + y) <= C (x^+)^2``.

    The left side is 0 where ``f_n'(x) = 0``; ``f_n''(x + y)`` with ``y >= 0``
    only vanishes when ``x <= 0``, where ``f_n'`` vanishes too.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0):
        raise ValueError("ratio bound requires y >= 0")
    num = f_n_prime(n, x) ** 2
    den = f_n_second(n, x + y)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = np.where(num == 0.0, 0.0, num / np.where(den == 0.0, 1.0, den))
    lhs = np.where((num != 0.0) & (den == 0.0), np.inf, lhs)
    rhs = C * np.maximum(x, 0.0) ** 2
    return lhs, rhs


def check_ratio_bound(n: int, x: float, y: float, C: float = RATIO_CONSTANT) -> RatioCheck:
    lhs, rhs = ratio_bound_sides(n, x, y, C)
    return RatioCheck(float(lhs), float(rhs), bool(lhs <= rhs + 1e-12))


@dataclass(frozen=True)
class SweepResult:
    name: str
    passed: bool
    detail: str


def property_sweep(
    impl=None,
    n_max: int = 1024,
    n_ratio: int = 100_000,
    seed: int = 0,
    tol: float = 1e-12,
) -> list[SweepResult]:
    """Executable checks of the penalisation facts.

    ``impl`` supplies ``f_n``, ``f_n_prime`` and ``f_n_second`` (defaults to
    this module), which lets a deliberately broken implementation be swept.
    """
    import sys

    from .field import make_grid

    impl = impl or sys.modules[__name__]
    results = []
    ns = np.arange(1, n_max + 1)[:, None]
    x = np.linspace(-3.0, 3.0, 6001)[None, :]
    xp = np.maximum(x, 0.0)
    f = impl.f_n(ns, x)
    steps = float(np.max(f[:-1] - f[1:]))
    above = float(np.max(f - xp**2))
    rate = float(np.max(xp**2 - f - xp / ns))
    results.append(
        SweepResult(
            "f_n increases to (x+)^2 at rate x+/n",
            steps <= tol and above <= tol and rate <= tol,
            f"max(f_n - f_n+1)={steps:.3g}, max(f_n - (x+)^2)={above:.3g}, max excess over x+/n={rate:.3g}",
        )
    )

    knots = []
    for n in (1, 2, 3, 7, 64, 1024):
        eps = 1e-14
        for k in (0.0, 1.0 / n):
            knots.append(abs(float(impl.f_n_prime(n, k - eps)) - float(impl.f_n_prime(n, k + eps))))
            knots.append(abs(float(impl.f_n_prime(n, k)) - float(impl.f_n_prime(n, k + eps))))
    results.append(
        SweepResult("f_n' continuous at 0 and 1/n", max(knots) <= tol, f"max jump {max(knots):.3g}")
    )

    xs = np.sort(np.random.Generator(np.random.Philox(seed)).uniform(-3.0, 3.0, 20_001))
    worst_drop = 0.0
    negative = 0.0
    for n in (1, 5, 50, 1024):
        d = impl.f_n_prime(n, xs)
        worst_drop = max(worst_drop, float(np.max(d[:-1] - d[1:])))
        negative = min(negative, float(np.min(impl.f_n_second(n, xs))))
    results.append(
        SweepResult(
            "f_n convex (f_n'' >= 0, f_n' nondecreasing)",
            worst_drop <= tol and negative >= 0.0,
            f"max decrease of f_n' {worst_drop:.3g}, min f_n'' {negative:.3g}",
        )
    )

    rng = np.random.Generator(np.random.Philox(seed + 1))
    n = rng.integers(1, n_max + 1, n_ratio)
    scale = np.where(rng.random(n_ratio) < 0.5, 3.0, 2.0 / n)
    xr = rng.uniform(-1.0, 1.0, n_ratio) * scale
    yr = rng.exponential(1.0, n_ratio) * np.where(rng.random(n_ratio) < 0.5, 1.0, 1.0 / n)
    yr[: n_ratio // 20] = 0.0
    num = impl.f_n_prime(n, xr) ** 2
    den = impl.f_n_second(n, xr + yr)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = np.where(num == 0.0, 0.0, num / den)
    rhs = RATIO_CONSTANT * np.maximum(xr, 0.0) ** 2
    violations = int(np.sum(~(lhs <= rhs + tol)))
    results.append(
        SweepResult(
            f"ratio bound f_n'(x)^2 / f_n''(x+y) <= {RATIO_CONSTANT:g} (x+)^2",
            violations == 0,
            f"{violations} violations in {n_ratio} triples",
        )
    )

    grid = make_grid(0.0, 1.0, 41)
    worst_rel = 0.0
    for n_fd in (1, 3, 16, 1024):
        h = np.sin(3.0 * grid.x) + 0.3 + rng.uniform(-0.2, 0.2, grid.M)
        h1 = rng.uniform(-1.0, 1.0, grid.M)
        eps = 1e-6 * max(1.0, float(np.max(np.abs(h))))
        fd = (
            np.sum(impl.f_n(n_fd, h + eps * h1) * grid.weights)
            - np.sum(impl.f_n(n_fd, h - eps * h1) * grid.weights)
        ) / (2.0 * eps)
        exact = float(np.sum(impl.f_n_prime(n_fd, h) * h1 * grid.weights))
        worst_rel = max(worst_rel, abs(fd - exact) / max(abs(exact), 1e-300))
    results.append(
        SweepResult(
            "F_n' matches finite differences of F_n",
            worst_rel <= 1e-5,
            f"max relative error {worst_rel:.3g}",
        )
    )

    # pointwise: f_n' and f_n'' are the derivatives of f_n and f_n', away from the knots
    worst = 0.0
    for n_d in (1, 4, 32, 1024):
        xd = rng.uniform(-2.0, 2.0, 2000)
        xd = xd[(np.abs(xd) > 1e-4) & (np.abs(xd - 1.0 / n_d) > 1e-4)]
        eps = 1e-7
        d1 = (impl.f_n(n_d, xd + eps) - impl.f_n(n_d, xd - eps)) / (2.0 * eps)
        d2 = (impl.f_n_prime(n_d, xd + eps) - impl.f_n_prime(n_d, xd - eps)) / (2.0 * eps)
        worst = max(
            worst,
            float(np.max(np.abs(d1 - impl.f_n_prime(n_d, xd)))),
            float(np.max(np.abs(d2 - impl.f_n_second(n_d, xd)))),
        )
    results.append(
        SweepResult(
            "f_n'' and f_n' are the derivatives of f_n' and f_n",
            worst <= 1e-5,
            f"max pointwise mismatch {worst:.3g}",
        )
    )
    return results
