"""Backward Euler recursion for the jump BSPDE on the noise tree.

At a node of level ``k`` with children values ``u_{k+1}``::

    ubar = E[u_{k+1} | node]
    Z    = E[u_{k+1} dB | node] / dt
    r_j  = mean(mark-j children) - mean(no-jump children)
    rhs  = ubar + dt * (b(t_k, x, ubar, grad ubar, Z, r) + beta(t_k) grad Z)
    (I - theta dt A(t_k)) u_k = rhs + (1 - theta) dt A(t_k) ubar

with Dirichlet rows pinned to ``g(t_k)`` and ``Z = r = 0`` on the boundary
nodes.  The tridiagonal system is the same for every node of a level, so it is
factored once and applied column-wise; every operation on the node axis is
elementwise and the output is bitwise independent of how a level is chunked
across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError, PreconditionError
from .field import (
    apply_A,
    gradient,
    gradient_interior,
    gradient_interior_adjoint,
    l2_inner,
    sample,
    weak_A,
)
from .problem import ProblemSpec, check_A1, driver_values, space_samples, time_samples
from .tree import NoiseTree

CHUNK_NODES = 2048


@dataclass(frozen=True)
class SchemeParams:
    N: int
    theta: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError(f"theta must lie in [0, 1], got {self.theta}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"N must be a positive integer, got {self.N}")


@dataclass
class SolutionBundle:
    """``u`` for levels 0..N and ``ubar, Z, r`` for levels 0..N-1.

    ``u[k]`` and ``Z[k]`` have shape ``(n_k, M)``; ``r[k]`` has shape
    ``(J, n_k, M)``; ``ubar[k]`` is the conditional mean the driver was
    evaluated at.  ``verified`` is False when the solve was forced past a
    failed ellipticity check.
    """

    tree: NoiseTree
    theta: float
    u: list[np.ndarray]
    Z: list[np.ndarray]
    r: list[np.ndarray]
    ubar: list[np.ndarray]
    verified: bool = True

    @property
    def root(self) -> np.ndarray:
        return self.u[0][0]

    @property
    def times(self) -> np.ndarray:
        return self.tree.times()


@dataclass
class DeterministicSolution:
    times: np.ndarray
    u: np.ndarray  # (N + 1, M)
    verified: bool = True


class TridiagonalFactor:
    """Thomas factorisation of ``I - theta dt A_h(t)`` with identity boundary rows."""

    def __init__(self, spec: ProblemSpec, t: float, dt: float, theta: float):
        g = spec.grid
        M = g.M
        a_half = sample(spec.a_diff, t, g.midpoints)
        s = theta * dt / g.h**2
        lower = np.zeros(M)
        diag = np.ones(M)
        upper = np.zeros(M)
        lower[1:-1] = -s * a_half[:-1]
        upper[1:-1] = -s * a_half[1:]
        diag[1:-1] = 1.0 + s * (a_half[:-1] + a_half[1:])
        cp = np.zeros(M)
        denom = np.zeros(M)
        denom[0] = diag[0]
        cp[0] = upper[0] / denom[0]
        for i in range(1, M):
            denom[i] = diag[i] - lower[i] * cp[i - 1]
            if denom[i] == 0.0 or not np.isfinite(denom[i]):
                raise NumericError(f"tridiagonal solve failed: zero pivot at row {i}, t={t}")
            cp[i] = upper[i] / denom[i]
        self.lower, self.cp, self.denom = lower, cp, denom

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        d = np.array(rhs.T, dtype=float)  # (M, n) so each row is contiguous
        lower, cp, denom = self.lower, self.cp, self.denom
        M = d.shape[0]
        # non-finite input propagates quietly; callers check the result
        with np.errstate(invalid="ignore", over="ignore"):
            d[0] = d[0] / denom[0]
            for i in range(1, M):
                d[i] = (d[i] - lower[i] * d[i - 1]) / denom[i]
            for i in range(M - 2, -1, -1):
                d[i] = d[i] - cp[i] * d[i + 1]
        return d.T.copy()


def _step(spec, t, dt, theta, factor, g_left, g_right, ubar, Z, r):
    """One backward step for a batch of nodes; returns ``u_k``."""
    grid = spec.grid
    v = gradient(grid, ubar)
    bval = driver_values(spec, t, grid.x, ubar, v, Z, r)
    rhs = ubar + dt * (bval + float(spec.beta(t)) * gradient_interior(grid, Z))
    if theta < 1.0:
        rhs = rhs + (1.0 - theta) * dt * apply_A(grid, spec.a_diff, ubar, t)
    rhs[..., 0] = g_left
    rhs[..., -1] = g_right
    return factor.solve(rhs)


def _boundary_values(spec: ProblemSpec, t: float) -> tuple[float, float]:
    g = sample(spec.boundary, t, np.array([spec.grid.x_left, spec.grid.x_right]))
    return float(g[0]), float(g[1])


def _require_A1(spec: ProblemSpec, N: int, force: bool) -> bool:
    report = check_A1(spec, time_samples(spec, N), space_samples(spec))
    if not report.passed and not force:
        raise PreconditionError(
            f"ellipticity check failed (margin {report.margin:.6g} at t={report.worst_t}, "
            f"x={report.worst_x}); rerun with force to solve anyway"
        )
    return report.passed


def terminal_values(spec: ProblemSpec, tree: NoiseTree) -> np.ndarray:
    """Leaf values of the terminal datum, checked against the boundary data at T."""
    phi = spec.phi.evaluate(spec.grid.x, tree.B[tree.N], tree.L[tree.N])
    gl, gr = _boundary_values(spec, spec.T)
    scale = max(1.0, float(np.max(np.abs(phi))))
    gap = max(np.max(np.abs(phi[:, 0] - gl)), np.max(np.abs(phi[:, -1] - gr)))
    if gap > 1e-12 * scale:
        raise ConfigurationError(
            f"terminal datum disagrees with boundary data at t=T by {gap:.3g}"
        )
    phi[:, 0] = gl
    phi[:, -1] = gr
    return phi


def _resolve_threads(threads: int) -> int:
    if threads == 0:
        return os.cpu_count() or 1
    return max(1, int(threads))


def solve_stochastic(
    spec: ProblemSpec,
    tree: NoiseTree,
    params: SchemeParams,
    threads: int = 1,
    force: bool = False,
) -> SolutionBundle:
    if tree.N != params.N or abs(tree.T - spec.T) > 1e-14 * spec.T:
        raise ConfigurationError("tree does not match the scheme's N or the problem's horizon")
    if tree.levy != spec.levy:
        raise ConfigurationError("tree was built from a different jump model")
    verified = _require_A1(spec, params.N, force)
    N, dt, theta, M, J, b = tree.N, tree.dt, params.theta, spec.grid.M, tree.J, tree.b
    times = tree.times()
    u: list = [None] * (N + 1)
    Z: list = [None] * N
    r: list = [None] * N
    ubar: list = [None] * N
    u[N] = terminal_values(spec, tree)
    workers = _resolve_threads(threads)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for k in range(N - 1, -1, -1):
            t = float(times[k])
            factor = TridiagonalFactor(spec, t, dt, theta)
            gl, gr = _boundary_values(spec, t)
            n = tree.n_nodes(k)
            u[k] = np.empty((n, M))
            Z[k] = np.empty((n, M))
            r[k] = np.empty((J, n, M))
            ubar[k] = np.empty((n, M))
            nxt = u[k + 1]

            def work(lo: int, hi: int, k=k, t=t, factor=factor, gl=gl, gr=gr, nxt=nxt) -> None:
                children = nxt[lo * b : hi * b].reshape(hi - lo, b, M)
                ub = tree.expect_children(children)
                zk = tree.z_children(children)
                rk = tree.r_children(children)
                zk[:, 0] = zk[:, -1] = 0.0
                rk[..., 0] = rk[..., -1] = 0.0
                uk = _step(spec, t, dt, theta, factor, gl, gr, ub, zk, rk)
                if not np.all(np.isfinite(uk)):
                    bad = lo + int(np.argmax(~np.all(np.isfinite(uk), axis=1)))
                    raise NumericError(f"non-finite solution at level {k}, node {bad}")
                u[k][lo:hi], Z[k][lo:hi], r[k][:, lo:hi], ubar[k][lo:hi] = uk, zk, rk, ub

            chunks = [(lo, min(n, lo + CHUNK_NODES)) for lo in range(0, n, CHUNK_NODES)]
            if pool is None or len(chunks) == 1:
                for lo, hi in chunks:
                    work(lo, hi)
            else:
                for fut in [pool.submit(work, lo, hi) for lo, hi in chunks]:
                    fut.result()
    finally:
        if pool is not None:
            pool.shutdown()
    return SolutionBundle(tree, theta, u, Z, r, ubar, verified)


def solve_deterministic(
    spec: ProblemSpec, params: SchemeParams, force: bool = False
) -> DeterministicSolution:
    """The same stepping along a single branch with ``Z = 0``, ``r = 0``.

    A path-dependent terminal datum is evaluated at ``B = L = 0``.
    """
    verified = _require_A1(spec, params.N, force)
    N, theta, M, J = params.N, params.theta, spec.grid.M, spec.levy.J
    dt = spec.T / N
    times = dt * np.arange(N + 1)
    out = np.empty((N + 1, M))
    phi = spec.phi.evaluate(spec.grid.x, 0.0, 0.0)
    gl, gr = _boundary_values(spec, spec.T)
    phi[:, 0], phi[:, -1] = gl, gr
    out[N] = phi[0]
    zero = np.zeros((1, M))
    zero_r = np.zeros((J, 1, M))
    for k in range(N - 1, -1, -1):
        t = float(times[k])
        factor = TridiagonalFactor(spec, t, dt, theta)
        gl, gr = _boundary_values(spec, t)
        uk = _step(spec, t, dt, theta, factor, gl, gr, out[k + 1][None, :], zero, zero_r)
        if not np.all(np.isfinite(uk)):
            raise NumericError(f"non-finite solution at level {k}")
        out[k] = uk[0]
    return DeterministicSolution(times, out, verified)


def residual_check(
    spec: ProblemSpec, bundle: SolutionBundle, tree: NoiseTree, psi: np.ndarray
) -> float:
    """Largest violation of the weak form along any path and from any time level.

    For each path and each ``t_k`` this evaluates::

        <u_k, psi> - <u_N, psi>
          - sum_{j>=k} dt * (<A u, psi> + <b, psi> - beta <Z, d psi>)
          + sum_{j>=k} <u_{j+1} - E[u_{j+1} | F_j], psi>

    with ``<A u, psi>`` in flux form and the ``beta`` term integrated by parts
    against the discrete gradient of ``psi``.  ``ubar`` is recomputed from the
    children while ``Z`` and ``r`` are taken from the bundle.
    """
    grid = spec.grid
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (grid.M,):
        raise PreconditionError("psi must be a field on the grid")
    if psi[0] != 0.0 or psi[-1] != 0.0:
        raise PreconditionError("psi must vanish on the boundary nodes")
    if bundle.tree is not tree:
        raise PreconditionError("bundle was solved on a different tree")
    N, dt, b, theta = tree.N, tree.dt, tree.b, bundle.theta
    times = tree.times()
    dpsi = -gradient_interior_adjoint(grid, psi)
    n_leaves = tree.n_nodes(N)
    leaves = np.arange(n_leaves)
    increment = np.zeros(n_leaves)
    martingale = np.zeros(n_leaves)
    drift = np.zeros(n_leaves)
    worst = 0.0
    for k in range(N - 1, -1, -1):
        t = float(times[k])
        children = bundle.u[k + 1].reshape(tree.n_nodes(k), b, grid.M)
        ub = tree.expect_children(children)
        uk = bundle.u[k]
        zk, rk = bundle.Z[k], bundle.r[k]
        bval = driver_values(spec, t, grid.x, ub, gradient(grid, ub), zk, rk)
        a_term = theta * weak_A(grid, spec.a_diff, uk, psi, t)
        if theta < 1.0:
            a_term = a_term + (1.0 - theta) * weak_A(grid, spec.a_diff, ub, psi, t)
        d_k = a_term + l2_inner(grid, bval, psi) - float(spec.beta(t)) * l2_inner(grid, zk, dpsi)
        node = leaves // b ** (N - k)
        child = leaves // b ** (N - k - 1)
        u_child = l2_inner(grid, bundle.u[k + 1], psi)[child]
        increment += l2_inner(grid, uk, psi)[node] - u_child
        martingale += u_child - l2_inner(grid, ub, psi)[node]
        drift += dt * d_k[node]
        worst = max(worst, float(np.max(np.abs(increment - drift + martingale))))
    return worst
