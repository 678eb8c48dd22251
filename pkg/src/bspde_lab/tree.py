"""Exhaustive scenario tree for the Brownian increment and the jump marks.

Each step draws a two-point Brownian increment ``+-sqrt(dt)`` and, independently,
at most one jump: mark ``j`` with probability ``p_j = nu_j dt`` or no jump.
The branching factor is therefore ``2 (J + 1)``.  Branches are ordered

    (no jump, +), (no jump, -), (mark 1, +), (mark 1, -), ...

and node ``i`` of level ``k`` owns children ``b*i ... b*i + b - 1`` of level
``k + 1``.  Levels are stored level-major, children contiguous.

All reductions over children run in this fixed branch order, so results do
not depend on how a level is split between workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .levy import LevyModel

MAX_NODES = 5_000_000
MAX_JUMP_PROBABILITY = 0.5

NodeId = tuple[int, int]


@dataclass(frozen=True)
class Branch:
    db: float
    mark: int | None  # None = no jump, otherwise a 0-based mark index
    prob: float


def node_count(N: int, J: int) -> int:
    b = 2 * (J + 1)
    return sum(b**k for k in range(N + 1))


class NoiseTree:
    """Full non-recombining tree of depth ``N`` on ``[0, T]``.

    Per level it stores path probabilities and the driving-noise state at the
    node: the Brownian value ``B`` and the compound-Poisson value ``L`` (sum of
    marks jumped so far).
    """

    def __init__(self, N: int, T: float, levy: LevyModel):
        if int(N) != N or N < 1:
            raise ConfigurationError(f"tree needs N >= 1 steps, got {N}")
        if not T > 0:
            raise ConfigurationError(f"horizon T must be positive, got {T}")
        self.N = int(N)
        self.T = float(T)
        self.dt = self.T / self.N
        self.levy = levy
        J = levy.J
        p = np.asarray(levy.intensities, dtype=float) * self.dt
        if p.sum() > MAX_JUMP_PROBABILITY:
            raise ConfigurationError(
                f"jump probability per step {p.sum():.4g} exceeds {MAX_JUMP_PROBABILITY}; "
                f"increase N to at least {int(np.ceil(levy.total_intensity * self.T / MAX_JUMP_PROBABILITY))}"
            )
        total = node_count(self.N, J)
        if total > MAX_NODES:
            raise ConfigurationError(
                f"tree with N={self.N}, J={J} has {total} nodes, above the budget of {MAX_NODES}"
            )
        self.jump_probs = p
        sq = np.sqrt(self.dt)
        db, marks, probs = [], [], []
        for j in range(-1, J):
            pj = 0.5 * (1.0 - p.sum()) if j < 0 else 0.5 * p[j]
            for sign in (1.0, -1.0):
                db.append(sign * sq)
                marks.append(j)
                probs.append(pj)
        self.branch_db = np.array(db)
        self.branch_mark = np.array(marks, dtype=int)
        self.branch_prob = np.array(probs)
        self.branch_jump = np.array([0.0 if j < 0 else levy.marks[j] for j in marks])
        for arr in (self.branch_db, self.branch_mark, self.branch_prob, self.branch_jump):
            arr.setflags(write=False)

        self.path_prob = [np.ones(1)]
        self.B = [np.zeros(1)]
        self.L = [np.zeros(1)]
        for k in range(self.N):
            n = self.path_prob[k].size
            self.path_prob.append((self.path_prob[k][:, None] * self.branch_prob[None, :]).ravel())
            self.B.append((self.B[k][:, None] + self.branch_db[None, :]).ravel())
            self.L.append((self.L[k][:, None] + self.branch_jump[None, :]).ravel())
            assert self.path_prob[-1].size == n * self.b
        for levels in (self.path_prob, self.B, self.L):
            for arr in levels:
                arr.setflags(write=False)

    @property
    def J(self) -> int:
        return self.levy.J

    @property
    def b(self) -> int:
        return 2 * (self.J + 1)

    @property
    def total_nodes(self) -> int:
        return node_count(self.N, self.J)

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.N + 1)

    def n_nodes(self, k: int) -> int:
        return self.b**k

    def parent(self, k: int) -> np.ndarray:
        if k == 0:
            return np.array([-1])
        return np.arange(self.n_nodes(k)) // self.b

    def branch_label(self, k: int) -> np.ndarray:
        if k == 0:
            return np.array([-1])
        return np.arange(self.n_nodes(k)) % self.b

    def branches(self) -> list[Branch]:
        return [
            Branch(float(d), None if m < 0 else int(m), float(p))
            for d, m, p in zip(self.branch_db, self.branch_mark, self.branch_prob)
        ]

    def children(self, node: NodeId) -> range:
        k, i = node
        if not 0 <= k < self.N:
            raise PreconditionError(f"node at level {k} has no children (N={self.N})")
        return range(self.b * i, self.b * (i + 1))

    def path(self, leaf: int) -> list[int]:
        """Node indices at levels 0..N along the path to ``leaf``."""
        out = [leaf]
        for _ in range(self.N):
            out.append(out[-1] // self.b)
        return out[::-1]

    # Level-wide primitives.  ``children`` has shape (n, b, ...) with the
    # branch axis second; every reduction walks branches in fixed order.

    def expect_children(self, children: np.ndarray) -> np.ndarray:
        acc = self.branch_prob[0] * children[:, 0]
        for c in range(1, self.b):
            acc = acc + self.branch_prob[c] * children[:, c]
        return acc

    def z_children(self, children: np.ndarray) -> np.ndarray:
        w = self.branch_prob * self.branch_db
        acc = w[0] * children[:, 0]
        for c in range(1, self.b):
            acc = acc + w[c] * children[:, c]
        return acc / self.dt

    def r_children(self, children: np.ndarray) -> np.ndarray:
        no_jump = 0.5 * (children[:, 0] + children[:, 1])
        out = np.empty((self.J,) + no_jump.shape)
        for j in range(self.J):
            out[j] = 0.5 * (children[:, 2 * j + 2] + children[:, 2 * j + 3]) - no_jump
        return out


def build_tree(N: int, T: float, levy: LevyModel) -> NoiseTree:
    return NoiseTree(N, T, levy)


def _stack_children(tree: NoiseTree, child_values) -> np.ndarray:
    values = [np.asarray(v, dtype=float) for v in child_values]
    if len(values) != tree.b:
        raise PreconditionError(f"expected {tree.b} child values, got {len(values)}")
    return np.stack(values)[None]


def _check_node(tree: NoiseTree, node: NodeId) -> None:
    k, i = node
    if not (0 <= k < tree.N and 0 <= i < tree.n_nodes(k)):
        raise PreconditionError(f"node {node} is not an interior node of the tree")


def cond_expect(tree: NoiseTree, node: NodeId, child_values: Sequence[np.ndarray]) -> np.ndarray:
    """Probability-weighted average of the children of ``node``."""
    _check_node(tree, node)
    return tree.expect_children(_stack_children(tree, child_values))[0]


def extract_Z(tree: NoiseTree, node: NodeId, child_values: Sequence[np.ndarray]) -> np.ndarray:
    """``E[u_{k+1} dB | node] / dt``."""
    _check_node(tree, node)
    return tree.z_children(_stack_children(tree, child_values))[0]


def extract_r(tree: NoiseTree, node: NodeId, child_values: Sequence[np.ndarray]) -> np.ndarray:
    """Jump amplitude per mark: mean of mark-j children minus mean of no-jump children."""
    _check_node(tree, node)
    return tree.r_children(_stack_children(tree, child_values))[:, 0]
