"""Problem data of the backward equation and checks of its standing assumptions.

A :class:`ProblemSpec` bundles the diffusion coefficient, the drift weight
``beta``, the driver ``b``, the jump model with its weight ``lambda``, the
terminal datum and the Dirichlet data.  The validators

* :func:`check_A1`  -- ellipticity with slack, ``a >= beta^2 / (2 kappa) + delta1``
* :func:`estimate_lipschitz` -- sampled Lipschitz constants in ``u, grad u, Z``
* :func:`check_A3`  -- jump monotonicity against ``int (r1 - r2) lambda dnu``

report rather than raise; a failed check is report content.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigurationError
from .exprlang import BinOp, Expression, Neg, Var, free_identifiers
from .field import Coefficient, Grid, constant, sample
from .levy import LambdaBoundReport, LambdaWeight, LevyModel, check_lambda_bound, jump_integral

DRIVER_IDENTIFIERS = ("t", "x", "u", "ux", "Z", "rint")
TERMINAL_IDENTIFIERS = ("x", "B", "L")


@dataclass(frozen=True)
class LinearDriver:
    """``b = c0(t, x) + c_u u + c_v grad u + c_Z Z + int r lambda dnu``."""

    c0: Coefficient = field(default_factory=lambda: constant(0.0))
    c_u: float = 0.0
    c_v: float = 0.0
    c_Z: float = 0.0


@dataclass(frozen=True)
class ConcaveDriver:
    """``b = c0(t, x) - gamma |Z| + int r lambda dnu``."""

    c0: Coefficient = field(default_factory=lambda: constant(0.0))
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class ExpressionDriver:
    """Driver given as source text in ``t, x, u, ux, Z, rint``.

    ``rint`` is bound to the jump aggregate ``int r lambda dnu``.  No structural
    guarantee is attached; ``lipschitz`` optionally declares the constant that
    :func:`estimate_lipschitz` tests against.
    """

    source: str
    lipschitz: float | None = None
    expression: Expression = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "expression", Expression(self.source, DRIVER_IDENTIFIERS))
        if "rint" in self.expression.identifiers and not _rint_is_additive(self.expression.ast):
            warnings.warn(
                f"driver {self.source!r} uses rint other than as a '+ rint' term; "
                "jump monotonicity is then not guaranteed (run check_A3)",
                UserWarning,
                stacklevel=3,
            )


def _rint_is_additive(e) -> bool:
    """True when ``e`` is a sum ``... + rint + ...`` with rint absent elsewhere."""
    terms, stack = [], [(e, 1)]
    while stack:
        node, sign = stack.pop()
        if isinstance(node, BinOp) and node.op in "+-":
            stack.append((node.left, sign))
            stack.append((node.right, sign if node.op == "+" else -sign))
        elif isinstance(node, Neg):
            stack.append((node.operand, -sign))
        else:
            terms.append((node, sign))
    direct = [sign for node, sign in terms if node == Var("rint")]
    nested = [node for node, _ in terms if node != Var("rint") and "rint" in free_identifiers(node)]
    return direct == [1] and not nested


Driver = Union[LinearDriver, ConcaveDriver, ExpressionDriver]

TerminalFunction = Callable[[np.ndarray, np.ndarray, np.ndarray], "np.ndarray | float"]


@dataclass(frozen=True)
class Terminal:
    """Terminal datum ``phi(x, B_T, L_T)``.

    ``B_T`` is the terminal Brownian value and ``L_T`` the terminal
    compound-Poisson value (sum of jumped marks) of a tree path, so random
    terminal data are measurable with respect to the tree's filtration.
    """

    func: TerminalFunction
    description: str = "<function>"
    path_dependent: bool = True

    @classmethod
    def from_field(cls, values) -> "Terminal":
        arr = np.array(values, dtype=float)
        arr.setflags(write=False)
        return cls(lambda x, B, L: arr, "<field>", False)

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], description: str = "<function>") -> "Terminal":
        """Deterministic datum ``phi(x)``."""
        return cls(lambda x, B, L: f(x), description, False)

    @classmethod
    def from_expression(cls, source: str) -> "Terminal":
        expr = Expression(source, TERMINAL_IDENTIFIERS)
        random = bool(expr.identifiers & {"B", "L"})
        return cls(lambda x, B, L: expr(x=x, B=B, L=L), source, random)

    def evaluate(self, x: np.ndarray, B, L) -> np.ndarray:
        """Values on the grid for each path state; shape ``(len(B), M)``."""
        B = np.atleast_1d(np.asarray(B, dtype=float))
        L = np.atleast_1d(np.asarray(L, dtype=float))
        out = np.asarray(self.func(x[None, :], B[:, None], L[:, None]), dtype=float)
        return np.array(np.broadcast_to(out, (B.size, x.size)))

    def shifted(self, c: float) -> "Terminal":
        f = self.func
        return Terminal(
            lambda x, B, L: np.asarray(f(x, B, L)) + c,
            f"({self.description}) + {c!r}",
            self.path_dependent,
        )

    def scaled(self, a: float) -> "Terminal":
        f = self.func
        return Terminal(
            lambda x, B, L: a * np.asarray(f(x, B, L)),
            f"{a!r} * ({self.description})",
            self.path_dependent,
        )

    def blend(self, other: "Terminal", lam: float) -> "Terminal":
        """``lam * self + (1 - lam) * other``."""
        f, g = self.func, other.func
        return Terminal(
            lambda x, B, L: lam * np.asarray(f(x, B, L)) + (1.0 - lam) * np.asarray(g(x, B, L)),
            f"blend({lam!r})",
            self.path_dependent or other.path_dependent,
        )


def _zero_beta(t: float) -> float:
    return 0.0


@dataclass(frozen=True)
class ProblemSpec:
    grid: Grid
    T: float
    a_diff: Coefficient
    phi: Terminal
    driver: Driver = field(default_factory=LinearDriver)
    beta: Callable[[float], float] = _zero_beta
    levy: LevyModel = field(default_factory=LevyModel)
    lam: LambdaWeight | None = None
    boundary: Coefficient = field(default_factory=lambda: constant(0.0))
    kappa: float = 0.5
    delta1: float = 1e-3

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ConfigurationError(f"horizon T must be positive, got {self.T}")
        if not 0.0 < self.kappa < 1.0:
            raise ConfigurationError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not self.delta1 > 0.0:
            raise ConfigurationError(f"delta1 must be positive, got {self.delta1}")
        if self.lam is None:
            object.__setattr__(self, "lam", LambdaWeight.zero(self.levy.J))
        if not isinstance(self.phi, Terminal):
            object.__setattr__(self, "phi", Terminal.from_field(self.phi))

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DriverInput:
    t: float
    x: float
    u: float
    v: float
    Z: float
    r: tuple[float, ...] = ()


def driver_values(spec: ProblemSpec, t: float, x, u, v, Z, r) -> np.ndarray:
    """Vectorised driver; ``r`` carries the mark axis first, shape (J, *u.shape)."""
    d = spec.driver
    u = np.asarray(u, dtype=float)
    rint = jump_integral(spec.levy, spec.lam, np.asarray(r, dtype=float).reshape((spec.levy.J,) + u.shape), t)
    if isinstance(d, LinearDriver):
        return sample(d.c0, t, x) + d.c_u * u + d.c_v * v + d.c_Z * Z + rint
    if isinstance(d, ConcaveDriver):
        return sample(d.c0, t, x) - d.gamma * np.abs(Z) + rint
    if isinstance(d, ExpressionDriver):
        value = d.expression(t=t, x=x, u=u, ux=v, Z=Z, rint=rint)
        return np.broadcast_to(np.asarray(value, dtype=float), u.shape)
    raise TypeError(f"unknown driver type {type(d).__name__}")


def eval_driver(spec: ProblemSpec, inp: DriverInput) -> float:
    if len(inp.r) != spec.levy.J:
        raise ConfigurationError(f"driver input has {len(inp.r)} marks, model has J={spec.levy.J}")
    value = driver_values(
        spec, inp.t, np.float64(inp.x), inp.u, inp.v, inp.Z, np.asarray(inp.r, dtype=float)
    )
    return float(value)


# structural properties used by the solver, the comparison harness and the risk suites

def driver_uses_u(driver: Driver) -> bool:
    if isinstance(driver, LinearDriver):
        return driver.c_u != 0.0
    if isinstance(driver, ConcaveDriver):
        return False
    return "u" in driver.expression.identifiers


def driver_is_affine(driver: Driver) -> bool:
    return isinstance(driver, LinearDriver) or (
        isinstance(driver, ConcaveDriver) and driver.gamma == 0.0
    )


def driver_is_concave(driver: Driver) -> bool:
    return isinstance(driver, (LinearDriver, ConcaveDriver))


def structural_lipschitz(driver: Driver) -> tuple[float, float, float] | None:
    """Exact per-argument constants (u, grad u, Z) for the built-in families."""
    if isinstance(driver, LinearDriver):
        return (abs(driver.c_u), abs(driver.c_v), abs(driver.c_Z))
    if isinstance(driver, ConcaveDriver):
        return (0.0, 0.0, driver.gamma)
    return None


def time_samples(spec: ProblemSpec, N: int) -> np.ndarray:
    return spec.T * np.arange(N + 1) / N


def space_samples(spec: ProblemSpec) -> np.ndarray:
    return np.sort(np.concatenate([spec.grid.x, spec.grid.midpoints]))


@dataclass(frozen=True)
class A1Report:
    passed: bool
    margin: float
    worst_t: float
    worst_x: float


def check_A1(spec: ProblemSpec, t_samples: Sequence[float], x_samples: Sequence[float]) -> A1Report:
    """Ellipticity with slack: ``a_diff(t, x) >= beta(t)^2 / (2 kappa) + delta1``.

    The inequality is non-strict; ``margin`` is the smallest observed
    ``a_diff - threshold``.
    """
    if len(t_samples) == 0 or len(x_samples) == 0:
        raise ConfigurationError("sample sets must be nonempty")
    xs = np.asarray(x_samples, dtype=float)
    worst = (np.inf, float("nan"), float("nan"))
    for t in t_samples:
        threshold = float(spec.beta(t)) ** 2 / (2.0 * spec.kappa) + spec.delta1
        margins = sample(spec.a_diff, t, xs) - threshold
        i = int(np.argmin(margins))
        if margins[i] < worst[0]:
            worst = (float(margins[i]), float(t), float(xs[i]))
    return A1Report(worst[0] >= 0.0, *worst)


@dataclass(frozen=True)
class LipschitzEstimate:
    """Largest observed difference quotients of ``b`` in ``u``, ``grad u``, ``Z``.

    This is a falsifier: a pass only means no sample exceeded ``C``.
    ``passed`` is ``None`` when no constant was available to test against.
    """

    u: float
    v: float
    Z: float
    exact: tuple[float, float, float] | None
    C: float | None
    passed: bool | None
    n_samples: int

    @property
    def constants(self) -> tuple[float, float, float]:
        return (self.u, self.v, self.Z)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _random_inputs(spec: ProblemSpec, rng: np.random.Generator, n: int, box: float):
    g = spec.grid
    t = rng.uniform(0.0, spec.T, n)
    x = rng.uniform(g.x_left, g.x_right, n)
    args = rng.uniform(-box, box, (3, n))
    r = rng.uniform(-box, box, (n, spec.levy.J))
    return t, x, args, r


def estimate_lipschitz(
    spec: ProblemSpec,
    n_samples: int = 1000,
    seed: int = 0,
    C: float | None = None,
    box: float = 1.0,
) -> LipschitzEstimate:
    """Randomised difference quotients of the driver over ``[-box, box]``.

    For a driver such as ``u*u`` the estimate reflects the sample box (slope 2
    on ``|u| <= 1``) although the driver is not globally Lipschitz.
    """
    if n_samples < 100:
        raise ConfigurationError("estimate_lipschitz needs n_samples >= 100")
    rng = _rng(seed)
    t, x, base, r = _random_inputs(spec, rng, n_samples, box)
    other = rng.uniform(-box, box, (3, n_samples))
    best = [0.0, 0.0, 0.0]
    for i in range(n_samples):
        args = base[:, i]
        b0 = float(driver_values(spec, t[i], x[i], *args, r[i]))
        for a in range(3):
            moved = args.copy()
            moved[a] = other[a, i]
            step = abs(moved[a] - args[a])
            if step == 0.0:
                continue
            b1 = float(driver_values(spec, t[i], x[i], *moved, r[i]))
            best[a] = max(best[a], abs(b1 - b0) / step)
    exact = structural_lipschitz(spec.driver)
    if C is None:
        if exact is not None:
            C = max(exact)
        elif isinstance(spec.driver, ExpressionDriver):
            C = spec.driver.lipschitz
    passed = None if C is None else bool(max(best) <= C * (1.0 + 1e-9) + 1e-12)
    return LipschitzEstimate(best[0], best[1], best[2], exact, C, passed, n_samples)


@dataclass(frozen=True)
class A3Report:
    passed: bool
    kind: str  # "structural" or "sampled"
    lambda_bound: LambdaBoundReport
    worst_violation: float = 0.0


def check_A3(
    spec: ProblemSpec,
    t_samples: Sequence[float] | None = None,
    n_samples: int = 500,
    seed: int = 0,
    box: float = 1.0,
) -> A3Report:
    """Jump monotonicity ``b(r1) - b(r2) <= int (r1 - r2) lambda dnu`` for ``r1 >= r2``.

    Built-in drivers meet it with equality, so only the bound on ``lambda`` is
    checked.  Expression drivers are additionally falsified on random pairs.
    """
    if t_samples is None:
        t_samples = time_samples(spec, 16)
    bound = check_lambda_bound(spec.levy, spec.lam, t_samples)
    if not isinstance(spec.driver, ExpressionDriver) or spec.levy.J == 0:
        return A3Report(bound.passed, "structural", bound)
    rng = _rng(seed)
    t, x, args, r2 = _random_inputs(spec, rng, n_samples, box)
    lift = rng.uniform(0.0, box, r2.shape)
    lift[: max(1, n_samples // 10)] = 1.0
    worst = -np.inf
    for i in range(n_samples):
        r1 = r2[i] + lift[i]
        b1 = float(driver_values(spec, t[i], x[i], *args[:, i], r1))
        b2 = float(driver_values(spec, t[i], x[i], *args[:, i], r2[i]))
        rhs = float(jump_integral(spec.levy, spec.lam, lift[i], t[i]))
        worst = max(worst, b1 - b2 - rhs)
    tol = 1e-12 * max(1.0, abs(worst))
    return A3Report(bound.passed and worst <= tol, "sampled", bound, float(worst))
