"""Finite-mark jump model and the jump weight bounding the driver's r-dependence.

Mark fields (one field per mark) are arrays with the mark axis *first*:
shape ``(J, ...)`` where the trailing axes are those of an ordinary field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class LevyModel:
    """Jump sizes ``marks`` with intensities ``intensities`` (a finite Levy measure)."""

    marks: tuple[float, ...] = ()
    intensities: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "marks", tuple(float(z) for z in self.marks))
        object.__setattr__(self, "intensities", tuple(float(v) for v in self.intensities))
        if len(self.marks) != len(self.intensities):
            raise ConfigurationError("marks and intensities must have the same length")
        if any(z == 0.0 or not np.isfinite(z) for z in self.marks):
            raise ConfigurationError("marks must be finite and nonzero")
        if len(set(self.marks)) != len(self.marks):
            raise ConfigurationError("marks must be pairwise distinct")
        if any(v < 0.0 or not np.isfinite(v) for v in self.intensities):
            raise ConfigurationError("intensities must be finite and >= 0")

    @property
    def J(self) -> int:
        return len(self.marks)

    @property
    def total_intensity(self) -> float:
        return float(sum(self.intensities))


@dataclass(frozen=True)
class LambdaWeight:
    """Per-mark weight ``lambda(t, z_j)`` and its bound constant ``C_lambda``.

    ``values`` maps a time to an array of length J.
    """

    values: Callable[[float], np.ndarray]
    bound: float = 1.0

    @classmethod
    def constant(cls, values: Iterable[float], bound: float = 1.0) -> "LambdaWeight":
        table = np.asarray(list(values), dtype=float)
        table.setflags(write=False)
        return cls(lambda t: table, float(bound))

    @classmethod
    def zero(cls, J: int, bound: float = 1.0) -> "LambdaWeight":
        return cls.constant(np.zeros(J), bound)

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.values(t), dtype=float)


@dataclass(frozen=True)
class LambdaBoundReport:
    passed: bool
    worst_ratio: float
    worst_t: float | None = None
    worst_mark: int | None = None
    negative: bool = False
    details: list[str] = field(default_factory=list)


def check_lambda_bound(
    model: LevyModel, w: LambdaWeight, t_samples: Sequence[float]
) -> LambdaBoundReport:
    """Check ``0 <= lambda(t, z_j) <= C * min(1, |z_j|)`` at every sampled (t, j).

    The report carries the worst ratio ``lambda / (C * min(1, |z_j|))``; a
    ratio above 1 (or any negative weight) fails.
    """
    if len(t_samples) == 0:
        raise ConfigurationError("t_samples must be nonempty")
    caps = w.bound * np.minimum(1.0, np.abs(np.asarray(model.marks)))
    worst, worst_t, worst_j = 0.0, None, None
    negative = False
    details = []
    for t in t_samples:
        lam = w(t)
        if lam.shape != (model.J,):
            raise ConfigurationError(f"lambda has {lam.shape} entries, model has J={model.J}")
        for j in range(model.J):
            if lam[j] < 0.0:
                negative = True
                details.append(f"lambda(t={t}, j={j}) = {lam[j]} < 0")
            if caps[j] > 0.0:
                ratio = lam[j] / caps[j]
            else:
                ratio = 0.0 if lam[j] == 0.0 else np.inf
            if ratio > worst:
                worst, worst_t, worst_j = float(ratio), float(t), j
    passed = (not negative) and worst <= 1.0
    return LambdaBoundReport(passed, worst, worst_t, worst_j, negative, details)


def jump_weights(model: LevyModel, w: LambdaWeight, t: float) -> np.ndarray:
    """The products ``lambda(t, z_j) * nu_j``."""
    lam = w(t)
    if lam.shape != (model.J,):
        raise ConfigurationError(f"lambda has {lam.shape} entries, model has J={model.J}")
    return lam * np.asarray(model.intensities)


def jump_integral(model: LevyModel, w: LambdaWeight, r: np.ndarray, t: float) -> np.ndarray:
    """``sum_j r(., z_j) lambda(t, z_j) nu_j`` for a mark field ``r`` of shape (J, ...)."""
    r = np.asarray(r, dtype=float)
    if r.shape[0] != model.J:
        raise ConfigurationError(f"mark field has {r.shape[0]} marks, model has J={model.J}")
    weights = jump_weights(model, w, t)
    out = np.zeros(r.shape[1:])
    for j in range(model.J):
        out = out + weights[j] * r[j]
    return out
