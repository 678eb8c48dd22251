"""JSON run configuration (schema version 1).

Layout::

    {
      "schema_version": 1,
      "problem":  {...},              # solve, check, risk
      "problems": [{...}, {...}],     # compare
      "scheme":   {"N": 8, "theta": 1.0, "method": "auto"},
      "seed":     0,
      "checks":   {"n_samples": 1000},
      "outputs":  {"full_bundle": false},
      "risk":     {"terminal2": "...", "shift": 1.0, "lambdas": [0, 0.5, 1]}
    }

A problem::

    {
      "grid": {"x_left": 0, "x_right": "pi", "M": 41},
      "T": 1.0,
      "a_diff": 1.0,                  # number or expression in t, x
      "beta": 0.0,                    # number or expression in t
      "driver": {"type": "linear", "c0": 0, "c_u": 0, "c_v": 0, "c_Z": 0}
              | {"type": "concave", "c0": 0, "gamma": 1}
              | {"type": "expression", "source": "-abs(Z) + rint", "lipschitz": 1}
              | "source text",
      "levy": {"marks": [0.5], "intensities": [1.0]},
      "lambda": {"values": [0.3], "bound": 1.0},     # numbers or expressions in t
      "terminal": "sin(x)*(1 + 0.2*sin(B))",        # number, expression in x, B, L, or M values
      "boundary": 0.0,                # number or expression in t, x
      "kappa": 0.5,
      "delta1": 0.001
    }

Numeric scalars may also be written as constant expressions such as ``"pi"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigurationError, ExpressionError
from .exprlang import Expression
from .field import constant, make_grid
from .levy import LambdaWeight, LevyModel
from .problem import ConcaveDriver, ExpressionDriver, LinearDriver, ProblemSpec, Terminal
from .solver import SchemeParams

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    problems: list[ProblemSpec]
    scheme: SchemeParams
    method: str = "auto"
    seed: int = 0
    n_samples: int = 1000
    full_bundle: bool = False
    risk: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def problem(self) -> ProblemSpec:
        return self.problems[0]


def _number(value, what: str) -> float:
    if isinstance(value, bool):
        raise ConfigurationError(f"{what}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Expression(value, ())())
        except ExpressionError as exc:
            raise ConfigurationError(f"{what}: {exc}") from exc
    raise ConfigurationError(f"{what}: expected a number, got {value!r}")


def _expression(source: str, allowed, what: str) -> Expression:
    try:
        return Expression(source, allowed)
    except ExpressionError as exc:
        raise ConfigurationError(f"{what}: {exc}") from exc


def coefficient(value, what: str):
    """Number or expression in ``t, x`` -> callable ``(t, x) -> array``."""
    if isinstance(value, str):
        expr = _expression(value, ("t", "x"), what)
        return lambda t, x: expr(t=t, x=x)
    return constant(_number(value, what))


def time_function(value, what: str):
    if isinstance(value, str):
        expr = _expression(value, ("t",), what)
        return lambda t: expr(t=t)
    c = _number(value, what)
    return lambda t: c


def _driver(data, what: str):
    if isinstance(data, str):
        data = {"type": "expression", "source": data}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{what}: expected an object or expression string")
    kind = data.get("type", "linear")
    try:
        if kind == "linear":
            return LinearDriver(
                coefficient(data.get("c0", 0.0), f"{what}.c0"),
                _number(data.get("c_u", 0.0), f"{what}.c_u"),
                _number(data.get("c_v", 0.0), f"{what}.c_v"),
                _number(data.get("c_Z", 0.0), f"{what}.c_Z"),
            )
        if kind == "concave":
            return ConcaveDriver(
                coefficient(data.get("c0", 0.0), f"{what}.c0"),
                _number(data.get("gamma", 0.0), f"{what}.gamma"),
            )
        if kind == "expression":
            lip = data.get("lipschitz")
            return ExpressionDriver(
                str(data["source"]), None if lip is None else _number(lip, f"{what}.lipschitz")
            )
    except ExpressionError as exc:
        raise ConfigurationError(f"{what}: {exc}") from exc
    except KeyError as exc:
        raise ConfigurationError(f"{what}: missing key {exc}") from exc
    raise ConfigurationError(f"{what}: unknown driver type {kind!r}")


def terminal(value, M: int, what: str = "terminal") -> Terminal:
    if isinstance(value, list):
        if len(value) != M:
            raise ConfigurationError(f"{what}: expected {M} values, got {len(value)}")
        return Terminal.from_field([_number(v, what) for v in value])
    if isinstance(value, str):
        try:
            return Terminal.from_expression(value)
        except ExpressionError as exc:
            raise ConfigurationError(f"{what}: {exc}") from exc
    return Terminal.from_field(np.full(M, _number(value, what)))


def _lambda(data, J: int, what: str) -> LambdaWeight:
    if data is None:
        return LambdaWeight.zero(J)
    values = data.get("values", [0.0] * J)
    if len(values) != J:
        raise ConfigurationError(f"{what}: expected {J} values, got {len(values)}")
    bound = _number(data.get("bound", 1.0), f"{what}.bound")
    if all(not isinstance(v, str) for v in values):
        return LambdaWeight.constant([_number(v, what) for v in values], bound)
    funcs = [time_function(v, f"{what}[{j}]") for j, v in enumerate(values)]
    return LambdaWeight(lambda t: np.array([float(f(t)) for f in funcs]), bound)


def problem_from_dict(data: dict, what: str = "problem") -> ProblemSpec:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{what}: expected an object")
    try:
        g = data["grid"]
        grid = make_grid(
            _number(g["x_left"], f"{what}.grid.x_left"),
            _number(g["x_right"], f"{what}.grid.x_right"),
            int(_number(g["M"], f"{what}.grid.M")),
        )
        levy_data = data.get("levy", {})
        levy = LevyModel(
            tuple(_number(z, f"{what}.levy.marks") for z in levy_data.get("marks", [])),
            tuple(_number(v, f"{what}.levy.intensities") for v in levy_data.get("intensities", [])),
        )
        return ProblemSpec(
            grid=grid,
            T=_number(data.get("T", 1.0), f"{what}.T"),
            a_diff=coefficient(data.get("a_diff", 1.0), f"{what}.a_diff"),
            phi=terminal(data.get("terminal", 0.0), grid.M, f"{what}.terminal"),
            driver=_driver(data.get("driver", {}), f"{what}.driver"),
            beta=time_function(data.get("beta", 0.0), f"{what}.beta"),
            levy=levy,
            lam=_lambda(data.get("lambda"), levy.J, f"{what}.lambda"),
            boundary=coefficient(data.get("boundary", 0.0), f"{what}.boundary"),
            kappa=_number(data.get("kappa", 0.5), f"{what}.kappa"),
            delta1=_number(data.get("delta1", 1e-3), f"{what}.delta1"),
        )
    except KeyError as exc:
        raise ConfigurationError(f"{what}: missing key {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    if "problems" in data:
        items = data["problems"]
        if not isinstance(items, list) or not items:
            raise ConfigurationError("problems must be a nonempty list")
        problems = [problem_from_dict(p, f"problems[{i}]") for i, p in enumerate(items)]
    elif "problem" in data:
        problems = [problem_from_dict(data["problem"])]
    else:
        raise ConfigurationError("configuration needs 'problem' or 'problems'")
    scheme = data.get("scheme", {})
    method = scheme.get("method", "auto")
    if method not in ("auto", "tree", "deterministic"):
        raise ConfigurationError(f"scheme.method must be auto, tree or deterministic, got {method!r}")
    return RunConfig(
        problems=problems,
        scheme=SchemeParams(int(_number(scheme.get("N", 8), "scheme.N")), _number(scheme.get("theta", 1.0), "scheme.theta")),
        method=method,
        seed=int(data.get("seed", 0)),
        n_samples=int(data.get("checks", {}).get("n_samples", 1000)),
        full_bundle=bool(data.get("outputs", {}).get("full_bundle", False)),
        risk=dict(data.get("risk", {})),
        raw=data,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)
