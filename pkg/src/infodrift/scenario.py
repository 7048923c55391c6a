"""Scenario configuration: strict JSON parsing and validation.

Unknown keys are rejected with their full field path; a typo in a
coefficient name must never silently fall back to a default during a
verification run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import TimeGrid, build_grid
from .market import MarketCoefficients
from .regimes import (
    DrawdownBarrier,
    IncrementSign,
    JointIncrementSign,
    Noisy,
    PathwiseBarrier,
)
from .strategies import (
    ConstantMix,
    CrraOptimalG,
    LogOptimalG,
    MertonFrozen,
    UtilitySpec,
)


class ScenarioError(ValueError):
    """A scenario file violated the schema or a model invariant."""


@dataclass
class Scenario:
    grid: TimeGrid
    coefficients: MarketCoefficients
    regime: object
    strategies: list
    utility: UtilitySpec
    n_paths: int
    seed: int
    x0: float = 1.0
    s0: float = 1.0
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)


def _take(mapping: dict, path: str, required: dict, optional: dict | None = None) -> dict:
    """Pull typed fields out of ``mapping``, rejecting unknown keys."""
    optional = optional or {}
    known = set(required) | set(optional)
    for key in mapping:
        if key not in known:
            raise ScenarioError(f"unknown key '{path}.{key}'" if path else f"unknown key '{key}'")
    out = {}
    for key, conv in required.items():
        if key not in mapping:
            where = f"{path}.{key}" if path else key
            raise ScenarioError(f"missing required key '{where}'")
        out[key] = _convert(mapping[key], conv, f"{path}.{key}" if path else key)
    for key, (conv, default) in optional.items():
        if key in mapping:
            out[key] = _convert(mapping[key], conv, f"{path}.{key}" if path else key)
        else:
            out[key] = default
    return out


def _convert(value, conv, where: str):
    try:
        return conv(value)
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid value for '{where}': {exc}") from exc


def _parse_regime(node: dict, path: str):
    if not isinstance(node, dict) or "variant" not in node:
        raise ScenarioError(f"'{path}' must be an object with a 'variant' key")
    variant = node["variant"]
    rest = {k: v for k, v in node.items() if k != "variant"}
    if variant == "increment_sign":
        _take(rest, path, {})
        return IncrementSign()
    if variant == "drawdown_barrier":
        got = _take(rest, path, {"c": float})
        return DrawdownBarrier(c=got["c"])
    if variant == "pathwise_barrier":
        got = _take(rest, path, {"b_offset": float})
        return PathwiseBarrier(b_offset=got["b_offset"])
    if variant == "noisy":
        got = _take(rest, path, {"p": list, "base": dict})
        base = _parse_regime(got["base"], f"{path}.base")
        return Noisy(base=base, p=tuple(float(v) for v in got["p"]))
    if variant == "joint_increment_sign":
        _take(rest, path, {})
        return JointIncrementSign()
    raise ScenarioError(f"unknown regime variant '{variant}' at '{path}'")


def _parse_strategy(node: dict, path: str):
    if not isinstance(node, dict) or "kind" not in node:
        raise ScenarioError(f"'{path}' must be an object with a 'kind' key")
    kind = node["kind"]
    rest = {k: v for k, v in node.items() if k != "kind"}
    if kind == "log_optimal_g":
        _take(rest, path, {})
        return LogOptimalG()
    if kind == "constant_mix":
        got = _take(rest, path, {"pi": float})
        return ConstantMix(pi=got["pi"])
    if kind == "merton_frozen":
        got = _take(rest, path, {"e": int})
        return MertonFrozen(e=got["e"])
    if kind == "crra_optimal_g":
        got = _take(rest, path, {"gamma": float})
        return CrraOptimalG(gamma=got["gamma"])
    raise ScenarioError(f"unknown strategy kind '{kind}' at '{path}'")


def _parse_utility(node: dict, path: str) -> UtilitySpec:
    if not isinstance(node, dict) or "kind" not in node:
        raise ScenarioError(f"'{path}' must be an object with a 'kind' key")
    kind = node["kind"]
    rest = {k: v for k, v in node.items() if k != "kind"}
    if kind == "log":
        _take(rest, path, {})
        return UtilitySpec("log")
    if kind == "power":
        got = _take(rest, path, {"gamma": float})
        return UtilitySpec("power", got["gamma"])
    raise ScenarioError(f"unknown utility kind '{kind}' at '{path}'")


def scenario_from_dict(data: dict) -> Scenario:
    got = _take(
        data,
        "",
        required={
            "grid": dict,
            "coefficients": dict,
            "regime": dict,
            "strategies": list,
            "utility": dict,
            "n_paths": int,
            "seed": int,
        },
        optional={
            "x0": (float, 1.0),
            "s0": (float, 1.0),
            "output_dir": (str, None),
        },
    )

    grid_cfg = _take(got["grid"], "grid", {"jump_times": list, "substeps": int})
    try:
        grid = build_grid(grid_cfg["jump_times"], grid_cfg["substeps"])
    except ValueError as exc:
        raise ScenarioError(f"invalid 'grid': {exc}") from exc

    coeff_cfg = _take(
        got["coefficients"],
        "coefficients",
        {k: float for k in ("r0", "r1", "eta0", "eta1", "xi0", "xi1")},
    )
    try:
        coefficients = MarketCoefficients(**coeff_cfg)
    except ValueError as exc:
        raise ScenarioError(f"invalid 'coefficients': {exc}") from exc

    try:
        regime = _parse_regime(got["regime"], "regime")
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc

    if not got["strategies"]:
        raise ScenarioError("'strategies' must list at least one strategy")
    strategies = [
        _parse_strategy(node, f"strategies[{i}]") for i, node in enumerate(got["strategies"])
    ]
    utility = _parse_utility(got["utility"], "utility")

    if got["n_paths"] < 2:
        raise ScenarioError("'n_paths' must be at least 2")
    if got["x0"] <= 0:
        raise ScenarioError("'x0' must be positive")
    if got["s0"] <= 0:
        raise ScenarioError("'s0' must be positive")
    if regime.needs_second_driver and isinstance(regime, Noisy):
        raise ScenarioError("noisy modulation of the two-driver chain is not supported")
    if isinstance(regime, Noisy) and len(regime.p) != grid.n_intervals:
        raise ScenarioError(
            f"'regime.p' has {len(regime.p)} entries for {grid.n_intervals} intervals"
        )

    return Scenario(
        grid=grid,
        coefficients=coefficients,
        regime=regime,
        strategies=strategies,
        utility=utility,
        n_paths=got["n_paths"],
        seed=got["seed"],
        x0=got["x0"],
        s0=got["s0"],
        output_dir=got["output_dir"],
        raw=data,
    )


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file; every violation names its field."""
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must contain a JSON object")
    return scenario_from_dict(data)


def canonical_dict(scenario: Scenario) -> dict:
    """Effective configuration (after CLI overrides), for hashing and echoing."""
    regime = scenario.raw.get("regime")
    strategies = scenario.raw.get("strategies")
    return {
        "grid": {
            "jump_times": [float(t) for t in scenario.grid.jump_times],
            "substeps": scenario.grid.substeps,
        },
        "coefficients": {
            "r0": scenario.coefficients.r0,
            "r1": scenario.coefficients.r1,
            "eta0": scenario.coefficients.eta0,
            "eta1": scenario.coefficients.eta1,
            "xi0": scenario.coefficients.xi0,
            "xi1": scenario.coefficients.xi1,
        },
        "regime": regime,
        "strategies": strategies,
        "utility": scenario.raw.get("utility"),
        "n_paths": scenario.n_paths,
        "seed": scenario.seed,
        "x0": scenario.x0,
        "s0": scenario.s0,
    }
