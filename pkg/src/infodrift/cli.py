"""Scenario-driven batch runner.

    infodrift simulate scenario.json [--seed N] [--paths N] [--paths-dump K] [--out DIR]

Writes report.json (Monte Carlo means per strategy against the closed
forms), summary.csv (per-interval value breakdown) and, when requested,
paths.csv (sampled path dump).  Outputs are a pure function of the scenario
file and the effective seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .core import RngSpec, sample_paths
from .drift import decompose
from .market import simulate_assets, simulate_wealth
from .regimes import JointIncrementSign, Noisy, realize_chain
from .scenario import Scenario, ScenarioError, canonical_dict, parse_scenario
from .strategies import CrraOptimalG, f_baseline_value, crra_terminal_wealth, power_utility
from .valuation import (
    REJECT_FLAGGED_FRACTION,
    StrategyEstimate,
    ValuationReport,
    closed_form_breakdown,
    mean_stderr,
    noisy_value_decomposition,
    simulate_terminals,
)

SCHEMA_VERSION = 1


def _scenario_hash(scenario: Scenario) -> str:
    canon = json.dumps(canonical_dict(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def run_valuation(scenario: Scenario) -> ValuationReport:
    """Monte Carlo means for every strategy plus the closed-form pieces."""
    rng = RngSpec(scenario.seed)
    sample = simulate_terminals(
        scenario.regime,
        scenario.coefficients,
        scenario.grid,
        scenario.strategies,
        scenario.n_paths,
        rng,
        x0=scenario.x0,
    )

    estimates = []
    for strat in scenario.strategies:
        if isinstance(strat, CrraOptimalG):
            utility = power_utility(strat.gamma)
            x_T, _ = crra_terminal_wealth(utility, sample.deflated_terminal(), scenario.x0)
            mean, err = mean_stderr(utility.u(x_T))
        else:
            ln_x = sample.ln_x[strat.name]
            if scenario.utility.kind == "log":
                mean, err = mean_stderr(ln_x)
            else:
                g = scenario.utility.gamma
                mean, err = mean_stderr(np.exp(g * ln_x) / g)
        estimates.append(StrategyEstimate(name=strat.name, mc_mean=mean, mc_stderr=err))

    vf = f_baseline_value(scenario.coefficients, scenario.regime, scenario.grid, scenario.x0)
    closed_rng = RngSpec(scenario.seed, 1_000_000)

    noisy = None
    entropy = malliavin = voi = None
    breakdown = []
    if isinstance(scenario.regime, JointIncrementSign):
        pass  # no proved closed form in the incomplete market
    elif isinstance(scenario.regime, Noisy):
        noisy = noisy_value_decomposition(
            scenario.regime, scenario.coefficients, scenario.grid, rng=closed_rng
        )
        entropy = noisy.entropy_gtilde_vf
        malliavin = noisy.malliavin_gtilde_vf
        voi = noisy.v_gtilde_minus_vf
    else:
        cf = closed_form_breakdown(
            scenario.regime, scenario.coefficients, scenario.grid, rng=closed_rng
        )
        entropy, malliavin, voi = cf.entropy_term, cf.malliavin_term, cf.value
        breakdown = cf.per_interval

    return ValuationReport(
        per_strategy=estimates,
        vf=vf,
        entropy_term=entropy,
        malliavin_term=malliavin,
        closed_form_vg_minus_vf=voi,
        per_interval_breakdown=breakdown,
        n_paths=scenario.n_paths,
        seed=scenario.seed,
        saturated_paths=int(np.sum(sample.flags > 0)),
        noisy=noisy,
    )


def _write_report(scenario: Scenario, report: ValuationReport, out: Path) -> bool:
    rejected = report.saturated_paths > REJECT_FLAGGED_FRACTION * report.n_paths
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": _scenario_hash(scenario),
        "n_paths": report.n_paths,
        "seed": report.seed,
        "per_strategy": [
            {"name": e.name, "mc_mean": e.mc_mean, "mc_stderr": e.mc_stderr}
            for e in report.per_strategy
        ],
        "closed_form": {
            "vf": report.vf,
            "entropy_term": report.entropy_term,
            "malliavin_term": report.malliavin_term,
            "value_of_information": report.closed_form_vg_minus_vf,
        },
        "flags": {"saturated_paths": report.saturated_paths, "rejected": rejected},
    }
    if report.noisy is not None:
        doc["noisy"] = dataclasses.asdict(report.noisy)
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return rejected


def _write_summary(report: ValuationReport, out: Path):
    lines = ["k,t_lo,t_hi,prob_one,entropy,malliavin,malliavin_stderr,value"]
    for row in report.per_interval_breakdown:
        lines.append(
            f"{row.k},{row.t_lo!r},{row.t_hi!r},{row.prob_one!r},{row.entropy!r},"
            f"{row.malliavin!r},{row.malliavin_stderr!r},{row.value!r}"
        )
    (out / "summary.csv").write_text("\n".join(lines) + "\n")


def _write_paths(scenario: Scenario, n_dump: int, out: Path):
    """Dump the first n_dump paths: driver, drift, decomposition, assets, wealth."""
    rng = RngSpec(scenario.seed)
    bundle = sample_paths(
        scenario.grid, rng, n_paths=n_dump,
        with_second_driver=scenario.regime.needs_second_driver,
    )
    bundle.eps = realize_chain(scenario.regime, bundle, scenario.grid)
    decompose(scenario.regime, bundle, scenario.grid)
    _, s = simulate_assets(
        scenario.coefficients, bundle.eps, bundle, scenario.grid, s0=scenario.s0
    )
    strat = next(
        (x for x in scenario.strategies if not isinstance(x, CrraOptimalG)), None
    )
    if strat is None:
        raise ScenarioError("path dumps need at least one strategy with an allocation path")
    wealth = simulate_wealth(
        strat, scenario.coefficients, bundle.eps, bundle, scenario.grid, scenario.x0
    )

    eps_at = np.repeat(bundle.eps, scenario.grid.substeps, axis=1)
    lines = ["path,t,w,w_hat,alpha,eps,s,x"]
    for r in range(n_dump):
        for j, t in enumerate(scenario.grid.fine_times):
            e = int(eps_at[r, min(j, eps_at.shape[1] - 1)])
            lines.append(
                f"{r},{t!r},{bundle.w[r, j]!r},{bundle.w_hat[r, j]!r},"
                f"{bundle.alpha[r, j]!r},{e},{s[r, j]!r},{wealth.x[r, j]!r}"
            )
    (out / "paths.csv").write_text("\n".join(lines) + "\n")


def run(scenario: Scenario, out_dir=None, paths_dump: int = 0) -> int:
    """Execute a scenario and write its artifacts; nonzero exit on rejection."""
    out = Path(out_dir or scenario.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    report = run_valuation(scenario)
    rejected = _write_report(scenario, report, out)
    _write_summary(report, out)
    if paths_dump > 0:
        _write_paths(scenario, paths_dump, out)
    if rejected:
        print(
            f"warning: {report.saturated_paths} paths saturated the drift cap; batch rejected",
            file=sys.stderr,
        )
        return 2
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="infodrift",
        description="Anticipative regime-modulated market simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="run a scenario file")
    sim.add_argument("scenario", help="path to the scenario JSON file")
    sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sim.add_argument("--paths", type=int, default=None, help="override the path count")
    sim.add_argument("--paths-dump", type=int, default=0, help="dump the first K paths to paths.csv")
    sim.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    try:
        scenario = parse_scenario(args.scenario)
        if args.seed is not None:
            scenario.seed = args.seed
        if args.paths is not None:
            if args.paths < 2:
                raise ScenarioError("'--paths' must be at least 2")
            scenario.n_paths = args.paths
        return run(scenario, out_dir=args.out, paths_dump=args.paths_dump)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
