"""Anticipative Markov-modulated markets: drifts, portfolios, information value."""

from .core import (
    PathBundle,
    RngSpec,
    TimeGrid,
    build_grid,
    running_max,
    sample_paths,
    std_normal,
)
from .drift import (
    DriftEvaluation,
    alpha,
    alpha_binary_general,
    decompose,
    evaluate_drift,
    gamma,
    theta,
)
from .market import (
    DeflatorPath,
    MarketCoefficients,
    WealthPath,
    deflator,
    simulate_assets,
    simulate_wealth,
)
from .regimes import (
    ConditionalState,
    DrawdownBarrier,
    IncrementSign,
    JointIncrementSign,
    Noisy,
    PathwiseBarrier,
    conditional_prob,
    jacod_density,
    realize_chain,
    state_at,
    unconditional_prob,
)
from .scenario import Scenario, ScenarioError, parse_scenario, scenario_from_dict
from .strategies import (
    ConstantMix,
    CrraOptimalG,
    LOG_UTILITY,
    LogOptimalG,
    MertonFrozen,
    UtilitySpec,
    crra_budget_multiplier,
    crra_terminal_wealth,
    f_baseline_value,
    incomplete_log_optimal_pi,
    log_optimal_pi,
    power_utility,
)
from .valuation import (
    BatchRejectedError,
    NoisyValue,
    Rebalanced,
    TerminalSample,
    ValuationReport,
    binary_entropy,
    closed_form_breakdown,
    entropy_term,
    h,
    malliavin_term,
    mc_expected_utility,
    noisy_value_decomposition,
    simulate_terminals,
    value_of_information_closed,
)

__version__ = "0.1.0"
