"""Strategy catalogue, utility functions, and the budget multiplier.

The log-optimal allocation under the enlarged filtration is

    pi = (eta_e - r_e) / xi_e^2 + alpha / xi_e = theta / xi_e,

the classical Merton fraction tilted by the information drift.  In the
two-driver market the same expression is optimal for log utility; the
second-driver drift gamma never enters.  CRRA terminal wealth is built from
the deflator through the inverse marginal utility and the budget multiplier
Y(x0) solving  E[D^-1 Z I(Y D^-1 Z)] = x0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TimeGrid
from .market import MarketCoefficients
from .regimes import unconditional_prob


def log_optimal_pi(coeffs: MarketCoefficients, e, alpha_realized):
    """Log-optimal risky fraction (eta_e - r_e)/xi_e^2 + alpha/xi_e."""
    e = np.asarray(e)
    merton = np.where(
        e == 1,
        (coeffs.eta1 - coeffs.r1) / coeffs.xi1**2,
        (coeffs.eta0 - coeffs.r0) / coeffs.xi0**2,
    )
    xi = np.where(e == 1, coeffs.xi1, coeffs.xi0)
    out = merton + np.asarray(alpha_realized, dtype=np.float64) / xi
    return float(out) if np.ndim(out) == 0 else out


def incomplete_log_optimal_pi(coeffs: MarketCoefficients, e, alpha_realized):
    """Log-optimal fraction in the two-driver market.

    Identical functional form to the complete case: the allocation depends
    on the first-driver drift alpha only, never on gamma.
    """
    return log_optimal_pi(coeffs, e, alpha_realized)


@dataclass(frozen=True)
class ConstantMix:
    """Fixed risky fraction, rebalanced every step."""

    pi: float

    @property
    def name(self) -> str:
        return f"const_mix_{self.pi:g}"

    def pi_path(self, coeffs, eps_step, alpha_step):
        return np.full_like(np.asarray(eps_step, dtype=np.float64), self.pi)


@dataclass(frozen=True)
class MertonFrozen:
    """Merton fraction of one regime, held regardless of the realized chain."""

    e: int

    def __post_init__(self):
        if self.e not in (0, 1):
            raise ValueError("regime must be 0 or 1")

    @property
    def name(self) -> str:
        return f"merton_frozen_{self.e}"

    def pi_path(self, coeffs, eps_step, alpha_step):
        if self.e == 1:
            val = (coeffs.eta1 - coeffs.r1) / coeffs.xi1**2
        else:
            val = (coeffs.eta0 - coeffs.r0) / coeffs.xi0**2
        return np.full_like(np.asarray(eps_step, dtype=np.float64), val)


@dataclass(frozen=True)
class LogOptimalG:
    """Log-optimal strategy under the enlarged filtration; needs the drift."""

    name = "log_optimal_g"

    def pi_path(self, coeffs, eps_step, alpha_step):
        if alpha_step is None:
            raise ValueError("log-optimal strategy requires a decomposed bundle")
        return log_optimal_pi(coeffs, eps_step, alpha_step)


@dataclass(frozen=True)
class CrraOptimalG:
    """CRRA-optimal terminal wealth  I(Y(x0) D^-1 Z); no allocation path.

    Only the terminal wealth, budget multiplier and value are computed; the
    hedging allocation is not constructed.
    """

    gamma: float

    def __post_init__(self):
        if self.gamma == 0 or self.gamma >= 1:
            raise ValueError("power exponent must be nonzero and below 1")

    @property
    def name(self) -> str:
        return f"crra_optimal_g_{self.gamma:g}"

    def pi_path(self, coeffs, eps_step, alpha_step):
        raise NotImplementedError(
            "the CRRA optimum is defined through its terminal wealth, not an allocation path"
        )


Strategy = ConstantMix | MertonFrozen | LogOptimalG | CrraOptimalG


@dataclass(frozen=True)
class UtilitySpec:
    """Log or power utility with its marginal inverse (Inada conditions hold)."""

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("log", "power"):
            raise ValueError(f"unknown utility kind '{self.kind}'")
        if self.kind == "power":
            if self.gamma is None or self.gamma == 0 or self.gamma >= 1:
                raise ValueError("power utility needs gamma != 0, gamma < 1")

    def u(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "log":
            return np.log(x)
        return x**self.gamma / self.gamma

    def u_prime(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "log":
            return 1.0 / x
        return x ** (self.gamma - 1.0)

    def inverse_marginal(self, y):
        """I = (U')^{-1}; decreasing, I(0+) = inf, I(inf) = 0."""
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "log":
            return 1.0 / y
        return y ** (1.0 / (self.gamma - 1.0))


LOG_UTILITY = UtilitySpec("log")


def power_utility(gamma: float) -> UtilitySpec:
    return UtilitySpec("power", gamma)


def f_baseline_value(coeffs: MarketCoefficients, spec, grid: TimeGrid, x0: float) -> float:
    """Reference log value without the chain information.

    ln x0 + int E[r_eps] dt + 1/2 int E[((eta_eps - r_eps)/xi_eps)^2] dt, with
    the regime probabilities P(eps_k = 1) applied per interval.
    """
    if x0 <= 0:
        raise ValueError("initial wealth must be positive")
    total = math.log(x0)
    m0sq, m1sq = coeffs.M0**2, coeffs.M1**2
    for k in range(grid.n_intervals):
        p1 = unconditional_prob(spec, 1, k, grid)
        dk = grid.interval_length(k)
        total += dk * (p1 * coeffs.r1 + (1.0 - p1) * coeffs.r0)
        total += 0.5 * dk * (p1 * m1sq + (1.0 - p1) * m0sq)
    return total


def crra_budget_multiplier(utility: UtilitySpec, deflator_samples, x0: float) -> float:
    """Solve  mean[ s * I(Y s) ] = x0  over the deflated samples s = D_T^-1 Z_T.

    The map Y -> budget is strictly decreasing (I decreases), so the root is
    unique; it is found by bisection on ln Y.  Log utility cancels the
    samples entirely and returns exactly 1/x0.
    """
    if x0 <= 0:
        raise ValueError("initial wealth must be positive")
    if utility.kind == "log":
        return 1.0 / x0

    s = np.asarray(deflator_samples, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0:
        raise ValueError("deflator samples must be a non-empty vector")
    if np.any(s <= 0):
        raise ValueError("deflator samples must be positive")

    def budget(log_y):
        return float(np.mean(s * utility.inverse_marginal(np.exp(log_y) * s)))

    lo, hi = math.log(1e-12), math.log(1e12)
    if not (budget(lo) >= x0 >= budget(hi)):
        raise ValueError("budget multiplier bracket [1e-12, 1e12] does not contain the root")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if budget(mid) > x0:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def crra_terminal_wealth(utility: UtilitySpec, deflator_samples, x0: float):
    """Optimal terminal wealth I(Y(x0) s) on the sample set, budget-feasible."""
    y = crra_budget_multiplier(utility, deflator_samples, x0)
    s = np.asarray(deflator_samples, dtype=np.float64)
    return utility.inverse_marginal(y * s), y
