"""Regime-modulated assets, portfolio wealth, and the pricing deflator.

Dynamics per fine step, with coefficients frozen at the regime in force:

    d ln D = r dt
    d ln S = (eta - xi^2/2) dt + xi dW
    d ln X = (r + pi (eta - r) - pi^2 xi^2 / 2) dt + pi xi dW
    d ln Z = -theta dW^ - theta^2/2 dt   (- nu dB^ - nu^2/2 dt)

The log scheme is exact within a step for frozen coefficients, so D, S, X
and Z stay strictly positive on every path.  Wealth uses raw forward
increments of W; for an adapted strategy these realize the enlarged-
filtration Ito integral, and the identity
pi xi dW = pi xi dW^ + pi xi alpha dt is asserted in tests rather than used
as the scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PathBundle, TimeGrid


@dataclass(frozen=True)
class MarketCoefficients:
    """Short rates, drifts and volatilities of the two regimes."""

    r0: float
    r1: float
    eta0: float
    eta1: float
    xi0: float
    xi1: float

    def __post_init__(self):
        if not (self.xi0 > 0 and self.xi1 > 0):
            raise ValueError("volatilities must be positive")
        if self.xi0 == self.xi1:
            raise ValueError("volatilities must differ between regimes (xi0 != xi1)")
        if not (self.r0 > 0 and self.r1 > 0):
            raise ValueError("short rates must be positive")

    @property
    def M0(self) -> float:
        return (self.eta0 - self.r0) / self.xi0

    @property
    def M1(self) -> float:
        return (self.eta1 - self.r1) / self.xi1

    def r_of(self, eps):
        return np.where(np.asarray(eps) == 1, self.r1, self.r0)

    def eta_of(self, eps):
        return np.where(np.asarray(eps) == 1, self.eta1, self.eta0)

    def xi_of(self, eps):
        return np.where(np.asarray(eps) == 1, self.xi1, self.xi0)

    def risk_premium_of(self, eps):
        return np.where(np.asarray(eps) == 1, self.M1, self.M0)


@dataclass
class WealthPath:
    """Wealth along the fine grid, the strategy path, and terminal log utility."""

    x: np.ndarray
    pi: np.ndarray
    terminal_log_utility: np.ndarray


@dataclass
class DeflatorPath:
    """Deflator level Z and bank account D along the fine grid."""

    z: np.ndarray
    d: np.ndarray


def regime_per_step(eps, grid: TimeGrid) -> np.ndarray:
    """Regime in force at each fine step: eps_t = eps_{t_k} on [t_k, t_{k+1})."""
    return np.repeat(np.asarray(eps), grid.substeps, axis=-1)


def simulate_assets(coeffs: MarketCoefficients, eps, bundle: PathBundle, grid: TimeGrid, s0: float = 1.0):
    """Bank account and risky asset paths, exact log scheme per frozen step."""
    if s0 <= 0:
        raise ValueError("initial asset price must be positive")
    eps_step = regime_per_step(eps, grid)
    dt = grid.fine_dt
    dw = np.diff(bundle.w, axis=1)
    r = coeffs.r_of(eps_step)
    eta = coeffs.eta_of(eps_step)
    xi = coeffs.xi_of(eps_step)

    d = np.empty_like(bundle.w)
    s = np.empty_like(bundle.w)
    d[:, 0] = 1.0
    s[:, 0] = s0
    np.exp(np.cumsum(r * dt, axis=1), out=d[:, 1:])
    s[:, 1:] = s0 * np.exp(np.cumsum((eta - 0.5 * xi * xi) * dt + xi * dw, axis=1))
    return d, s


def simulate_wealth(
    strategy,
    coeffs: MarketCoefficients,
    eps,
    bundle: PathBundle,
    grid: TimeGrid,
    x0: float,
) -> WealthPath:
    """Wealth under a strategy evaluated at left endpoints of the fine grid."""
    if x0 <= 0:
        raise ValueError("initial wealth must be positive")
    eps_step = regime_per_step(eps, grid)
    alpha_step = None if bundle.alpha is None else bundle.alpha[:, :-1]
    pi = strategy.pi_path(coeffs, eps_step, alpha_step)
    pi = np.broadcast_to(pi, eps_step.shape)
    if not np.all(np.isfinite(pi)):
        raise ValueError("strategy produced a non-finite allocation")

    dt = grid.fine_dt
    dw = np.diff(bundle.w, axis=1)
    r = coeffs.r_of(eps_step)
    eta = coeffs.eta_of(eps_step)
    xi = coeffs.xi_of(eps_step)

    dlnx = (r + pi * (eta - r) - 0.5 * pi * pi * xi * xi) * dt + pi * xi * dw
    x = np.empty_like(bundle.w)
    x[:, 0] = x0
    x[:, 1:] = x0 * np.exp(np.cumsum(dlnx, axis=1))
    return WealthPath(x=x, pi=pi, terminal_log_utility=np.log(x[:, -1]))


def deflator(
    theta_path,
    bundle: PathBundle,
    grid: TimeGrid,
    coeffs: MarketCoefficients,
    eps=None,
    nu=None,
) -> DeflatorPath:
    """Deflator Z (stochastic exponential of -theta against W^) and bank account D.

    ``theta_path`` has one column per fine step.  In the two-driver market an
    extra integrand ``nu`` against B^ may be supplied (the deflator family of
    the incomplete case); D requires the realized regimes ``eps``.
    """
    if bundle.w_hat is None:
        raise ValueError("decompose the bundle before building the deflator")
    dt = grid.fine_dt
    dwh = np.diff(bundle.w_hat, axis=1)
    th = np.asarray(theta_path, dtype=np.float64)
    dlnz = -th * dwh - 0.5 * th * th * dt
    if nu is not None:
        if bundle.b_hat is None:
            raise ValueError("nu integrand requires the decomposed second driver")
        nu = np.broadcast_to(np.asarray(nu, dtype=np.float64), dlnz.shape)
        dbh = np.diff(bundle.b_hat, axis=1)
        dlnz = dlnz - nu * dbh - 0.5 * nu * nu * dt

    z = np.empty_like(bundle.w)
    z[:, 0] = 1.0
    z[:, 1:] = np.exp(np.cumsum(dlnz, axis=1))

    d = np.empty_like(bundle.w)
    d[:, 0] = 1.0
    if eps is not None:
        r = coeffs.r_of(regime_per_step(eps, grid))
        np.exp(np.cumsum(r * dt, axis=1), out=d[:, 1:])
    else:
        d[:, 1:] = 1.0
    return DeflatorPath(z=z, d=d)
