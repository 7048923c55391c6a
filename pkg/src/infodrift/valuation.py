"""Monte Carlo expected utility, closed-form value of information, and reports.

For a chain revealed interval by interval, the log value of the extra
information splits into an entropy sum and a premium term,

    V_G - V_F = sum_k H(P(eps_k = 1)) + (M1 - M0) * int_0^T E[D_t eps_t] dt,

with H the binary entropy and M_e the per-regime risk premium.  For the
increment-sign chain the premium integral is sum_k sqrt(dk / 2 pi) in closed
form; other chains get a Monte Carlo estimate of the same integral from
their Phi'-numerators.

For the Bernoulli-noised chain eps~ = L * eps the entropy piece is the
mutual information the noisy observation carries about the path,

    V_G~ - V_F = sum_k [ H(x_k p_k) - x_k H(p_k) ] + (M1 - M0) sum_k p_k B_k,

where x_k = P(eps_k = 1), p_k the noise parameter and B_k the interval's
premium integral.  This reduces to the un-noised value at p_k = 1 and to 0
as p_k -> 0, and the remaining gap V_G - V_G~ has entropy part
h(x, p) = H(x) + x H(p) - H(x p) > 0 on (0,1)^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngSpec, TimeGrid, sample_paths
from .drift import decompose, interval_p1_num, interval_state_pieces
from .market import MarketCoefficients
from .regimes import (
    JointIncrementSign,
    IncrementSign,
    Noisy,
    realize_chain,
    unconditional_prob,
)
from .strategies import (
    ConstantMix,
    CrraOptimalG,
    LogOptimalG,
    crra_terminal_wealth,
    power_utility,
)

# Reject a batch when more than this fraction of paths hit the drift cap.
REJECT_FLAGGED_FRACTION = 1e-3

# Target element count per (paths x steps) work block.
_BLOCK_ELEMENTS = 2.0e7


class BatchRejectedError(RuntimeError):
    """Raised when too many paths saturated the drift cap to trust the batch."""


@dataclass(frozen=True)
class Rebalanced:
    """A strategy re-evaluated only every c-th fine step (held in between).

    Trading on the coarser grid while simulating on the fine one couples the
    two discretizations pathwise, which is what the convergence and
    extrapolation checks need.
    """

    base: object
    every: int

    @property
    def name(self) -> str:
        return f"{self.base.name}_hold{self.every}"

    def pi_path(self, coeffs, eps_step, alpha_step):
        pi = self.base.pi_path(coeffs, eps_step, alpha_step)
        pi = np.broadcast_to(pi, np.asarray(eps_step, dtype=np.float64).shape)
        if pi.shape[1] % self.every:
            raise ValueError("rebalancing stride must divide the number of fine steps")
        return np.repeat(pi[:, :: self.every], self.every, axis=1)


@dataclass
class TerminalSample:
    """Per-path terminal quantities from one simulation run."""

    ln_x: dict
    ln_d: np.ndarray
    ln_z: np.ndarray
    w_hat_terminal: np.ndarray
    flags: np.ndarray
    b_hat_terminal: np.ndarray | None = None
    alpha2_half: np.ndarray | None = None
    alpha2_half_coarse: np.ndarray | None = None
    qv_w: np.ndarray | None = None
    qv_reconstruction_error: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return len(self.ln_d)

    @property
    def flagged_fraction(self) -> float:
        return float(np.mean(self.flags > 0))

    def deflated_terminal(self) -> np.ndarray:
        """Samples of D_T^-1 Z_T."""
        return np.exp(self.ln_z - self.ln_d)


def simulate_terminals(
    spec,
    coeffs: MarketCoefficients,
    grid: TimeGrid,
    strategies,
    n_paths: int,
    rng: RngSpec,
    x0: float = 1.0,
    nu=None,
    verify_drift: bool = False,
    want_alpha2: bool = False,
    alpha2_stride: int = 1,
    want_qv: bool = False,
) -> TerminalSample:
    """Simulate terminal wealth, deflator and driver statistics path by path.

    Strategies share paths (common random numbers).  CRRA strategies are
    excluded here: their terminal wealth is a functional of the whole sample
    and is assembled in ``mc_expected_utility``.
    """
    n = grid.n_intervals
    m = grid.substeps
    n_fine = grid.n_fine
    dt = grid.fine_dt
    with_b = spec.needs_second_driver

    tradeable = [s for s in strategies if not isinstance(s, CrraOptimalG)]
    ln_x = {s.name: np.zeros(n_paths) for s in tradeable}
    ln_d = np.zeros(n_paths)
    ln_z = np.zeros(n_paths)
    w_hat_T = np.empty(n_paths)
    b_hat_T = np.empty(n_paths) if with_b else None
    flags = np.zeros(n_paths, dtype=np.int64)
    alpha2 = np.empty((n_paths, n)) if want_alpha2 else None
    alpha2_coarse = np.empty((n_paths, n)) if (want_alpha2 and alpha2_stride > 1) else None
    qv_w = np.zeros(n_paths) if want_qv else None
    qv_err = np.zeros(n_paths) if want_qv else None

    rows = max(32, min(n_paths, int(_BLOCK_ELEMENTS // max(n_fine, 1))))
    log_x0 = math.log(x0)

    start = 0
    while start < n_paths:
        p = min(rows, n_paths - start)
        sl = slice(start, start + p)
        bundle = sample_paths(grid, rng.shifted(start), p, with_second_driver=with_b)
        bundle.eps = realize_chain(spec, bundle, grid)
        decompose(spec, bundle, grid, verify=verify_drift)

        dw_full = np.diff(bundle.w, axis=1)
        dbh_full = np.diff(bundle.b_hat, axis=1) if (nu is not None) else None

        # interval slabs: coefficients are frozen per (path, interval) and the
        # fine step is a scalar within each interval
        for k in range(n):
            ssl = grid.interval_slice(k)
            dk = grid.interval_length(k)
            dts = dk / m
            e_k = bundle.eps[:, k : k + 1].astype(np.float64)
            r_k = coeffs.r0 + (coeffs.r1 - coeffs.r0) * e_k
            eta_k = coeffs.eta0 + (coeffs.eta1 - coeffs.eta0) * e_k
            xi_k = coeffs.xi0 + (coeffs.xi1 - coeffs.xi0) * e_k
            rp_k = coeffs.M0 + (coeffs.M1 - coeffs.M0) * e_k
            alpha_k = bundle.alpha[:, ssl]
            dw_k = dw_full[:, ssl]
            theta_k = rp_k + alpha_k

            ln_d[sl] += dk * r_k[:, 0]
            # -theta (dw - alpha dt) - theta^2 dt / 2
            dlnz = (theta_k * (alpha_k * dts - dw_k - 0.5 * theta_k * dts)).sum(axis=1)
            if nu is not None:
                nu_k = np.broadcast_to(np.asarray(nu, dtype=np.float64), dw_k.shape)
                dlnz += (-nu_k * dbh_full[:, ssl] - 0.5 * nu_k * nu_k * dts).sum(axis=1)
            ln_z[sl] += dlnz

            for s in tradeable:
                if isinstance(s, ConstantMix):
                    c = s.pi
                    drift = r_k + c * (eta_k - r_k) - 0.5 * c * c * xi_k * xi_k
                    inc = dk * drift[:, 0] + c * xi_k[:, 0] * (
                        bundle.w[:, (k + 1) * m] - bundle.w[:, k * m]
                    )
                elif isinstance(s, LogOptimalG):
                    # pi = theta / xi makes the integrand r + theta^2/2 - theta alpha
                    inc = (
                        r_k * dts
                        + theta_k * ((0.5 * dts) * theta_k - dts * alpha_k)
                        + theta_k * dw_k
                    ).sum(axis=1)
                elif isinstance(s, Rebalanced) and isinstance(s.base, LogOptimalG):
                    c = s.every
                    theta_b = rp_k + alpha_k[:, ::c]
                    dw_b = dw_k.reshape(p, m // c, c).sum(axis=2)
                    inc = (
                        r_k * (c * dts)
                        + theta_b * ((0.5 * c * dts) * theta_b - (c * dts) * alpha_k[:, ::c])
                        + theta_b * dw_b
                    ).sum(axis=1)
                else:
                    pi = np.broadcast_to(
                        s.pi_path(coeffs, np.broadcast_to(e_k, dw_k.shape), alpha_k), dw_k.shape
                    )
                    inc = (
                        (r_k + pi * (eta_k - r_k) - 0.5 * pi * pi * xi_k * xi_k) * dts
                        + pi * xi_k * dw_k
                    ).sum(axis=1)
                ln_x[s.name][sl] += inc

            if want_alpha2:
                alpha2[sl, k] = (0.5 * dts) * (alpha_k * alpha_k).sum(axis=1)
                if alpha2_coarse is not None:
                    ac = alpha_k[:, :: alpha2_stride]
                    alpha2_coarse[sl, k] = (0.5 * dts * alpha2_stride) * (ac * ac).sum(axis=1)
            if want_qv:
                qv_w[sl] += (dw_k * dw_k).sum(axis=1)
                qv_err[sl] += (((dw_k - alpha_k * dts) + alpha_k * dts) ** 2).sum(axis=1)

        w_hat_T[sl] = bundle.w_hat[:, -1]
        if with_b:
            b_hat_T[sl] = bundle.b_hat[:, -1]
        flags[sl] = bundle.flags
        start += p

    for name in ln_x:
        ln_x[name] += log_x0
    if want_qv:
        qv_err = np.abs(qv_err - qv_w) / qv_w

    return TerminalSample(
        ln_x=ln_x,
        ln_d=ln_d,
        ln_z=ln_z,
        w_hat_terminal=w_hat_T,
        b_hat_terminal=b_hat_T,
        flags=flags,
        alpha2_half=alpha2,
        alpha2_half_coarse=alpha2_coarse,
        qv_w=qv_w,
        qv_reconstruction_error=qv_err,
    )


def mean_stderr(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n < 2:
        raise ValueError("need at least two samples for a standard error")
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def _check_flags(sample: TerminalSample):
    frac = sample.flagged_fraction
    if frac > REJECT_FLAGGED_FRACTION:
        raise BatchRejectedError(
            f"{frac:.2%} of paths saturated the drift cap "
            f"(limit {REJECT_FLAGGED_FRACTION:.2%}); batch rejected"
        )


def mc_expected_utility(
    strategy,
    scenario,
    n_paths: int | None = None,
    rng: RngSpec | None = None,
) -> tuple[float, float]:
    """Sample mean and standard error of U(X_T) under one strategy.

    Deterministic given the rng spec; batches with more than 0.1% of paths
    saturating the drift cap are rejected.
    """
    n_paths = scenario.n_paths if n_paths is None else int(n_paths)
    rng = RngSpec(scenario.seed) if rng is None else rng
    utility = scenario.utility

    if isinstance(strategy, CrraOptimalG):
        utility = power_utility(strategy.gamma)
        sample = simulate_terminals(
            scenario.regime, scenario.coefficients, scenario.grid, [], n_paths, rng,
            x0=scenario.x0,
        )
        _check_flags(sample)
        x_T, _ = crra_terminal_wealth(utility, sample.deflated_terminal(), scenario.x0)
        return mean_stderr(utility.u(x_T))

    sample = simulate_terminals(
        scenario.regime, scenario.coefficients, scenario.grid, [strategy], n_paths, rng,
        x0=scenario.x0,
    )
    _check_flags(sample)
    ln_x = sample.ln_x[strategy.name]
    if utility.kind == "log":
        return mean_stderr(ln_x)
    return mean_stderr(np.exp(utility.gamma * ln_x) / utility.gamma)


def binary_entropy(p):
    """-(p ln p + (1-p) ln (1-p)), with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    inside = (p > 0.0) & (p < 1.0)
    q = p[inside]
    out[inside] = -(q * np.log(q) + (1.0 - q) * np.log1p(-q))
    return float(out) if np.ndim(p) == 0 else out


def entropy_term(probs) -> float:
    """Sum of binary entropies of P(eps_k = 1) over intervals."""
    probs = np.atleast_1d(np.asarray(probs, dtype=np.float64))
    if np.any((probs < 0.0) | (probs > 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.sum(binary_entropy(probs)))


def h(x, y):
    """Entropy gap H(x) + x H(y) - H(x y) between exact and noisy information.

    Positive for all x, y in (0, 1): observing the noisy bit can never carry
    more information about the path than the exact one.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = binary_entropy(x) + x * binary_entropy(y) - binary_entropy(x * y)
    return float(out) if np.ndim(out) == 0 else out


def malliavin_interval_terms(
    spec,
    grid: TimeGrid,
    rng: RngSpec | None = None,
    n_paths: int = 20000,
):
    """Per-interval premium integrals int_{t_k}^{t_{k+1}} E[D_t eps_k] dt.

    Increment-sign chains (including their noisy versions) are analytic:
    E[D_t eps_k] = 1/sqrt(2 pi dk) throughout the interval.  Other variants
    average their Phi'-numerator along simulated driver paths; the returned
    standard errors are zero in the analytic case.
    """
    n = grid.n_intervals
    base = spec.base if isinstance(spec, Noisy) else spec
    noise = np.array([spec.p_for(k, grid) for k in range(n)]) if isinstance(spec, Noisy) else np.ones(n)

    if isinstance(base, IncrementSign):
        dk = np.diff(grid.jump_times)
        return noise * np.sqrt(dk / (2.0 * np.pi)), np.zeros(n)
    if isinstance(base, JointIncrementSign):
        raise ValueError("the premium integral is implemented for single-driver chains")

    if rng is None:
        rng = RngSpec(0x0DD5)
    m = grid.substeps
    dt = grid.fine_dt
    sums = np.empty((n_paths, n))
    rows = max(32, min(n_paths, int(_BLOCK_ELEMENTS // max(grid.n_fine, 1))))
    start = 0
    while start < n_paths:
        p = min(rows, n_paths - start)
        bundle = sample_paths(grid, rng.shifted(start), p)
        for k in range(n):
            pieces = interval_state_pieces(spec, bundle, grid, k)
            _, num = interval_p1_num(spec, pieces, grid, k)
            sums[start : start + p, k] = (num * dt[grid.interval_slice(k)]).sum(axis=1)
        start += p
    means = sums.mean(axis=0)
    errs = sums.std(axis=0, ddof=1) / math.sqrt(n_paths)
    return means, errs


def malliavin_term(spec, grid: TimeGrid, rng: RngSpec | None = None, n_paths: int = 20000):
    """Total premium integral with its Monte Carlo standard error."""
    terms, errs = malliavin_interval_terms(spec, grid, rng=rng, n_paths=n_paths)
    return float(terms.sum()), float(np.sqrt((errs**2).sum()))


@dataclass
class IntervalBreakdown:
    k: int
    t_lo: float
    t_hi: float
    prob_one: float
    entropy: float
    malliavin: float
    malliavin_stderr: float
    value: float


@dataclass
class ClosedFormValue:
    """Value of information with its entropy/premium split per interval."""

    value: float
    entropy_term: float
    malliavin_term: float
    malliavin_stderr: float
    per_interval: list[IntervalBreakdown] = field(default_factory=list)


def closed_form_breakdown(
    spec,
    coeffs: MarketCoefficients,
    grid: TimeGrid,
    rng: RngSpec | None = None,
    n_paths: int = 20000,
) -> ClosedFormValue:
    """Entropy + premium decomposition of V_G - V_F for a complete-market chain."""
    if isinstance(spec, JointIncrementSign):
        raise ValueError(
            "the value-of-information formula is proved for the complete market only"
        )
    if isinstance(spec, Noisy):
        raise ValueError(
            "noisy chains price through the noisy value decomposition, not the exact-chain formula"
        )
    dm = coeffs.M1 - coeffs.M0
    terms, errs = malliavin_interval_terms(spec, grid, rng=rng, n_paths=n_paths)
    rows = []
    for k in range(grid.n_intervals):
        p1 = unconditional_prob(spec, 1, k, grid)
        ent = binary_entropy(p1)
        rows.append(
            IntervalBreakdown(
                k=k,
                t_lo=float(grid.jump_times[k]),
                t_hi=float(grid.jump_times[k + 1]),
                prob_one=p1,
                entropy=float(ent),
                malliavin=float(terms[k]),
                malliavin_stderr=float(errs[k]),
                value=float(ent + dm * terms[k]),
            )
        )
    ent_total = float(sum(r.entropy for r in rows))
    mall_total = float(terms.sum())
    return ClosedFormValue(
        value=ent_total + dm * mall_total,
        entropy_term=ent_total,
        malliavin_term=mall_total,
        malliavin_stderr=float(np.sqrt((errs**2).sum())),
        per_interval=rows,
    )


def value_of_information_closed(
    spec,
    coeffs: MarketCoefficients,
    grid: TimeGrid,
    rng: RngSpec | None = None,
    n_paths: int = 20000,
) -> float:
    """V_G - V_F: entropy term plus (M1 - M0) times the premium integral."""
    return closed_form_breakdown(spec, coeffs, grid, rng=rng, n_paths=n_paths).value


@dataclass
class NoisyValue:
    """The two legs of the noisy-information price and their shared pieces."""

    v_gtilde_minus_vf: float
    v_g_minus_gtilde: float
    v_g_minus_vf: float
    entropy_gtilde_vf: float
    entropy_g_gtilde: float
    malliavin_gtilde_vf: float
    malliavin_g_gtilde: float

    def __iter__(self):
        return iter((self.v_gtilde_minus_vf, self.v_g_minus_gtilde))


def noisy_value_decomposition(
    spec: Noisy,
    coeffs: MarketCoefficients,
    grid: TimeGrid,
    rng: RngSpec | None = None,
    n_paths: int = 20000,
) -> NoisyValue:
    """Split the information price between the noisy and exact enlargements.

    Both legs are built from shared per-interval pieces, so the triangle
    (V_G - V_G~) + (V_G~ - V_F) = V_G - V_F closes exactly.
    """
    if not isinstance(spec, Noisy):
        raise ValueError("expected a noisy chain spec")
    n = grid.n_intervals
    base_terms, _ = malliavin_interval_terms(spec.base, grid, rng=rng, n_paths=n_paths)
    dm = coeffs.M1 - coeffs.M0

    ent_noisy = 0.0
    ent_exact = 0.0
    mall_noisy = 0.0
    mall_exact = 0.0
    for k in range(n):
        x = unconditional_prob(spec.base, 1, k, grid)
        pk = spec.p_for(k, grid)
        ent_noisy += binary_entropy(x * pk) - x * binary_entropy(pk)
        ent_exact += binary_entropy(x)
        mall_noisy += pk * base_terms[k]
        mall_exact += base_terms[k]

    v_gt_vf = ent_noisy + dm * mall_noisy
    v_g_vf = ent_exact + dm * mall_exact
    return NoisyValue(
        v_gtilde_minus_vf=float(v_gt_vf),
        v_g_minus_gtilde=float(v_g_vf - v_gt_vf),
        v_g_minus_vf=float(v_g_vf),
        entropy_gtilde_vf=float(ent_noisy),
        entropy_g_gtilde=float(ent_exact - ent_noisy),
        malliavin_gtilde_vf=float(mall_noisy),
        malliavin_g_gtilde=float(mall_exact - mall_noisy),
    )


@dataclass
class StrategyEstimate:
    name: str
    mc_mean: float
    mc_stderr: float


@dataclass
class ValuationReport:
    """Monte Carlo means against the closed forms, with all error bars."""

    per_strategy: list[StrategyEstimate]
    vf: float
    entropy_term: float | None
    malliavin_term: float | None
    closed_form_vg_minus_vf: float | None
    per_interval_breakdown: list[IntervalBreakdown]
    n_paths: int
    seed: int
    saturated_paths: int
    noisy: NoisyValue | None = None
