"""Closed-form information drifts and the enlarged-filtration decomposition.

For a binary chain with conditional probability p_t = P(eps_k = 1 | . ) and
Malliavin numerator q_t = E[D_t eps_k | . ], the drift that turns the driver
into a Brownian motion under the enlarged filtration is

    alpha_t = q_t * (eps_k - p_t) / (p_t * (1 - p_t)),

i.e. alpha^1 = q/p on {eps=1} and alpha^0 = -q/(1-p) on {eps=0}.  Each chain
variant also has its own closed form (the per-example lemmas); both code
paths are kept and cross-checked so a sign slip in either one is caught.

Probabilities entering drift denominators are clamped to [delta, 1-delta]
with delta = 1e-12, and |alpha| is capped at 1e6 with a per-path saturation
flag: a handful of saturated paths must never silently poison a batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import PathBundle, TimeGrid, norm_pdf
from .regimes import (
    ConditionalState,
    DrawdownBarrier,
    IncrementSign,
    JointIncrementSign,
    Noisy,
    PathwiseBarrier,
    cond_prob_one_and_numerator,
    second_driver_numerator,
    _remaining,
    _require,
)

CLAMP_DELTA = 1e-12
ALPHA_CAP = 1e6


def clamp_prob(p):
    """Clamp a probability into [delta, 1-delta] before it enters a denominator."""
    return np.clip(p, CLAMP_DELTA, 1.0 - CLAMP_DELTA)


@dataclass
class DriftEvaluation:
    """Drift values at one state: per possible outcome and for the realized one."""

    alpha_e0: np.ndarray
    alpha_e1: np.ndarray
    alpha_realized: np.ndarray
    gamma_e0: np.ndarray | None = None
    gamma_e1: np.ndarray | None = None
    gamma_realized: np.ndarray | None = None


def _cap(val, flags=None):
    if flags is not None:
        over = np.abs(val) > ALPHA_CAP
        if np.any(over):
            flags += over.astype(np.int64).reshape(flags.shape[0], -1).sum(axis=1)
    return np.clip(val, -ALPHA_CAP, ALPHA_CAP)


def alpha(spec, e: int, state: ConditionalState, grid: TimeGrid, flags=None):
    """Information drift of the first driver for outcome ``e``, per the lemma forms."""
    if e not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {e}")
    drem = _remaining(state, grid)
    sq = np.sqrt(drem)
    w_t = np.asarray(state.w_t, dtype=np.float64)
    sign = 1.0 if e == 1 else -1.0

    if isinstance(spec, IncrementSign):
        w_tk = _require(state, "w_tk", "increment-sign")
        a = (w_tk - w_t) / sq
        p1 = ndtr(-a)
        pe = p1 if e == 1 else 1.0 - p1
        val = sign * (norm_pdf(a) / sq) / clamp_prob(pe)
        return _cap(val, flags)

    if isinstance(spec, DrawdownBarrier):
        m0 = _require(state, "run_max_from_0", "drawdown")
        drawdown = m0 - w_t
        zp = (spec.c + drawdown) / sq
        zm = (spec.c - drawdown) / sq
        p1 = ndtr(-zm) + ndtr(-zp)
        pe = p1 if e == 1 else 1.0 - p1
        val = sign * ((norm_pdf(zp) - norm_pdf(zm)) / sq) / clamp_prob(pe)
        return _cap(val, flags)

    if isinstance(spec, PathwiseBarrier):
        w_tk = _require(state, "w_tk", "pathwise")
        mk = _require(state, "run_max_from_tk", "pathwise")
        barrier = w_tk + spec.b_offset
        active = mk <= barrier
        z = (barrier - w_t) / sq
        density_at_barrier = 2.0 * norm_pdf(z) / sq
        p1 = np.clip(2.0 * ndtr(z) - 1.0, 0.0, 1.0)
        pe = p1 if e == 1 else 1.0 - p1
        # lemma form -f(B_k)(e - p1)/(p1 p0), which collapses to -sign f(B_k)/pe;
        # exactly zero once the barrier has been hit
        val = np.where(active, -sign * density_at_barrier / clamp_prob(pe), 0.0)
        return _cap(val, flags)

    if isinstance(spec, Noisy):
        if e == 1:
            # identical information content: alpha~^1 = alpha^1 of the base chain
            return alpha(spec.base, 1, state, grid, flags)
        pk = spec.p_for(state.k, grid)
        p1_base, num_base = cond_prob_one_and_numerator(spec.base, state, grid)
        val = -pk * num_base / clamp_prob(1.0 - pk * p1_base)
        return _cap(val, flags)

    if isinstance(spec, JointIncrementSign):
        w_tk = _require(state, "w_tk", "joint increment-sign")
        b_t = _require(state, "b_t", "joint increment-sign")
        b_tk = _require(state, "b_tk", "joint increment-sign")
        aw = (w_tk - w_t) / sq
        ab = (b_tk - b_t) / sq
        p1 = ndtr(-aw) * ndtr(-ab)
        pe = p1 if e == 1 else 1.0 - p1
        val = sign * ndtr(-ab) * (norm_pdf(aw) / sq) / clamp_prob(pe)
        return _cap(val, flags)

    raise TypeError(f"unsupported regime spec {type(spec).__name__}")


def gamma(spec, e: int, state: ConditionalState, grid: TimeGrid, flags=None):
    """Second-driver information drift; the joint chain with drivers swapped."""
    if not isinstance(spec, JointIncrementSign):
        raise ValueError("gamma is only defined for the two-driver chain")
    if e not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {e}")
    drem = _remaining(state, grid)
    sq = np.sqrt(drem)
    w_t = np.asarray(state.w_t, dtype=np.float64)
    w_tk = _require(state, "w_tk", "joint increment-sign")
    b_t = _require(state, "b_t", "joint increment-sign")
    b_tk = _require(state, "b_tk", "joint increment-sign")
    sign = 1.0 if e == 1 else -1.0
    aw = (w_tk - w_t) / sq
    ab = (b_tk - b_t) / sq
    p1 = ndtr(-aw) * ndtr(-ab)
    pe = p1 if e == 1 else 1.0 - p1
    val = sign * ndtr(-aw) * (norm_pdf(ab) / sq) / clamp_prob(pe)
    return _cap(val, flags)


def alpha_binary_general(cond_prob_1, malliavin_num, realized_e: int):
    """General binary drift  q (e - p) / (p (1 - p)); errors on degenerate variance."""
    if realized_e not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {realized_e}")
    p = np.asarray(cond_prob_1, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("conditional variance p(1-p) is degenerate")
    q = np.asarray(malliavin_num, dtype=np.float64)
    val = q * (float(realized_e) - p) / (p * (1.0 - p))
    return float(val) if np.ndim(val) == 0 else val


def theta(coeffs, realized_e, alpha_realized):
    """Market price of risk: regime risk premium plus the information drift."""
    e = np.asarray(realized_e)
    risk_premium = np.where(
        e == 1,
        (coeffs.eta1 - coeffs.r1) / coeffs.xi1,
        (coeffs.eta0 - coeffs.r0) / coeffs.xi0,
    )
    out = risk_premium + np.asarray(alpha_realized, dtype=np.float64)
    return float(out) if np.ndim(out) == 0 else out


def evaluate_drift(spec, state: ConditionalState, realized_e, grid: TimeGrid) -> DriftEvaluation:
    """Drift per outcome and for the realized outcome at one state."""
    a0 = alpha(spec, 0, state, grid)
    a1 = alpha(spec, 1, state, grid)
    e = np.asarray(realized_e)
    out = DriftEvaluation(
        alpha_e0=a0,
        alpha_e1=a1,
        alpha_realized=np.where(e == 1, a1, a0),
    )
    if isinstance(spec, JointIncrementSign):
        g0 = gamma(spec, 0, state, grid)
        g1 = gamma(spec, 1, state, grid)
        out.gamma_e0 = g0
        out.gamma_e1 = g1
        out.gamma_realized = np.where(e == 1, g1, g0)
    return out


def interval_state_pieces(spec, bundle: PathBundle, grid: TimeGrid, k: int):
    """Vectorized per-interval state pieces at all left endpoints of interval k."""
    m = grid.substeps
    jk = k * m
    sl = slice(jk, jk + m)
    w = bundle.w
    pieces = {
        "w_t": w[:, sl],
        "w_tk": w[:, jk : jk + 1],
        "drem": grid.jump_times[k + 1] - grid.fine_times[sl],
    }
    base = spec.base if isinstance(spec, Noisy) else spec
    if isinstance(base, DrawdownBarrier):
        pieces["run_max_from_0"] = np.maximum.accumulate(w, axis=1)[:, sl]
    if isinstance(base, PathwiseBarrier):
        pieces["run_max_from_tk"] = np.maximum.accumulate(w[:, jk : jk + m], axis=1)
    if isinstance(base, JointIncrementSign):
        pieces["b_t"] = bundle.b[:, sl]
        pieces["b_tk"] = bundle.b[:, jk : jk + 1]
    return pieces


def interval_p1_num(spec, pieces, grid: TimeGrid, k: int, want_second=False):
    """Conditional probability and Malliavin numerator(s) on an interval block.

    Returns (p1, num) or (p1, num, num_b) evaluated at every left endpoint of
    the block described by ``pieces``.
    """
    sq = np.sqrt(pieces["drem"])
    w_t = pieces["w_t"]
    base = spec.base if isinstance(spec, Noisy) else spec

    num_b = None
    if isinstance(base, IncrementSign):
        a = (pieces["w_tk"] - w_t) / sq
        p1 = ndtr(-a)
        num = norm_pdf(a) / sq
    elif isinstance(base, DrawdownBarrier):
        drawdown = pieces["run_max_from_0"] - w_t
        zp = (base.c + drawdown) / sq
        zm = (base.c - drawdown) / sq
        p1 = ndtr(-zm) + ndtr(-zp)
        num = (norm_pdf(zp) - norm_pdf(zm)) / sq
    elif isinstance(base, PathwiseBarrier):
        barrier = pieces["w_tk"] + base.b_offset
        active = pieces["run_max_from_tk"] <= barrier
        z = (barrier - w_t) / sq
        p1 = np.where(active, np.clip(2.0 * ndtr(z) - 1.0, 0.0, 1.0), 0.0)
        num = np.where(active, -2.0 * norm_pdf(z) / sq, 0.0)
    elif isinstance(base, JointIncrementSign):
        aw = (pieces["w_tk"] - w_t) / sq
        ab = (pieces["b_tk"] - pieces["b_t"]) / sq
        p1 = ndtr(-aw) * ndtr(-ab)
        num = ndtr(-ab) * norm_pdf(aw) / sq
        if want_second:
            num_b = ndtr(-aw) * norm_pdf(ab) / sq
    else:
        raise TypeError(f"unsupported regime spec {type(base).__name__}")

    if isinstance(spec, Noisy):
        pk = spec.p_for(k, grid)
        p1 = pk * p1
        num = pk * num
    if want_second:
        return p1, num, num_b
    return p1, num


def _realized_drift_interval(spec, pieces, grid, k, eps_k, want_gamma=False):
    """Realized alpha (and gamma) on an interval block, lemma closed forms."""
    e = eps_k[:, None].astype(np.float64)
    sign = 2.0 * e - 1.0
    p1, num, num_b = interval_p1_num(spec, pieces, grid, k, want_second=True) if want_gamma else (
        *interval_p1_num(spec, pieces, grid, k),
        None,
    )
    pe = np.where(e == 1.0, p1, 1.0 - p1)
    alpha_real = sign * num / clamp_prob(pe)
    gamma_real = None if num_b is None else sign * num_b / clamp_prob(pe)
    return alpha_real, gamma_real, p1, num


def decompose(spec, bundle: PathBundle, grid: TimeGrid, verify: bool = False) -> PathBundle:
    """Fill alpha and w_hat (and gamma, b_hat for the two-driver chain) in place.

    The compensator is integrated with the left-endpoint rule, so the
    revelation instant t_{k+1} is never an evaluation point.  With
    ``verify=True`` the general binary formula is recomputed alongside the
    closed forms and both the agreement and the martingale-projection
    identity p*alpha^1 + (1-p)*alpha^0 = 0 are asserted to 1e-9.
    """
    if bundle.eps is None:
        raise ValueError("realize the chain before decomposing")
    w = bundle.w
    n_paths, n_fine = w.shape
    m = grid.substeps
    want_gamma = isinstance(spec, JointIncrementSign)

    alpha_arr = np.zeros((n_paths, n_fine))
    gamma_arr = np.zeros((n_paths, n_fine)) if want_gamma else None
    flags = np.zeros(n_paths, dtype=np.int64)

    for k in range(grid.n_intervals):
        sl = slice(k * m, (k + 1) * m)
        pieces = interval_state_pieces(spec, bundle, grid, k)
        a_real, g_real, p1, num = _realized_drift_interval(
            spec, pieces, grid, k, bundle.eps[:, k], want_gamma=want_gamma
        )
        flags += (np.abs(a_real) > ALPHA_CAP).sum(axis=1)
        alpha_arr[:, sl] = np.clip(a_real, -ALPHA_CAP, ALPHA_CAP)
        if want_gamma:
            flags += (np.abs(g_real) > ALPHA_CAP).sum(axis=1)
            gamma_arr[:, sl] = np.clip(g_real, -ALPHA_CAP, ALPHA_CAP)

        if verify:
            e = bundle.eps[:, k : k + 1].astype(np.float64)
            p_cl = clamp_prob(p1)
            general = num * (e - p_cl) / (p_cl * (1.0 - p_cl))
            agree = np.max(np.abs(np.clip(general, -ALPHA_CAP, ALPHA_CAP) - alpha_arr[:, sl]))
            if agree > 1e-9:
                raise AssertionError(
                    f"general binary drift disagrees with the closed form by {agree:.3e}"
                )
            a1 = num / clamp_prob(p1)
            a0 = -num / clamp_prob(1.0 - p1)
            proj = np.max(np.abs(p1 * a1 + (1.0 - p1) * a0))
            if proj > 1e-9:
                raise AssertionError(f"drift projection identity violated by {proj:.3e}")

    dt = grid.fine_dt
    bundle.alpha = alpha_arr
    bundle.w_hat = np.empty_like(w)
    bundle.w_hat[:, 0] = 0.0
    bundle.w_hat[:, 1:] = w[:, 1:] - np.cumsum(alpha_arr[:, :-1] * dt, axis=1)
    if want_gamma:
        bundle.gamma = gamma_arr
        bundle.b_hat = np.empty_like(bundle.b)
        bundle.b_hat[:, 0] = 0.0
        bundle.b_hat[:, 1:] = bundle.b[:, 1:] - np.cumsum(gamma_arr[:, :-1] * dt, axis=1)
    bundle.flags = flags
    return bundle
