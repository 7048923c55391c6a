"""Anticipative binary regime chains and their conditional laws.

Each chain eps_k is a {0,1}-valued functional of the driver path over
[t_k, t_{k+1}], so it anticipates the driver's natural filtration.  For every
variant this module evaluates, in closed form,

* the conditional probability  P(eps_k = e | state at t),  t in [t_k, t_{k+1}),
* the Malliavin numerator  E[D_t eps_k | state]  (the dW-coefficient of the
  conditional probability process), and
* the chain's unconditional law,

and realizes the chain exactly on discrete paths.  The ratio of conditional
to unconditional probability is the regime's density process, a martingale
in the driver filtration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import PathBundle, RngSpec, TimeGrid, norm_pdf


@dataclass(frozen=True)
class IncrementSign:
    """eps_k = 1 iff the driver increases over [t_k, t_{k+1}]."""

    needs_second_driver = False
    complete_market = True


@dataclass(frozen=True)
class DrawdownBarrier:
    """eps_k = 1 iff the drawdown max(W) - W exceeds c at t_{k+1}."""

    c: float
    needs_second_driver = False
    complete_market = True

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"drawdown barrier c must be positive, got {self.c}")


@dataclass(frozen=True)
class PathwiseBarrier:
    """eps_k = 1 iff the driver stays at or below W_{t_k} + b_offset on [t_k, t_{k+1}].

    The per-interval barrier B_k = W_{t_k} + b_offset is known at t_k, which
    makes the chain values independent across intervals and the per-interval
    law stationary.
    """

    b_offset: float
    needs_second_driver = False
    complete_market = True

    def __post_init__(self):
        if not self.b_offset > 0:
            raise ValueError(f"barrier offset must be positive, got {self.b_offset}")


@dataclass(frozen=True)
class Noisy:
    """eps~_k = L_k * eps_k with independent Bernoulli(p_k) noise bits L_k."""

    base: object
    p: tuple

    needs_second_driver = False
    complete_market = True

    def __post_init__(self):
        if isinstance(self.base, Noisy):
            raise ValueError("noisy chains cannot be nested")
        if isinstance(self.base, JointIncrementSign):
            raise ValueError("noisy modulation is defined for single-driver chains")
        object.__setattr__(self, "p", tuple(float(v) for v in np.atleast_1d(self.p)))
        for v in self.p:
            if not (0.0 < v < 1.0):
                raise ValueError(f"noise probabilities must lie in (0, 1), got {v}")

    def p_for(self, k: int, grid: TimeGrid) -> float:
        if len(self.p) != grid.n_intervals:
            raise ValueError(
                f"noise vector has length {len(self.p)}, grid has {grid.n_intervals} intervals"
            )
        return self.p[k]


@dataclass(frozen=True)
class JointIncrementSign:
    """eps_k = 1 iff both independent drivers increase over [t_k, t_{k+1}].

    Requires the second driver; the market becomes incomplete.
    """

    needs_second_driver = True
    complete_market = False


RegimeSpec = IncrementSign | DrawdownBarrier | PathwiseBarrier | Noisy | JointIncrementSign


@dataclass
class ConditionalState:
    """Driver statistics at a fine time t inside interval k.

    Running maxima are measured on the discrete sub-grid; ``run_max_from_0``
    is the maximum since time 0 (drawdown chain), ``run_max_from_tk`` since
    the interval start (pathwise chain).  Fields may be scalars or aligned
    arrays.
    """

    k: int
    t: float
    w_t: np.ndarray
    w_tk: np.ndarray
    run_max_from_0: np.ndarray | None = None
    run_max_from_tk: np.ndarray | None = None
    b_t: np.ndarray | None = None
    b_tk: np.ndarray | None = None


def _remaining(state: ConditionalState, grid: TimeGrid) -> float:
    k = state.k
    if not (0 <= k < grid.n_intervals):
        raise ValueError(f"interval index {k} out of range")
    t_next = grid.jump_times[k + 1]
    if not (grid.jump_times[k] <= state.t < t_next):
        raise ValueError(
            f"state time {state.t} outside [{grid.jump_times[k]}, {t_next}) for interval {k}"
        )
    return float(t_next - state.t)


def _require(state: ConditionalState, name: str, variant: str):
    value = getattr(state, name)
    if value is None:
        raise ValueError(f"{variant} state requires field '{name}'")
    return np.asarray(value, dtype=np.float64)


def cond_prob_one_and_numerator(spec, state: ConditionalState, grid: TimeGrid):
    """P(eps_k = 1 | state) and the Malliavin numerator E[D_t eps_k | state].

    The numerator is the dW-coefficient of the conditional-probability
    martingale, so d p_t = num dW_t.
    """
    drem = _remaining(state, grid)
    sq = np.sqrt(drem)
    w_t = np.asarray(state.w_t, dtype=np.float64)

    if isinstance(spec, IncrementSign):
        w_tk = _require(state, "w_tk", "increment-sign")
        a = (w_tk - w_t) / sq
        p1 = ndtr(-a)
        num = norm_pdf(a) / sq
        return p1, num

    if isinstance(spec, DrawdownBarrier):
        m0 = _require(state, "run_max_from_0", "drawdown")
        drawdown = m0 - w_t
        if np.any(drawdown < -1e-12):
            raise ValueError("running maximum below current level")
        zp = (spec.c + drawdown) / sq
        zm = (spec.c - drawdown) / sq
        p1 = ndtr(-zm) + ndtr(-zp)
        num = (norm_pdf(zp) - norm_pdf(zm)) / sq
        return p1, num

    if isinstance(spec, PathwiseBarrier):
        w_tk = _require(state, "w_tk", "pathwise")
        mk = _require(state, "run_max_from_tk", "pathwise")
        barrier = w_tk + spec.b_offset
        active = mk <= barrier
        z = (barrier - w_t) / sq
        # P(max of remaining path <= barrier | W_t) = 2*Phi(z) - 1 on the
        # active set; the chain is absorbed at 0 once the barrier is hit.
        p1 = np.where(active, 2.0 * ndtr(z) - 1.0, 0.0)
        num = np.where(active, -2.0 * norm_pdf(z) / sq, 0.0)
        return p1, num

    if isinstance(spec, Noisy):
        pk = spec.p_for(state.k, grid)
        p1, num = cond_prob_one_and_numerator(spec.base, state, grid)
        return pk * p1, pk * num

    if isinstance(spec, JointIncrementSign):
        w_tk = _require(state, "w_tk", "joint increment-sign")
        b_t = _require(state, "b_t", "joint increment-sign")
        b_tk = _require(state, "b_tk", "joint increment-sign")
        aw = (w_tk - w_t) / sq
        ab = (b_tk - b_t) / sq
        p1 = ndtr(-aw) * ndtr(-ab)
        num = ndtr(-ab) * norm_pdf(aw) / sq
        return p1, num

    raise TypeError(f"unsupported regime spec {type(spec).__name__}")


def second_driver_numerator(spec, state: ConditionalState, grid: TimeGrid):
    """E[D^B_t eps_k | state]: the dB-coefficient of the conditional probability."""
    if not isinstance(spec, JointIncrementSign):
        raise ValueError("second-driver numerator only defined for the joint chain")
    drem = _remaining(state, grid)
    sq = np.sqrt(drem)
    w_tk = _require(state, "w_tk", "joint increment-sign")
    b_t = _require(state, "b_t", "joint increment-sign")
    b_tk = _require(state, "b_tk", "joint increment-sign")
    aw = (w_tk - np.asarray(state.w_t, dtype=np.float64)) / sq
    ab = (b_tk - b_t) / sq
    return ndtr(-aw) * norm_pdf(ab) / sq


def conditional_prob(spec, e: int, state: ConditionalState, grid: TimeGrid):
    """P(eps_k = e | state), exact (absorbed states give exactly 0 or 1)."""
    if e not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {e}")
    p1, _ = cond_prob_one_and_numerator(spec, state, grid)
    p1 = np.clip(p1, 0.0, 1.0)
    out = p1 if e == 1 else 1.0 - p1
    return float(out) if np.ndim(out) == 0 else out


def unconditional_prob(spec, e: int, k: int, grid: TimeGrid):
    """P(eps_k = e), closed form per variant."""
    if e not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {e}")
    if not (0 <= k < grid.n_intervals):
        raise ValueError(f"interval index {k} out of range [0, {grid.n_intervals})")

    if isinstance(spec, IncrementSign):
        p1 = 0.5
    elif isinstance(spec, DrawdownBarrier):
        # M_t - W_t has the law of |N(0, t)| at the revelation time t_{k+1}
        p1 = 2.0 * ndtr(-spec.c / np.sqrt(grid.jump_times[k + 1]))
    elif isinstance(spec, PathwiseBarrier):
        dk = grid.interval_length(k)
        p1 = 1.0 - 2.0 * ndtr(-spec.b_offset / np.sqrt(dk))
    elif isinstance(spec, Noisy):
        p1 = spec.p_for(k, grid) * unconditional_prob(spec.base, 1, k, grid)
    elif isinstance(spec, JointIncrementSign):
        p1 = 0.25
    else:
        raise TypeError(f"unsupported regime spec {type(spec).__name__}")
    return float(p1) if e == 1 else float(1.0 - p1)


def jacod_density(spec, e: int, state: ConditionalState, grid: TimeGrid):
    """Conditional-over-unconditional probability of outcome e at the state.

    For the noisy chain with e = 1 the noise probability cancels identically,
    so the computation is delegated to the base chain and the two densities
    agree bit for bit.
    """
    if isinstance(spec, Noisy) and e == 1:
        return jacod_density(spec.base, 1, state, grid)
    denom = unconditional_prob(spec, e, k=state.k, grid=grid)
    if denom <= 0.0:
        raise ValueError(
            f"unconditional probability of outcome {e} in interval {state.k} is zero; "
            "the density process is undefined"
        )
    return conditional_prob(spec, e, state, grid) / denom


def realize_chain(
    spec,
    bundle: PathBundle,
    grid: TimeGrid,
    aux_rng: RngSpec | None = None,
) -> np.ndarray:
    """Realize eps on the discrete paths, one row per path, one column per interval.

    Maxima are taken over sub-grid values (closed right endpoint); the noisy
    chain draws its Bernoulli bits from a dedicated stream per path,
    independent of the drivers.
    """
    m = grid.substeps
    n = grid.n_intervals
    w = bundle.w
    jumps = grid.jump_indices

    if isinstance(spec, IncrementSign):
        return (w[:, jumps[1:]] > w[:, jumps[:-1]]).astype(np.int8)

    if isinstance(spec, DrawdownBarrier):
        cummax = np.maximum.accumulate(w, axis=1)
        at_jumps = jumps[1:]
        return ((cummax[:, at_jumps] - w[:, at_jumps]) > spec.c).astype(np.int8)

    if isinstance(spec, PathwiseBarrier):
        eps = np.empty((w.shape[0], n), dtype=np.int8)
        for k in range(n):
            seg_max = w[:, k * m : (k + 1) * m + 1].max(axis=1)
            eps[:, k] = seg_max <= w[:, k * m] + spec.b_offset
        return eps

    if isinstance(spec, Noisy):
        base_eps = realize_chain(spec.base, bundle, grid)
        if aux_rng is None:
            aux_rng = bundle.rng.aux()
        p = np.array([spec.p_for(k, grid) for k in range(n)])
        noise = np.empty_like(base_eps)
        for r in range(w.shape[0]):
            u = aux_rng.generator(offset=r).random(n)
            noise[r] = u < p
        return (noise & base_eps).astype(np.int8)

    if isinstance(spec, JointIncrementSign):
        if bundle.b is None:
            raise ValueError("joint increment-sign chain requires the second driver path")
        b = bundle.b
        up_w = w[:, jumps[1:]] > w[:, jumps[:-1]]
        up_b = b[:, jumps[1:]] > b[:, jumps[:-1]]
        return (up_w & up_b).astype(np.int8)

    raise TypeError(f"unsupported regime spec {type(spec).__name__}")


def state_at(
    spec,
    bundle: PathBundle,
    grid: TimeGrid,
    j: int,
) -> ConditionalState:
    """Build the conditional state of every path at fine index j."""
    if not (0 <= j < grid.n_fine - 1):
        raise ValueError(f"fine index {j} outside the open horizon")
    k = int(j // grid.substeps)
    jk = k * grid.substeps
    w = bundle.w
    state = ConditionalState(
        k=k,
        t=float(grid.fine_times[j]),
        w_t=w[:, j],
        w_tk=w[:, jk],
    )
    base = spec.base if isinstance(spec, Noisy) else spec
    if isinstance(base, DrawdownBarrier):
        state.run_max_from_0 = w[:, : j + 1].max(axis=1)
    if isinstance(base, PathwiseBarrier):
        state.run_max_from_tk = w[:, jk : j + 1].max(axis=1)
    if isinstance(base, JointIncrementSign):
        if bundle.b is None:
            raise ValueError("joint chain state requires the second driver path")
        state.b_t = bundle.b[:, j]
        state.b_tk = bundle.b[:, jk]
    return state
