"""Independent reference computations for tests and acceptance criteria.

Nothing here calls the closed-form probability or drift code: every
reference is rebuilt from driver-path simulation and elementary Gaussian
identities.  Conditional laws are estimated by brute-force continuation of
the drivers from a given state, with running maxima drawn exactly from the
Brownian-bridge maximum law (no discretization bias), and drifts are
recovered from probability bumps via the relation d p / p = alpha dW.

Oracle streams are salted away from production seeds so estimate and
reference noise never couple.
"""

from __future__ import annotations

import math

import numpy as np

from .core import RngSpec
from .regimes import (
    ConditionalState,
    DrawdownBarrier,
    IncrementSign,
    JointIncrementSign,
    Noisy,
    PathwiseBarrier,
)

ORACLE_SEED_SALT = 0x6F7261636C65  # disjoint stream family for references


def oracle_rng(rng: RngSpec) -> RngSpec:
    return RngSpec((rng.seed ^ ORACLE_SEED_SALT) & 0xFFFFFFFFFFFFFFFF, rng.stream_id)


def gaussian_phi_moment(sigma: float) -> float:
    """E[Phi'(sigma Z)] = 1 / sqrt(2 pi (1 + sigma^2)) for Z standard normal."""
    if not np.isfinite(sigma) or sigma < 0:
        raise ValueError("sigma must be finite and non-negative")
    return 1.0 / math.sqrt(2.0 * math.pi * (1.0 + sigma * sigma))


def gaussian_phi_moment_quadrature(sigma: float, n_nodes: int = 4001) -> float:
    """The same moment by plain quadrature, cross-checking the closed form."""
    z = np.linspace(-12.0, 12.0, n_nodes)
    dens = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    vals = np.exp(-0.5 * (sigma * z) ** 2) / math.sqrt(2.0 * math.pi)
    return float(np.trapezoid(vals * dens, z))


def bridge_max_given_endpoint(v, drem: float, u):
    """Exact running maximum of a Brownian path over [0, drem] given endpoint v.

    Inverts P(max <= m | end = v) = 1 - exp(-2 m (m - v) / drem) at the
    uniform draw u, so the maximum carries no time-stepping bias.
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return 0.5 * (v + np.sqrt(v * v - 2.0 * drem * np.log(u)))


def _continuation_indicator(spec, state: ConditionalState, drem: float, gen, n: int):
    """Simulate eps_k = 1 indicators for n exact continuations from the state."""
    if isinstance(spec, IncrementSign):
        v = math.sqrt(drem) * gen.standard_normal(n)
        return (np.asarray(state.w_t) + v) > np.asarray(state.w_tk)

    if isinstance(spec, DrawdownBarrier):
        kappa = np.asarray(state.run_max_from_0) - np.asarray(state.w_t)
        v = math.sqrt(drem) * gen.standard_normal(n)
        r = bridge_max_given_endpoint(v, drem, gen.random(n))
        return (np.maximum(kappa, r) - v) > spec.c

    if isinstance(spec, PathwiseBarrier):
        barrier = np.asarray(state.w_tk) + spec.b_offset
        if np.any(np.asarray(state.run_max_from_tk) > barrier):
            return np.zeros(n, dtype=bool)
        v = math.sqrt(drem) * gen.standard_normal(n)
        r = bridge_max_given_endpoint(v, drem, gen.random(n))
        return (np.asarray(state.w_t) + r) <= barrier

    if isinstance(spec, Noisy):
        base = _continuation_indicator(spec.base, state, drem, gen, n)
        noise = gen.random(n) < spec.p[state.k]
        return base & noise

    if isinstance(spec, JointIncrementSign):
        vw = math.sqrt(drem) * gen.standard_normal(n)
        vb = math.sqrt(drem) * gen.standard_normal(n)
        up_w = (np.asarray(state.w_t) + vw) > np.asarray(state.w_tk)
        up_b = (np.asarray(state.b_t) + vb) > np.asarray(state.b_tk)
        return up_w & up_b

    raise TypeError(f"unsupported regime spec {type(spec).__name__}")


def nested_mc_conditional(spec, state: ConditionalState, e: int, inner_n: int, rng: RngSpec, grid=None):
    """Brute-force P(eps_k = e | state) with its exact binomial standard error.

    ``grid`` supplies the interval end; continuations are simulated over the
    remaining horizon with exact endpoint and maximum laws.
    """
    if inner_n < 1000:
        raise ValueError("inner sample size below 1000 gives useless error bars")
    if e not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {e}")
    if grid is None:
        raise ValueError("a time grid is required to know the interval end")
    drem = float(grid.jump_times[state.k + 1] - state.t)
    gen = oracle_rng(rng).generator()
    hit = _continuation_indicator(spec, state, drem, gen, inner_n)
    p_hat = float(np.mean(hit if e == 1 else ~hit))
    stderr = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / inner_n)
    return p_hat, stderr


def _bumped(state: ConditionalState, h: float, driver: str) -> ConditionalState:
    """State after an instantaneous driver move of h, maxima updated honestly."""
    w_t = np.asarray(state.w_t, dtype=np.float64)
    out = ConditionalState(
        k=state.k,
        t=state.t,
        w_t=w_t,
        w_tk=state.w_tk,
        run_max_from_0=state.run_max_from_0,
        run_max_from_tk=state.run_max_from_tk,
        b_t=state.b_t,
        b_tk=state.b_tk,
    )
    if driver == "w":
        out.w_t = w_t + h
        if state.run_max_from_0 is not None:
            out.run_max_from_0 = np.maximum(np.asarray(state.run_max_from_0), out.w_t)
        if state.run_max_from_tk is not None:
            out.run_max_from_tk = np.maximum(np.asarray(state.run_max_from_tk), out.w_t)
    elif driver == "b":
        out.b_t = np.asarray(state.b_t, dtype=np.float64) + h
    else:
        raise ValueError("driver must be 'w' or 'b'")
    return out


def regression_alpha(
    spec,
    e: int,
    states,
    fine_dt: float,
    n_paths: int,
    rng: RngSpec,
    grid=None,
    driver: str = "w",
    n_batches: int = 20,
):
    """Recover the information drift from probability responses to driver moves.

    The relation d p / p = alpha dW identifies alpha as the log-derivative of
    the conditional probability in the driver direction.  For each state the
    probability is re-estimated by brute force at W +- sqrt(fine_dt) with
    common random numbers, and the centered slope

        (ln p_hat(+) - ln p_hat(-)) / (2 sqrt(fine_dt))

    is the drift estimate; batch splitting gives its standard error.  States
    whose bumped probability degenerates are flagged and skipped.
    """
    if grid is None:
        raise ValueError("a time grid is required to know the interval end")
    if e not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {e}")
    h = math.sqrt(fine_dt)
    per_batch = max(500, n_paths // n_batches)
    results = []
    for idx, state in enumerate(states):
        drem = float(grid.jump_times[state.k + 1] - state.t)
        if not (0.0 < h < 0.5 * math.sqrt(drem)):
            raise ValueError("probe step must be small relative to the remaining horizon")
        up = _bumped(state, +h, driver)
        dn = _bumped(state, -h, driver)
        slopes = []
        for b in range(n_batches):
            gen_rng = RngSpec(oracle_rng(rng).seed, rng.stream_id + idx * n_batches + b)
            # common random numbers: same continuation draws for both bumps
            hits_up = _continuation_indicator(
                spec, up, drem, gen_rng.generator(), per_batch
            )
            hits_dn = _continuation_indicator(
                spec, dn, drem, gen_rng.generator(), per_batch
            )
            p_up = np.mean(hits_up if e == 1 else ~hits_up)
            p_dn = np.mean(hits_dn if e == 1 else ~hits_dn)
            if p_up <= 0.0 or p_dn <= 0.0:
                slopes = []
                break
            slopes.append((math.log(p_up) - math.log(p_dn)) / (2.0 * h))
        if not slopes:
            results.append((math.nan, math.nan, True))
            continue
        slopes = np.asarray(slopes)
        results.append(
            (float(slopes.mean()), float(slopes.std(ddof=1) / math.sqrt(len(slopes))), False)
        )
    return results


def drawdown_law_sampler(t: float, rng: RngSpec, n: int) -> np.ndarray:
    """Exact samples of the drawdown M_t - W_t, distributed as |N(0, t)|."""
    if not t > 0:
        raise ValueError("time must be positive")
    gen = oracle_rng(rng).generator()
    return np.abs(math.sqrt(t) * gen.standard_normal(n))


class ExactDriverPanel:
    """Driver values and exact segment maxima at a coarse set of times.

    Endpoints are Gaussian and each segment's maximum is drawn from the
    Brownian-bridge law, so states built from the panel follow the continuous
    laws exactly, with no fine-grid bias.  This is the reference path
    generator for distribution-level acceptance checks.
    """

    def __init__(self, grid, eval_times, rng: RngSpec, n: int, with_second: bool = False):
        times = np.unique(np.concatenate([np.asarray(eval_times, float), grid.jump_times]))
        if times[0] != 0.0 or times[-1] > grid.horizon:
            raise ValueError("evaluation times must lie inside [0, T]")
        self.grid = grid
        self.times = times
        gen = oracle_rng(rng).generator()
        self.w, self.w_seg_max = self._draw(gen, n, times)
        if with_second:
            self.b, _ = self._draw(gen, n, times)
        else:
            self.b = None

    @staticmethod
    def _draw(gen, n: int, times):
        steps = np.diff(times)
        w = np.zeros((n, len(times)))
        seg_max = np.empty((n, len(steps)))
        for i, dt in enumerate(steps):
            v = math.sqrt(dt) * gen.standard_normal(n)
            r = bridge_max_given_endpoint(v, dt, gen.random(n))
            seg_max[:, i] = w[:, i] + r
            w[:, i + 1] = w[:, i] + v
        return w, seg_max

    def index_of(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t))
        if self.times[i] != t:
            raise ValueError(f"time {t} not in the panel")
        return i

    def running_max(self, t: float, since: float = 0.0) -> np.ndarray:
        """Exact running maximum of the first driver over [since, t]."""
        i0, i1 = self.index_of(since), self.index_of(t)
        if i1 == i0:
            return self.w[:, i0].copy()
        return self.w_seg_max[:, i0:i1].max(axis=1)

    def state(self, spec, t: float) -> ConditionalState:
        """Exact-law conditional state of every panel path at time t."""
        k = int(np.searchsorted(self.grid.jump_times, t, side="right") - 1)
        i = self.index_of(t)
        tk = float(self.grid.jump_times[k])
        st = ConditionalState(
            k=k, t=t, w_t=self.w[:, i], w_tk=self.w[:, self.index_of(tk)]
        )
        base = spec.base if isinstance(spec, Noisy) else spec
        if isinstance(base, DrawdownBarrier):
            st.run_max_from_0 = self.running_max(t)
        if isinstance(base, PathwiseBarrier):
            st.run_max_from_tk = self.running_max(t, since=tk)
        if isinstance(base, JointIncrementSign):
            if self.b is None:
                raise ValueError("panel was built without the second driver")
            st.b_t = self.b[:, i]
            st.b_tk = self.b[:, self.index_of(tk)]
        return st

    def realize(self, spec, aux_rng: RngSpec | None = None) -> np.ndarray:
        """Realize the chain from the exact panel maxima and endpoints."""
        grid = self.grid
        n_paths = self.w.shape[0]
        jumps = [self.index_of(float(t)) for t in grid.jump_times]
        eps = np.empty((n_paths, grid.n_intervals), dtype=np.int8)
        for k in range(grid.n_intervals):
            i0, i1 = jumps[k], jumps[k + 1]
            if isinstance(spec, (IncrementSign,)):
                eps[:, k] = self.w[:, i1] > self.w[:, i0]
            elif isinstance(spec, DrawdownBarrier):
                m_all = self.w_seg_max[:, :i1].max(axis=1)
                eps[:, k] = (m_all - self.w[:, i1]) > spec.c
            elif isinstance(spec, PathwiseBarrier):
                m_int = self.w_seg_max[:, i0:i1].max(axis=1)
                eps[:, k] = m_int <= self.w[:, i0] + spec.b_offset
            elif isinstance(spec, JointIncrementSign):
                eps[:, k] = (self.w[:, i1] > self.w[:, i0]) & (self.b[:, i1] > self.b[:, i0])
            elif isinstance(spec, Noisy):
                continue
            else:
                raise TypeError(f"unsupported regime spec {type(spec).__name__}")
        if isinstance(spec, Noisy):
            base_eps = self.realize(spec.base)
            if aux_rng is None:
                aux_rng = RngSpec(0xA0C)
            gen = oracle_rng(aux_rng).generator()
            p = np.array([spec.p_for(k, grid) for k in range(grid.n_intervals)])
            eps = (base_eps & (gen.random(base_eps.shape) < p)).astype(np.int8)
        return eps
