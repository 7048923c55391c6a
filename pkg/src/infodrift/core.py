"""Time grids, reproducible Gaussian path generation, and normal special functions.

The simulation clock is a coarse grid of regime-revelation times
t_0 = 0 < t_1 < ... < t_n = T, refined by a uniform sub-grid of m steps per
interval.  Driver paths live on the fine grid; the regime chain lives on the
coarse one.  Every random draw is a pure function of a 64-bit seed and a
per-path stream id (counter-based Philox), so batches are reproducible and
order-insensitive under parallel execution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

SQRT_TWO_PI = np.sqrt(2.0 * np.pi)

# Salt applied to the seed for auxiliary draws (noise bits of the noisy chain),
# keeping them independent of the driver streams for the same (seed, stream).
AUX_STREAM_SALT = np.uint64(0x9E3779B97F4A7C15)


def std_normal(x):
    """Standard-normal cdf, density and survival at ``x``.

    Returns the triple (Phi, Phi', Phibar).  The survival function is
    evaluated as Phi(-x) rather than 1 - Phi(x) so both tails stay accurate.
    """
    x = np.asarray(x, dtype=np.float64)
    cdf = ndtr(x)
    pdf = np.exp(-0.5 * x * x) / SQRT_TWO_PI
    survival = ndtr(-x)
    if cdf.ndim == 0:
        return float(cdf), float(pdf), float(survival)
    return cdf, pdf, survival


def norm_pdf(z):
    """Standard-normal density, vectorized."""
    return np.exp(-0.5 * z * z) / SQRT_TWO_PI


@dataclass(frozen=True)
class TimeGrid:
    """Regime-revelation times plus a uniform fine sub-grid per interval.

    ``fine_times`` has n*m + 1 points; jump time t_k sits exactly at fine
    index k*m, so coarse indices are always recoverable.
    """

    jump_times: np.ndarray
    substeps: int
    fine_times: np.ndarray = field(repr=False)

    @property
    def n_intervals(self) -> int:
        return len(self.jump_times) - 1

    @property
    def horizon(self) -> float:
        return float(self.jump_times[-1])

    @property
    def n_fine(self) -> int:
        return len(self.fine_times)

    @property
    def jump_indices(self) -> np.ndarray:
        return np.arange(self.n_intervals + 1) * self.substeps

    @property
    def fine_dt(self) -> np.ndarray:
        """Step sizes on the fine grid, length n_fine - 1."""
        return np.diff(self.fine_times)

    @property
    def step_interval(self) -> np.ndarray:
        """Interval index k of each fine step, length n_fine - 1."""
        return np.repeat(np.arange(self.n_intervals), self.substeps)

    def interval_length(self, k: int) -> float:
        return float(self.jump_times[k + 1] - self.jump_times[k])

    def interval_slice(self, k: int) -> slice:
        """Fine-step indices belonging to [t_k, t_{k+1})."""
        m = self.substeps
        return slice(k * m, (k + 1) * m)


def build_grid(jump_times, substeps: int) -> TimeGrid:
    """Validate regime times and build the fine grid.

    Raises ValueError for non-increasing times, a nonzero start, fewer than
    two jump times, or a non-positive substep count.
    """
    jt = np.asarray(jump_times, dtype=np.float64)
    if jt.ndim != 1 or len(jt) < 2:
        raise ValueError("jump_times must be a 1-d vector with at least two entries")
    if jt[0] != 0.0:
        raise ValueError(f"first jump time must be 0, got {jt[0]}")
    if np.any(np.diff(jt) <= 0.0):
        raise ValueError(f"jump_times must be strictly increasing, got {jt.tolist()}")
    m = int(substeps)
    if m < 1:
        raise ValueError(f"substeps must be a positive integer, got {substeps}")

    n = len(jt) - 1
    fine = np.empty(n * m + 1, dtype=np.float64)
    for k in range(n):
        # uniform inside the interval; endpoints pinned to the exact jump times
        fine[k * m : (k + 1) * m] = jt[k] + (jt[k + 1] - jt[k]) * np.arange(m) / m
    fine[-1] = jt[-1]
    return TimeGrid(jump_times=jt, substeps=m, fine_times=fine)


def running_max(path, start: int, stop: int):
    """Exact maximum of ``path`` over the inclusive index range [start, stop]."""
    path = np.asarray(path)
    n = path.shape[-1]
    if not (0 <= start <= stop < n):
        raise ValueError(f"index range [{start}, {stop}] out of bounds for length {n}")
    return path[..., start : stop + 1].max(axis=-1)


@dataclass(frozen=True)
class RngSpec:
    """Pure (seed, stream) address of a random stream.

    Row r of a sampled batch uses stream ``stream_id + r``, each backed by a
    Philox counter-based generator keyed on (seed, stream).  Distinct streams
    are independent and insensitive to generation order.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")

    def generator(self, offset: int = 0) -> np.random.Generator:
        key = np.array(
            [np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF), np.uint64(self.stream_id + offset)],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def aux(self) -> "RngSpec":
        """Derived spec for auxiliary draws, independent of the driver stream."""
        return RngSpec(int(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF) ^ AUX_STREAM_SALT), self.stream_id)

    def shifted(self, n: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream_id + n)


@dataclass
class PathBundle:
    """One batch of simulated worlds, row per path, column per fine time.

    ``w`` (and ``b`` when present) are driver levels; ``eps`` the realized
    chain per interval; ``alpha``/``gamma`` the information drifts at fine
    times (left-endpoint convention, final column zero); ``w_hat``/``b_hat``
    the decomposed drivers.  ``flags`` counts drift-cap saturations per path.
    """

    w: np.ndarray
    rng: RngSpec
    b: np.ndarray | None = None
    eps: np.ndarray | None = None
    alpha: np.ndarray | None = None
    gamma: np.ndarray | None = None
    w_hat: np.ndarray | None = None
    b_hat: np.ndarray | None = None
    flags: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.w.shape[0]

    @property
    def n_fine(self) -> int:
        return self.w.shape[1]


def sample_paths(
    grid: TimeGrid,
    rng: RngSpec,
    n_paths: int = 1,
    with_second_driver: bool = False,
) -> PathBundle:
    """Draw Brownian paths on the fine grid.

    Increment j of path r is N(0, dt_j), generated from the Philox stream
    (seed, stream_id + r); the second driver, when requested, consumes the
    same stream after the first, so w is unchanged by the flag.
    """
    n_steps = grid.n_fine - 1
    sqrt_dt = np.sqrt(grid.fine_dt)

    w = np.empty((n_paths, grid.n_fine), dtype=np.float64)
    b = np.empty_like(w) if with_second_driver else None
    w[:, 0] = 0.0
    if b is not None:
        b[:, 0] = 0.0
    for r in range(n_paths):
        gen = rng.generator(offset=r)
        z = gen.standard_normal(n_steps)
        np.cumsum(z * sqrt_dt, out=w[r, 1:])
        if b is not None:
            zb = gen.standard_normal(n_steps)
            np.cumsum(zb * sqrt_dt, out=b[r, 1:])
    return PathBundle(w=w, b=b, rng=rng)
