"""Seeded Monte Carlo execution of the built-in walk heuristics.

Trajectories are simulated procedurally (propose +/-1, accept/reject),
independently of the kernel constructors, so the two sides
cross-validate each other.

Reproducibility contract: every random draw is a pure function of
(master seed, run index, draw counter) through the SplitMix64 finalizer
(Steele, Lea & Flood's splittable generator).  Run i draws its stream
key as mix64(mix64(seed) + (i + 1) * GOLDEN) and its c-th variate as
mix64(key + (c + 1) * GOLDEN) / 2^64.  Results are therefore bit-identical
for a fixed (seed, runs, max_iterations, init) regardless of execution
order, thread count, or platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from numba import njit, prange, set_num_threads
from numba import config as _numba_config

from .errors import DimensionMismatchError, ProblemFormatError
from .heuristics import ProblemSpec, WalkParams

ALGORITHMS = ("rsh1", "rsh2")

CENSORED = -1  # sentinel in the per-run hitting-time array

# Relative-frequency cutoff below which the empirical rate is not reported:
# with so few surviving runs the estimate is statistically meaningless.
RATE_CUTOFF_FREQUENCY = 1e-5

CURVE_HEADER = "t,opt_count,nonopt_count"
TAU_HEADER = "run,tau,censored"
RATE_HEADER = "t,rate"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_INV_2_64 = 1.0 / 18446744073709551616.0


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run configuration.

    ``init`` is either a state index or "uniform" (uniform over the whole
    domain, optimal states included).  Aggregates are recorded at every
    ``record_stride``-th iteration, t = 0 included.
    """

    runs: int
    max_iterations: int
    seed: int
    init: Union[int, str] = 20
    record_stride: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if isinstance(self.init, str):
            if self.init != "uniform":
                raise ValueError("init must be a state index or 'uniform'")
        elif self.init < 0:
            raise ValueError("init state must be nonnegative")


@dataclass(frozen=True)
class RunStats:
    """Aggregates of one batch of runs.

    ``hitting_times[i]`` is the first iteration at which run i held an
    optimal solution, or -1 (CENSORED) if it never did within the budget.
    ``t_grid`` lists the recorded iterations; the count arrays are indexed
    alike and always satisfy opt + nonopt = runs.
    """

    runs: int
    max_iterations: int
    record_stride: int
    seed: int
    t_grid: np.ndarray
    opt_counts: np.ndarray
    nonopt_counts: np.ndarray
    hitting_times: np.ndarray
    censored_count: int

    def __post_init__(self):
        if np.any(self.opt_counts + self.nonopt_counts != self.runs):
            raise ValueError("optimal and non-optimal counts must partition the runs")
        if np.any(np.diff(self.nonopt_counts) > 0):
            raise ValueError("absorption is permanent: non-optimal counts cannot grow")

    @property
    def uncensored(self) -> np.ndarray:
        return self.hitting_times[self.hitting_times != CENSORED]


@dataclass(frozen=True)
class HittingTimeSummary:
    """Sample mean/stderr of the uncensored first hitting times.

    With censored runs present the mean is only a lower-bound estimate;
    with every run censored both moments are NaN and ``all_censored`` is
    set.
    """

    mean: float
    stderr: float
    censored: int
    runs: int
    all_censored: bool


def set_worker_threads(count: Optional[int]):
    """Cap simulation worker threads; 0 or None restores automatic."""
    if count is None or count == 0:
        set_num_threads(_numba_config.NUMBA_DEFAULT_NUM_THREADS)
        return
    if count < 0:
        raise ValueError("thread count must be nonnegative")
    set_num_threads(min(count, _numba_config.NUMBA_DEFAULT_NUM_THREADS))


@njit(cache=True, inline="always")
def _mix64(x):
    # SplitMix64 finalizer; bijective on uint64.
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _draw(key, counter):
    # counter-indexed uniform in [0, 1); draw c touches nothing but (key, c)
    return float(_mix64(key + (counter + np.uint64(1)) * _GOLDEN)) * _INV_2_64


@njit(cache=True, parallel=True)
def _run_walks(fitness, optimal, step_prob, accept_worse, seed, init_state, max_iter, runs):
    """First hitting time of each run; -1 when censored.

    init_state < 0 means uniform initialisation.  Draw counters per
    iteration t are 2t (proposal) and 2t+1 (acceptance); the
    initial-state draw uses counter 2*max_iter+2, outside that range.
    """
    n = fitness.shape[0]
    tau = np.empty(runs, np.int64)
    seed64 = np.uint64(seed)
    init_counter = np.uint64(2 * max_iter + 2)
    for i in prange(runs):
        key = _mix64(_mix64(seed64) + np.uint64(i + 1) * _GOLDEN)
        if init_state >= 0:
            x = init_state
        else:
            u = _draw(key, init_counter)
            x = np.int64(u * n)
            if x >= n:
                x = n - 1
        if optimal[x]:
            tau[i] = 0
            continue
        hit = np.int64(CENSORED)
        for t in range(max_iter):
            c = np.uint64(2 * t)
            u1 = _draw(key, c)
            y = x
            if u1 < step_prob:
                y = x - 1
            elif u1 < 2.0 * step_prob:
                y = x + 1
            if y < 0 or y >= n:
                y = x
            if y != x:
                if fitness[y] > fitness[x]:
                    x = y
                elif accept_worse > 0.0 and _draw(key, c + np.uint64(1)) < accept_worse:
                    x = y
                if optimal[x]:
                    hit = t + 1
                    break
        tau[i] = hit
    return tau


def simulate(algorithm: str, problem: ProblemSpec, params: WalkParams, config: SimConfig) -> RunStats:
    """Run ``config.runs`` independent trajectories of the named heuristic.

    Censoring at the iteration budget is data, not an error.  Identical
    (seed, runs, max_iterations, init) give bit-identical statistics no
    matter the thread count.
    """
    if algorithm not in ALGORITHMS:
        raise ProblemFormatError("algo", f"unknown algorithm {algorithm!r}; expected rsh1 or rsh2")
    fitness = np.ascontiguousarray(problem.fitness_values, dtype=np.float64)
    optimal = fitness == fitness.max()
    if isinstance(config.init, str):
        init_state = -1
    else:
        init_state = int(config.init)
        if init_state >= problem.domain_size:
            raise DimensionMismatchError(
                f"init state {init_state} is outside the domain of size {problem.domain_size}"
            )
    accept_worse = 0.0 if algorithm == "rsh1" else params.accept_worse_prob
    tau = _run_walks(
        fitness,
        optimal,
        float(params.step_prob),
        float(accept_worse),
        int(config.seed),
        init_state,
        int(config.max_iterations),
        int(config.runs),
    )
    return _aggregate(tau, config)


def _aggregate(tau: np.ndarray, config: SimConfig) -> RunStats:
    t_grid = np.arange(0, config.max_iterations + 1, config.record_stride, dtype=np.int64)
    hits = np.sort(tau[tau != CENSORED])
    censored = int(config.runs - hits.size)
    # run i is optimal at time t exactly when tau_i <= t
    absorbed_by_t = np.searchsorted(hits, t_grid, side="right")
    opt_counts = absorbed_by_t.astype(np.int64)
    nonopt_counts = config.runs - opt_counts
    for arr in (t_grid, opt_counts, nonopt_counts):
        arr.setflags(write=False)
    tau = tau.copy()
    tau.setflags(write=False)
    return RunStats(
        runs=config.runs,
        max_iterations=config.max_iterations,
        record_stride=config.record_stride,
        seed=config.seed,
        t_grid=t_grid,
        opt_counts=opt_counts,
        nonopt_counts=nonopt_counts,
        hitting_times=tau,
        censored_count=censored,
    )


def empirical_convergence_curve(stats: RunStats):
    """Relative frequency of being optimal at each recorded iteration."""
    return [(int(t), float(c) / stats.runs) for t, c in zip(stats.t_grid, stats.opt_counts)]


def empirical_average_rate(stats: RunStats):
    """Empirical average convergence rate -(1/t) ln(nonopt_t / nonopt_0).

    Entries are None once the surviving relative frequency drops to
    RATE_CUTOFF_FREQUENCY or below; recorded iterations with t = 0 are
    skipped.
    """
    base = float(stats.nonopt_counts[0]) if len(stats.t_grid) else 0.0
    rows = []
    for t, nonopt in zip(stats.t_grid, stats.nonopt_counts):
        if t == 0:
            continue
        frequency = float(nonopt) / stats.runs
        if base <= 0.0 or frequency <= RATE_CUTOFF_FREQUENCY:
            rows.append((int(t), None))
            continue
        rows.append((int(t), -math.log(float(nonopt) / base) / float(t)))
    return rows


def empirical_hitting_time(stats: RunStats) -> HittingTimeSummary:
    """Mean and standard error of the uncensored first hitting times."""
    hits = stats.uncensored
    if hits.size == 0:
        return HittingTimeSummary(
            mean=math.nan,
            stderr=math.nan,
            censored=stats.censored_count,
            runs=stats.runs,
            all_censored=True,
        )
    mean = float(hits.mean())
    stderr = float(hits.std(ddof=1) / math.sqrt(hits.size)) if hits.size > 1 else 0.0
    return HittingTimeSummary(
        mean=mean,
        stderr=stderr,
        censored=stats.censored_count,
        runs=stats.runs,
        all_censored=False,
    )


def write_curve_csv(stats: RunStats, path):
    with open(path, "w") as fh:
        fh.write(CURVE_HEADER + "\n")
        for t, opt, nonopt in zip(stats.t_grid, stats.opt_counts, stats.nonopt_counts):
            fh.write(f"{int(t)},{int(opt)},{int(nonopt)}\n")


def write_tau_csv(stats: RunStats, path):
    """Sidecar per-run file; censored runs report the iteration budget as a
    lower bound with censored=1."""
    with open(path, "w") as fh:
        fh.write(TAU_HEADER + "\n")
        for i, t in enumerate(stats.hitting_times):
            if t == CENSORED:
                fh.write(f"{i},{stats.max_iterations},1\n")
            else:
                fh.write(f"{i},{int(t)},0\n")


def write_rate_csv(stats: RunStats, path):
    """Empirical rate per recorded iteration; cutoff entries are blank."""
    with open(path, "w") as fh:
        fh.write(RATE_HEADER + "\n")
        for t, rate in empirical_average_rate(stats):
            fh.write(f"{t},{'' if rate is None else repr(rate)}\n")


def load_curve_csv(path):
    """Rows of (t, opt_count, nonopt_count)."""
    rows = []
    with open(Path(path)) as fh:
        header = fh.readline().strip()
        if header != CURVE_HEADER:
            raise ProblemFormatError("header", f"expected {CURVE_HEADER!r}, got {header!r}")
        for line in fh:
            t, opt, nonopt = line.strip().split(",")
            rows.append((int(t), int(opt), int(nonopt)))
    return rows


def load_tau_csv(path):
    """Rows of (run, tau, censored)."""
    rows = []
    with open(Path(path)) as fh:
        header = fh.readline().strip()
        if header != TAU_HEADER:
            raise ProblemFormatError("header", f"expected {TAU_HEADER!r}, got {header!r}")
        for line in fh:
            run, tau, censored = line.strip().split(",")
            rows.append((int(run), int(tau), bool(int(censored))))
    return rows


def load_rate_csv(path):
    """Rows of (t, rate-or-None)."""
    rows = []
    with open(Path(path)) as fh:
        header = fh.readline().strip()
        if header != RATE_HEADER:
            raise ProblemFormatError("header", f"expected {RATE_HEADER!r}, got {header!r}")
        for line in fh:
            t, rate = line.strip().split(",")
            rows.append((int(t), None if rate == "" else float(rate)))
    return rows
