import math

import numpy as np
import pytest

from rsh_lab import (
    SimConfig,
    WalkParams,
    builtin_problem,
    empirical_average_rate,
    empirical_convergence_curve,
    empirical_hitting_time,
    hitting_times,
    set_worker_threads,
    simulate,
)
from rsh_lab.errors import DimensionMismatchError, ProblemFormatError
from rsh_lab.simulation import (
    CENSORED,
    RunStats,
    load_curve_csv,
    load_rate_csv,
    load_tau_csv,
    write_curve_csv,
    write_rate_csv,
    write_tau_csv,
)
from conftest import exact_nonopt_curve


def small_sim(algo="rsh1", name="square", **overrides):
    config = dict(runs=400, max_iterations=30_000, seed=99, init=20, record_stride=100)
    config.update(overrides)
    return simulate(algo, builtin_problem(name), WalkParams(), SimConfig(**config))


def synthetic_stats(taus, runs=None, max_iterations=10, stride=1):
    taus = np.asarray(taus, dtype=np.int64)
    runs = len(taus) if runs is None else runs
    t_grid = np.arange(0, max_iterations + 1, stride, dtype=np.int64)
    hits = np.sort(taus[taus != CENSORED])
    opt = np.searchsorted(hits, t_grid, side="right").astype(np.int64)
    return RunStats(
        runs=runs,
        max_iterations=max_iterations,
        record_stride=stride,
        seed=0,
        t_grid=t_grid,
        opt_counts=opt,
        nonopt_counts=runs - opt,
        hitting_times=taus,
        censored_count=int((taus == CENSORED).sum()),
    )


# --- determinism ------------------------------------------------------------


def test_identical_config_gives_bit_identical_stats():
    a = small_sim()
    b = small_sim()
    assert np.array_equal(a.hitting_times, b.hitting_times)
    assert np.array_equal(a.nonopt_counts, b.nonopt_counts)


def test_thread_count_does_not_change_results():
    try:
        set_worker_threads(1)
        single = small_sim(runs=300)
    finally:
        set_worker_threads(0)
    multi = small_sim(runs=300)
    assert np.array_equal(single.hitting_times, multi.hitting_times)


def test_different_seeds_differ():
    a = small_sim(runs=200)
    b = small_sim(runs=200, seed=100)
    assert not np.array_equal(a.hitting_times, b.hitting_times)


# --- trivial and structural behaviour ----------------------------------------


def test_optimal_init_hits_immediately():
    stats = small_sim(runs=1, init=100, max_iterations=10, record_stride=1)
    assert stats.hitting_times.tolist() == [0]
    assert np.all(stats.opt_counts == 1)
    assert empirical_hitting_time(stats).mean == 0.0


def test_tau_zero_iff_initial_state_optimal():
    stats = small_sim(runs=2000, init="uniform", max_iterations=5, record_stride=1)
    frequency = float((stats.hitting_times == 0).sum()) / stats.runs
    p = 1.0 / 101.0
    assert abs(frequency - p) <= 4.0 * math.sqrt(p * (1 - p) / stats.runs)
    positive = stats.hitting_times[stats.hitting_times != 0]
    assert np.all((positive > 0) | (positive == CENSORED))


def test_counts_partition_runs_and_absorb_monotonically(sim_rsh1_square):
    stats = sim_rsh1_square
    assert np.all(stats.opt_counts + stats.nonopt_counts == stats.runs)
    assert np.all(np.diff(stats.nonopt_counts) <= 0)
    assert stats.t_grid[0] == 0


def test_simulate_validation():
    problem = builtin_problem("square")
    with pytest.raises(ValueError):
        SimConfig(runs=0, max_iterations=10, seed=1)
    with pytest.raises(ValueError):
        SimConfig(runs=1, max_iterations=10, seed=1, init="everywhere")
    with pytest.raises(ProblemFormatError):
        simulate("rsh3", problem, WalkParams(), SimConfig(runs=1, max_iterations=1, seed=1))
    with pytest.raises(DimensionMismatchError):
        simulate("rsh1", problem, WalkParams(),
                 SimConfig(runs=1, max_iterations=1, seed=1, init=500))


# --- estimators ---------------------------------------------------------------


def test_empirical_hitting_time_constant_taus():
    summary = empirical_hitting_time(synthetic_stats([1, 1, 1, 1]))
    assert summary.mean == 1.0
    assert summary.stderr == 0.0
    assert summary.censored == 0 and not summary.all_censored


def test_empirical_hitting_time_all_censored():
    summary = empirical_hitting_time(synthetic_stats([CENSORED, CENSORED]))
    assert summary.all_censored
    assert math.isnan(summary.mean) and math.isnan(summary.stderr)
    assert summary.censored == 2


def test_empirical_curve_reaches_one_when_all_absorbed():
    stats = synthetic_stats([1, 2, 3], max_iterations=5)
    curve = dict(empirical_convergence_curve(stats))
    assert curve[5] == 1.0 and curve[0] == 0.0


def test_empirical_rate_zero_while_nothing_absorbed():
    stats = synthetic_stats([CENSORED, CENSORED, 9], max_iterations=9)
    rates = dict(empirical_average_rate(stats))
    assert rates[5] == 0.0


def test_empirical_rate_cutoff_at_tiny_frequency():
    taus = [1] * 199_999 + [CENSORED]
    stats = synthetic_stats(taus, max_iterations=3)
    rates = dict(empirical_average_rate(stats))
    assert rates[2] is None  # one survivor in 2e5 runs is below the cutoff
    taus = [1] * 100 + [CENSORED] * 100
    rates = dict(empirical_average_rate(synthetic_stats(taus, max_iterations=3)))
    assert rates[2] == pytest.approx(-math.log(0.5) / 2.0)


def test_uniform_init_mean_matches_exact_average(repro_ctx):
    stats = simulate(
        "rsh1",
        builtin_problem("square"),
        WalkParams(),
        SimConfig(runs=20_000, max_iterations=100_000, seed=5, init="uniform", record_stride=1000),
    )
    _, _, chain = repro_ctx.chain("rsh1", "square")
    exact_mean = float(hitting_times(chain).h.sum()) / 101.0  # optimal state counts as 0
    summary = empirical_hitting_time(stats)
    assert summary.censored == 0
    assert abs(summary.mean - exact_mean) <= 5.0 * summary.stderr


def test_mean_hitting_times_match_exact_solve(repro_ctx, sim_rsh1_square, sim_rsh2_square):
    for algo, stats in (("rsh1", sim_rsh1_square), ("rsh2", sim_rsh2_square)):
        _, _, chain = repro_ctx.chain(algo, "square")
        exact = float(hitting_times(chain).h[20])
        summary = empirical_hitting_time(stats)
        assert summary.censored == 0
        assert abs(summary.mean - exact) / exact < 0.02


def test_nonelitist_curve_tracks_exact_deep_into_the_tail(repro_ctx, sim_rsh2_square):
    stats = sim_rsh2_square
    _, _, chain = repro_ctx.chain("rsh2", "square")
    exact = exact_nonopt_curve(chain, 20, 40_000)
    t = 40_000
    idx = int(np.searchsorted(stats.t_grid, t))
    empirical = 1.0 - stats.opt_counts[idx] / stats.runs
    p = exact[t]
    assert abs(empirical - p) <= 4.0 * math.sqrt(p * (1.0 - p) / stats.runs)


def test_nonelitist_rate_sits_below_elitist_rate(sim_rsh1_square, sim_rsh2_square):
    elitist = dict(empirical_average_rate(sim_rsh1_square))
    lazy = dict(empirical_average_rate(sim_rsh2_square))
    compared = 0
    for t in elitist:
        if t >= 10_000 and elitist[t] is not None and lazy.get(t) is not None:
            assert lazy[t] < elitist[t], t
            compared += 1
    assert compared > 10


def test_shifted_square_elitist_never_converges(sim_rsh1_shifted):
    stats = sim_rsh1_shifted
    assert stats.censored_count == stats.runs
    assert all(value == 0.0 for _, value in empirical_convergence_curve(stats))


def test_empirical_curves_track_exact_distribution(repro_ctx, sim_rsh1_square, sim_rsh2_square):
    checkpoints = (100, 1000, 10_000)
    cases = [
        ("rsh1", "square", sim_rsh1_square),
        ("rsh2", "square", sim_rsh2_square),
        ("rsh1", "square10", None),
        ("rsh2", "square10", None),
        ("rsh1", "shifted_square", None),
        ("rsh2", "shifted_square", None),
    ]
    for algo, name, stats in cases:
        if stats is None:
            stats = simulate(
                algo,
                builtin_problem(name),
                WalkParams(),
                SimConfig(runs=20_000, max_iterations=10_000, seed=11, init=20, record_stride=100),
            )
        _, _, chain = repro_ctx.chain(algo, name)
        exact = exact_nonopt_curve(chain, 20, max(checkpoints))
        for t in checkpoints:
            idx = int(np.searchsorted(stats.t_grid, t))
            empirical = stats.nonopt_counts[idx] / stats.runs
            p = exact[t]
            tolerance = 4.0 * math.sqrt(p * (1.0 - p) / stats.runs)
            assert abs(empirical - p) <= max(tolerance, 1e-12), (algo, name, t)


# --- CSV round trips -----------------------------------------------------------


def test_curve_csv_roundtrip(tmp_path):
    stats = small_sim(runs=50, max_iterations=500)
    path = tmp_path / "curve.csv"
    write_curve_csv(stats, path)
    assert path.read_text().splitlines()[0] == "t,opt_count,nonopt_count"
    rows = load_curve_csv(path)
    assert rows == [
        (int(t), int(o), int(n))
        for t, o, n in zip(stats.t_grid, stats.opt_counts, stats.nonopt_counts)
    ]


def test_tau_csv_roundtrip(tmp_path):
    stats = small_sim(runs=50, max_iterations=500)
    path = tmp_path / "tau.csv"
    write_tau_csv(stats, path)
    assert path.read_text().splitlines()[0] == "run,tau,censored"
    rows = load_tau_csv(path)
    assert len(rows) == 50
    for run, tau, censored in rows:
        original = stats.hitting_times[run]
        if censored:
            assert original == CENSORED and tau == stats.max_iterations
        else:
            assert tau == original


def test_rate_csv_roundtrip(tmp_path):
    stats = small_sim(runs=50, max_iterations=500)
    path = tmp_path / "rate.csv"
    write_rate_csv(stats, path)
    assert path.read_text().splitlines()[0] == "t,rate"
    assert load_rate_csv(path) == empirical_average_rate(stats)
