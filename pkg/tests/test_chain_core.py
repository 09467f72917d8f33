import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsh_lab import (
    AbsorbingViolationError,
    DimensionMismatchError,
    Distribution,
    MalformedKernelError,
    ProblemSpec,
    StateLimitError,
    StateSpace,
    TransitionKernel,
    WalkParams,
    build_chain,
    builtin_problem,
    iterate,
    kernel_rsh1,
    kernel_rsh2,
    lump_optimal,
    nonopt_probability,
    point_mass,
    reconstruct_kernel,
    uniform_over_nonoptimal,
)


def fitness_tables():
    return st.lists(
        st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
        min_size=2,
        max_size=12,
    )


def walk_params():
    return st.builds(
        WalkParams,
        step_prob=st.floats(min_value=1e-3, max_value=0.5),
        accept_worse_prob=st.floats(min_value=0.0, max_value=1.0),
    )


# --- StateSpace ---------------------------------------------------------


def test_state_space_marks_all_argmax_states():
    space = StateSpace.from_fitness([1.0, 3.0, 3.0, 0.0])
    assert list(space.optimal_states) == [1, 2]
    assert list(space.nonoptimal_states) == [0, 3]


def test_state_space_rejects_nan_and_too_small():
    with pytest.raises(ValueError):
        StateSpace.from_fitness([0.0, float("nan")])
    with pytest.raises(ValueError):
        StateSpace.from_fitness([1.0])


def test_state_space_rejects_wrong_mask():
    with pytest.raises(ValueError):
        StateSpace(size=2, fitness=np.array([0.0, 1.0]), optimal_mask=np.array([True, False]))


# --- TransitionKernel ---------------------------------------------------


def test_kernel_rejects_non_stochastic_row_naming_it():
    bad = np.array([[0.5, 0.4], [0.0, 1.0]])
    with pytest.raises(MalformedKernelError) as err:
        TransitionKernel(bad)
    assert err.value.row == 0


def test_kernel_rejects_negative_entries():
    bad = np.array([[1.1, -0.1], [0.0, 1.0]])
    with pytest.raises(MalformedKernelError):
        TransitionKernel(bad)


def test_state_cap_guards_dense_blowup():
    with pytest.raises(StateLimitError):
        kernel_rsh1(ProblemSpec(domain_size=5001, fitness_values=np.arange(5001.0)))


# --- build_chain / lump_optimal -----------------------------------------


def test_build_chain_square_structure(rsh1_square):
    _, _, chain = rsh1_square
    q = chain.q_block
    assert q.shape == (100, 100)
    assert np.all(np.diag(q) == 0.99)
    assert np.all(np.diag(q, k=1) == 0.01)
    assert np.count_nonzero(q) == 100 + 99
    # reversing the state order gives the lower-bidiagonal presentation
    rev = q[::-1, ::-1]
    assert np.all(np.diag(rev, k=-1) == 0.01)
    assert np.all(np.triu(rev, k=1) == 0.0)
    # only the state adjacent to the optimum feeds the absorbing block
    r = chain.r_block
    assert r.shape == (100, 1)
    assert r[99, 0] == 0.01 and np.count_nonzero(r) == 1


def test_build_chain_two_state_forced_by_stochasticity():
    kernel = TransitionKernel(np.array([[0.0, 1.0], [0.0, 1.0]]))
    space = StateSpace.from_fitness([0.0, 1.0])
    chain = build_chain(kernel, space)
    assert chain.q_block.tolist() == [[0.0]]
    assert chain.r_block.tolist() == [[1.0]]


def rsh2_case_table_row(fitness, x, step=0.01, accept=0.5):
    """Row of the non-elitist walk built directly from its case rules."""
    n = len(fitness)
    row = np.zeros(n)
    for y in (x - 1, x + 1):
        if 0 <= y < n:
            row[y] = step if fitness[y] > fitness[x] else step * accept
    row[x] = 1.0 - row.sum()
    return row


def test_build_chain_rsh2_row_sums_match_case_table(rsh2_square):
    kernel, space, chain = rsh2_square
    fitness = space.fitness
    sums = chain.q_block.sum(axis=1)
    for pos, state in enumerate(chain.non_index):
        expected = rsh2_case_table_row(fitness, int(state))
        non = chain.non_index
        assert sums[pos] == pytest.approx(expected[non].sum(), abs=1e-15)
    # adjacent-to-optimum row leaks exactly the improving step mass
    assert sums[99] == pytest.approx(0.99, abs=1e-15)
    assert np.all(np.abs(sums[:99] - 1.0) < 1e-15)


def test_build_chain_requires_absorbing_optimal_rows():
    matrix = np.array([[0.7, 0.3], [0.3, 0.7]])
    space = StateSpace.from_fitness([0.0, 1.0])
    with pytest.raises(AbsorbingViolationError) as err:
        build_chain(TransitionKernel(matrix), space)
    assert err.value.row == 1


def test_lump_optimal_rewrites_optimal_rows():
    matrix = np.array([[0.7, 0.3], [0.3, 0.7]])
    space = StateSpace.from_fitness([0.0, 1.0])
    lumped = lump_optimal(TransitionKernel(matrix), space)
    assert lumped.matrix[1].tolist() == [0.0, 1.0]
    assert lumped.matrix[0].tolist() == [0.7, 0.3]


def test_lump_optimal_is_identity_on_absorbing_kernels(rsh1_square):
    kernel, space, _ = rsh1_square
    again = lump_optimal(kernel, space)
    assert again is kernel


def test_lump_optimal_on_raw_nonelitist_walk_row():
    # raw walk row at the optimum of (x-49)^2: steps down with half the
    # proposal mass, stays otherwise; lumping replaces it by a self-loop
    problem = builtin_problem("shifted_square")
    fitness = problem.fitness_values
    n = problem.domain_size
    matrix = np.zeros((n, n))
    for x in range(n):
        matrix[x] = rsh2_case_table_row(fitness, x)
    assert matrix[100, 99] == 0.005 and matrix[100, 100] == 0.995
    space = problem.state_space()
    lumped = lump_optimal(TransitionKernel(matrix), space)
    assert lumped.matrix[100, 100] == 1.0
    assert lumped.matrix[100, 99] == 0.0
    assert np.array_equal(lumped.matrix[:100], matrix[:100])


@given(fitness_tables(), walk_params())
@settings(max_examples=60, deadline=None)
def test_reconstruction_roundtrip(values, params):
    problem = ProblemSpec(domain_size=len(values), fitness_values=np.asarray(values))
    space = problem.state_space()
    kernel = kernel_rsh2(problem, params)
    chain = build_chain(kernel, space)
    rebuilt = reconstruct_kernel(chain)
    assert np.array_equal(rebuilt.matrix, kernel.matrix)


# --- Distribution / iterate ---------------------------------------------


def test_iterate_point_mass_adjacent_to_optimum(rsh1_square):
    _, _, chain = rsh1_square
    q1 = iterate(chain, point_mass(chain, 99))
    assert nonopt_probability(q1) == pytest.approx(0.99, abs=1e-15)
    assert q1.iteration == 1


def test_iterate_zero_vector_stays_zero(rsh1_square):
    _, _, chain = rsh1_square
    zero = Distribution(weights=np.zeros(100))
    assert nonopt_probability(iterate(chain, zero)) == 0.0


def test_iterate_matches_dense_matrix_power_oracle(rsh1_square):
    _, _, chain = rsh1_square
    dist = uniform_over_nonoptimal(chain)
    power = np.eye(100)
    for t in range(1, 51):
        dist = iterate(chain, dist)
        power = power @ chain.q_block
        oracle = float((np.full(100, 1.0 / 100) @ power).sum())
        assert nonopt_probability(dist) == pytest.approx(oracle, abs=1e-12)
    assert dist.iteration == 50


def test_iterate_dimension_mismatch(rsh1_square, rsh2_square):
    _, _, chain = rsh1_square
    with pytest.raises(DimensionMismatchError):
        iterate(chain, Distribution(weights=np.zeros(7)))


def test_point_mass_on_optimal_state_is_empty(rsh1_square):
    _, _, chain = rsh1_square
    dist = point_mass(chain, 100)
    assert nonopt_probability(dist) == 0.0


def test_nonopt_probability_trivials(rsh1_square):
    _, _, chain = rsh1_square
    assert nonopt_probability(point_mass(chain, 5)) == 1.0
    assert nonopt_probability(Distribution(weights=np.zeros(100))) == 0.0


def test_distribution_rejects_negative_or_overweight():
    with pytest.raises(ValueError):
        Distribution(weights=np.array([-0.1, 0.5]))
    with pytest.raises(ValueError):
        Distribution(weights=np.array([0.7, 0.7]))


@given(
    fitness_tables(),
    walk_params(),
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=12),
    st.integers(min_value=1, max_value=30),
)
@settings(max_examples=60, deadline=None)
def test_monotone_absorption(values, params, raw_weights, steps):
    problem = ProblemSpec(domain_size=len(values), fitness_values=np.asarray(values))
    space = problem.state_space()
    chain = build_chain(kernel_rsh2(problem, params), space)
    m = chain.num_transient
    if m == 0:
        return
    w = np.resize(np.asarray(raw_weights), m)
    total = w.sum()
    if total > 0:
        w = w / max(total, 1.0)
    dist = Distribution(weights=w)
    for _ in range(steps):
        nxt = iterate(chain, dist)
        assert nonopt_probability(nxt) <= nonopt_probability(dist) + 1e-12
        dist = nxt


def test_probability_conservation_per_row(rsh2_square):
    _, _, chain = rsh2_square
    sums = chain.q_block.sum(axis=1) + chain.r_block.sum(axis=1)
    assert np.all(np.abs(sums - 1.0) <= 1e-12)


def test_exact_iteration_agrees_with_simulation(rsh1_square, sim_rsh1_square):
    _, _, chain = rsh1_square
    stats = sim_rsh1_square
    dist = point_mass(chain, 20)
    probs = {}
    for t in range(1, 8001):
        dist = iterate(chain, dist)
        if t in (1000, 4000, 8000):
            probs[t] = nonopt_probability(dist)
    for t, p in probs.items():
        idx = int(np.searchsorted(stats.t_grid, t))
        assert stats.t_grid[idx] == t
        empirical = stats.nonopt_counts[idx] / stats.runs
        stderr = np.sqrt(p * (1.0 - p) / stats.runs)
        assert abs(empirical - p) <= 4.0 * stderr


def test_constant_fitness_has_no_transient_states():
    space = StateSpace.from_fitness([2.0, 2.0, 2.0])
    kernel = TransitionKernel(np.eye(3))
    chain = build_chain(kernel, space)
    assert chain.num_transient == 0
    assert nonopt_probability(Distribution(weights=np.zeros(0))) == 0.0
