"""Absorbing Markov chain model of a randomised search heuristic.

A heuristic over a finite state space is a row-stochastic transition
matrix in which every optimal state (argmax of the fitness table) is an
absorbing self-loop.  Such a matrix decomposes into the canonical block
form

    P = [[I, 0],
         [R, Q]]

with Q the transitions among non-optimal states and R the transitions
from non-optimal states into the optimal set.  The probability of the
walk being non-optimal at iteration t is a row vector q_t over the
non-optimal states, advanced by q_{t+1}^T = q_t^T Q; its 1-norm is the
probability of not yet holding an optimum.

All values here are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AbsorbingViolationError,
    DimensionMismatchError,
    MalformedKernelError,
    StateLimitError,
)

# Stochasticity checks are absolute; built-in kernels round-trip well inside this.
ROW_SUM_TOL = 1e-12

# Dense row-major storage throughout; the cap guards accidental O(n^3) blow-ups.
DEFAULT_STATE_CAP = 5000


def _readonly(values, dtype):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateSpace:
    """Finite state set with a fitness table; every argmax state is optimal."""

    size: int
    fitness: np.ndarray
    optimal_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fitness", _readonly(self.fitness, np.float64))
        object.__setattr__(self, "optimal_mask", _readonly(self.optimal_mask, bool))
        if self.size < 2:
            raise ValueError("state space needs at least two states")
        if self.fitness.shape != (self.size,) or self.optimal_mask.shape != (self.size,):
            raise DimensionMismatchError("fitness and optimal_mask must have length `size`")
        if not np.all(np.isfinite(self.fitness)):
            raise ValueError("fitness values must be finite (no NaN/inf)")
        expected = self.fitness == self.fitness.max()
        if not np.array_equal(self.optimal_mask, expected):
            raise ValueError("optimal_mask must flag exactly the maximum-fitness states")

    @classmethod
    def from_fitness(cls, fitness) -> "StateSpace":
        fitness = np.asarray(fitness, dtype=np.float64)
        if fitness.ndim != 1:
            raise DimensionMismatchError("fitness must be a 1-d table")
        if fitness.size < 2:
            raise ValueError("state space needs at least two states")
        if not np.all(np.isfinite(fitness)):
            raise ValueError("fitness values must be finite (no NaN/inf)")
        return cls(size=int(fitness.size), fitness=fitness, optimal_mask=fitness == fitness.max())

    @property
    def optimal_states(self) -> np.ndarray:
        return np.flatnonzero(self.optimal_mask)

    @property
    def nonoptimal_states(self) -> np.ndarray:
        return np.flatnonzero(~self.optimal_mask)


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic transition matrix over a state space.

    Rows of optimal states may be arbitrary here so that raw heuristic
    kernels can be represented before :func:`lump_optimal`; absorbing-ness
    is enforced where it matters, in :func:`build_chain`.
    """

    matrix: np.ndarray
    state_cap: int = DEFAULT_STATE_CAP

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix, np.float64))
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError("transition matrix must be square")
        n = m.shape[0]
        if n > self.state_cap:
            raise StateLimitError(
                f"{n} states exceeds the dense-storage cap of {self.state_cap}; "
                "raise state_cap explicitly if this is intentional"
            )
        if not np.all(np.isfinite(m)):
            raise MalformedKernelError(int(np.argwhere(~np.isfinite(m))[0][0]), "non-finite entry")
        if np.any(m < 0.0) or np.any(m > 1.0 + ROW_SUM_TOL):
            bad = int(np.argwhere((m < 0.0) | (m > 1.0 + ROW_SUM_TOL))[0][0])
            raise MalformedKernelError(bad, "entries must lie in [0, 1]")
        sums = m.sum(axis=1)
        off = np.abs(sums - 1.0)
        if np.any(off > ROW_SUM_TOL):
            bad = int(np.argmax(off))
            raise MalformedKernelError(bad, f"row sums to {sums[bad]!r}, not 1")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class AbsorbingChain:
    """Canonical (Q, R) decomposition with index maps back to original states.

    ``non_index[i]`` is the original state behind transient position i and
    ``opt_index[j]`` likewise for absorbing positions; both ascend, so
    vectors over transient states are ordered by original state index.
    """

    q_block: np.ndarray
    r_block: np.ndarray
    non_index: np.ndarray
    opt_index: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q_block", _readonly(self.q_block, np.float64))
        object.__setattr__(self, "r_block", _readonly(self.r_block, np.float64))
        object.__setattr__(self, "non_index", _readonly(self.non_index, np.int64))
        object.__setattr__(self, "opt_index", _readonly(self.opt_index, np.int64))
        m, a = len(self.non_index), len(self.opt_index)
        if self.q_block.shape != (m, m) or self.r_block.shape != (m, a):
            raise DimensionMismatchError("Q/R block shapes do not match the index maps")
        if np.any(self.q_block < 0.0):
            raise MalformedKernelError(int(np.argwhere(self.q_block < 0.0)[0][0]), "negative Q entry")
        if m:
            row_sums = self.q_block.sum(axis=1) + self.r_block.sum(axis=1)
            if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
                bad = int(np.argmax(np.abs(row_sums - 1.0)))
                raise MalformedKernelError(
                    int(self.non_index[bad]), "Q-row plus R-row mass must sum to 1"
                )

    @property
    def num_transient(self) -> int:
        return len(self.non_index)

    @property
    def num_absorbing(self) -> int:
        return len(self.opt_index)


@dataclass(frozen=True)
class Distribution:
    """Row vector q_t of probability mass over non-optimal states.

    The 1-norm equals the probability of being non-optimal at iteration
    ``iteration``; it may be below 1 when the start distribution places
    mass on optimal states.
    """

    weights: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights, np.float64))
        if self.weights.ndim != 1:
            raise DimensionMismatchError("weights must be a 1-d vector")
        if self.iteration < 0:
            raise ValueError("iteration must be nonnegative")
        if np.any(self.weights < 0.0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and nonnegative")
        if self.weights.size and self.weights.sum() > 1.0 + ROW_SUM_TOL:
            raise ValueError("total mass exceeds 1")


def lump_optimal(kernel: TransitionKernel, space: StateSpace) -> TransitionKernel:
    """Replace every optimal state's row with a self-loop of probability 1.

    Non-optimal rows are untouched.  An already-absorbing kernel is
    returned unchanged (same object), making the operation idempotent.
    """
    _check_sizes(kernel, space)
    opt = space.optimal_states
    rows = kernel.matrix[opt]
    eye_rows = np.zeros_like(rows)
    eye_rows[np.arange(len(opt)), opt] = 1.0
    if np.array_equal(rows, eye_rows):
        return kernel
    out = kernel.matrix.copy()
    out[opt] = eye_rows
    return TransitionKernel(out, state_cap=kernel.state_cap)


def build_chain(kernel: TransitionKernel, space: StateSpace) -> AbsorbingChain:
    """Split an absorbing kernel into its canonical (Q, R) blocks.

    The index maps are stable and ascending, so re-assembling the blocks
    (see :func:`reconstruct_kernel`) reproduces the input matrix exactly.
    Optimal rows must already be absorbing; lump first if they are not.
    """
    _check_sizes(kernel, space)
    for state in space.optimal_states:
        row = kernel.matrix[state]
        if row[state] != 1.0 or row.sum() - row[state] != 0.0:
            raise AbsorbingViolationError(
                int(state), "optimal state is not absorbing; apply lump_optimal first"
            )
    non = space.nonoptimal_states
    opt = space.optimal_states
    return AbsorbingChain(
        q_block=kernel.matrix[np.ix_(non, non)],
        r_block=kernel.matrix[np.ix_(non, opt)],
        non_index=non,
        opt_index=opt,
    )


def reconstruct_kernel(chain: AbsorbingChain) -> TransitionKernel:
    """Inverse-permute the canonical blocks back into a full kernel."""
    n = chain.num_transient + chain.num_absorbing
    out = np.zeros((n, n))
    out[np.ix_(chain.non_index, chain.non_index)] = chain.q_block
    out[np.ix_(chain.non_index, chain.opt_index)] = chain.r_block
    out[chain.opt_index, chain.opt_index] = 1.0
    return TransitionKernel(out, state_cap=max(DEFAULT_STATE_CAP, n))


def iterate(chain: AbsorbingChain, dist: Distribution) -> Distribution:
    """Advance one step: q_{t+1}^T = q_t^T Q.

    Q is substochastic, so the total mass never increases.
    """
    if dist.weights.shape[0] != chain.num_transient:
        raise DimensionMismatchError(
            f"distribution has {dist.weights.shape[0]} entries, chain has "
            f"{chain.num_transient} non-optimal states"
        )
    return Distribution(weights=dist.weights @ chain.q_block, iteration=dist.iteration + 1)


def nonopt_probability(dist: Distribution) -> float:
    """1-norm of the weights: the probability of being non-optimal."""
    return float(dist.weights.sum())


def point_mass(chain: AbsorbingChain, state: int) -> Distribution:
    """Unit mass on one original state (zero vector if the state is optimal)."""
    w = np.zeros(chain.num_transient)
    pos = np.searchsorted(chain.non_index, state)
    if pos < chain.num_transient and chain.non_index[pos] == state:
        w[pos] = 1.0
    elif state not in chain.opt_index:
        raise DimensionMismatchError(f"state {state} is outside the chain's state space")
    return Distribution(weights=w, iteration=0)


def uniform_over_all(chain: AbsorbingChain) -> Distribution:
    """Uniform start over every state, restricted to the non-optimal ones.

    Each non-optimal state gets weight 1/n, so the total mass is m/n.
    """
    n = chain.num_transient + chain.num_absorbing
    return Distribution(weights=np.full(chain.num_transient, 1.0 / n), iteration=0)


def uniform_over_nonoptimal(chain: AbsorbingChain) -> Distribution:
    """Uniform start over the non-optimal states only (unit total mass)."""
    m = chain.num_transient
    w = np.full(m, 1.0 / m) if m else np.zeros(0)
    return Distribution(weights=w, iteration=0)


def _check_sizes(kernel: TransitionKernel, space: StateSpace):
    if kernel.size != space.size:
        raise DimensionMismatchError(
            f"kernel is {kernel.size}x{kernel.size} but the state space has {space.size} states"
        )
