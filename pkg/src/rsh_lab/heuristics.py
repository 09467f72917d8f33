"""Exact transition kernels of the built-in random-walk heuristics.

Both heuristics propose a +/-1 move on the integer domain {0..n-1} and
differ only in selection: rsh1 is elitist (keeps the incumbent unless
the proposal strictly improves fitness), rsh2 additionally accepts a
non-improving proposal with a fixed probability.  Out-of-domain
proposals at the boundary simply do not happen; their mass folds into
staying put.  Optimal states are emitted pre-lumped as self-loops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain_core import DEFAULT_STATE_CAP, StateSpace, TransitionKernel
from .errors import ProblemFormatError, StateLimitError

DEFAULT_DOMAIN_SIZE = 101
DEFAULT_STEP_PROB = 0.01
DEFAULT_ACCEPT_WORSE_PROB = 0.5

BUILTIN_FITNESS = {
    "square": lambda x: x**2,
    "square10": lambda x: 10.0 * x**2,
    "shifted_square": lambda x: (x - 49.0) ** 2,
}


@dataclass(frozen=True)
class ProblemSpec:
    """A fitness table over the integer domain {0, ..., domain_size - 1}."""

    domain_size: int
    fitness_values: np.ndarray

    def __post_init__(self):
        values = np.array(self.fitness_values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "fitness_values", values)
        if self.domain_size < 2:
            raise ProblemFormatError("domain_size", "must be at least 2")
        if values.shape != (self.domain_size,):
            raise ProblemFormatError(
                "fitness", f"expected {self.domain_size} values, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ProblemFormatError("fitness", "values must be finite (no NaN/inf)")

    def state_space(self) -> StateSpace:
        return StateSpace.from_fitness(self.fitness_values)


@dataclass(frozen=True)
class WalkParams:
    """Proposal and acceptance probabilities of the random walk.

    ``step_prob`` is the chance of proposing each neighbour;
    ``accept_worse_prob`` is the chance a non-improving proposal is
    still taken (0 reproduces elitist selection).
    """

    step_prob: float = DEFAULT_STEP_PROB
    accept_worse_prob: float = DEFAULT_ACCEPT_WORSE_PROB

    def __post_init__(self):
        if not (0.0 < self.step_prob <= 0.5):
            raise ValueError("step_prob must lie in (0, 0.5]")
        if not (0.0 <= self.accept_worse_prob <= 1.0):
            raise ValueError("accept_worse_prob must lie in [0, 1]")


def builtin_problem(name: str, domain_size: int = DEFAULT_DOMAIN_SIZE) -> ProblemSpec:
    """Instantiate one of the named built-in fitness tables."""
    try:
        fn = BUILTIN_FITNESS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_FITNESS))
        raise ProblemFormatError("builtin", f"unknown name {name!r}; expected one of {known}")
    x = np.arange(domain_size, dtype=np.float64)
    return ProblemSpec(domain_size=domain_size, fitness_values=fn(x))


def load_problem(source) -> ProblemSpec:
    """Read a problem definition from a JSON file or an already-parsed dict.

    Accepted forms (exact field names):
      {"domain_size": n, "fitness": [f0, ..., f_{n-1}]}
      {"domain_size": n, "builtin": "square" | "square10" | "shifted_square"}
    """
    if isinstance(source, (str, Path)):
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ProblemFormatError("file", f"cannot read {source}: {exc}")
        except json.JSONDecodeError as exc:
            raise ProblemFormatError("file", f"invalid JSON in {source}: {exc}")
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ProblemFormatError("file", "top-level JSON value must be an object")
    if "domain_size" not in doc:
        raise ProblemFormatError("domain_size", "missing required field")
    try:
        n = int(doc["domain_size"])
    except (TypeError, ValueError):
        raise ProblemFormatError("domain_size", "must be an integer")
    has_fitness = "fitness" in doc
    has_builtin = "builtin" in doc
    if has_fitness == has_builtin:
        raise ProblemFormatError("fitness", "provide exactly one of 'fitness' or 'builtin'")
    if has_builtin:
        return builtin_problem(str(doc["builtin"]), domain_size=n)
    values = doc["fitness"]
    if not isinstance(values, (list, tuple)):
        raise ProblemFormatError("fitness", "must be an array of numbers")
    return ProblemSpec(domain_size=n, fitness_values=np.asarray(values, dtype=np.float64))


def kernel_rsh1(problem: ProblemSpec, params: WalkParams = WalkParams()) -> TransitionKernel:
    """Kernel of the elitist walk: only strictly improving moves are taken.

    ``params.accept_worse_prob`` is ignored; elitist selection never
    accepts a worse state.
    """
    return _walk_kernel(problem, params.step_prob, 0.0)


def kernel_rsh2(problem: ProblemSpec, params: WalkParams = WalkParams()) -> TransitionKernel:
    """Kernel of the non-elitist walk.

    Improving proposals are always taken; a proposed non-improving
    neighbour (including equal fitness) is taken with probability
    ``accept_worse_prob``, otherwise the walker stays where it is.
    """
    return _walk_kernel(problem, params.step_prob, params.accept_worse_prob)


def _walk_kernel(problem: ProblemSpec, step_prob: float, accept_worse: float) -> TransitionKernel:
    n = problem.domain_size
    if n > DEFAULT_STATE_CAP:
        raise StateLimitError(
            f"domain_size {n} exceeds the dense-storage cap of {DEFAULT_STATE_CAP}"
        )
    f = problem.fitness_values
    optimal = f == f.max()
    matrix = np.zeros((n, n))
    for x in range(n):
        if optimal[x]:
            matrix[x, x] = 1.0
            continue
        outgoing = 0.0
        for y in (x - 1, x + 1):
            if 0 <= y < n:
                if f[y] > f[x]:
                    matrix[x, y] = step_prob
                else:
                    matrix[x, y] = step_prob * accept_worse
                outgoing += matrix[x, y]
        matrix[x, x] = 1.0 - outgoing
    return TransitionKernel(matrix)
