"""Exact quantities of an absorbing chain: spectral radius, convergence
verdicts, hitting/staying times, and average-convergence-rate bounds.

The average convergence rate over t iterations is

    -(1/t) * ln(||q_t||_1 / ||q_0||_1),

bounded below by -(1/t) ln||(Q^T)^t||_1 (and asymptotically by
-ln rho(Q)) and above, when Q is invertible, by
(1/t) ln||((Q^T)^{-1})^t||_1 (asymptotically ln rho(Q^{-1})).
"""

from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from numba import njit, prange
from scipy.linalg import LinAlgError, LinAlgWarning, lu_factor, lu_solve
from scipy.special import logsumexp

from .chain_core import AbsorbingChain, Distribution, StateSpace, TransitionKernel
from .errors import (
    AbsorbingViolationError,
    CancelledError,
    NotConvergentError,
    SpectralNoConvergenceError,
)

# rho below this is treated as < 1; guards declaring convergence on a
# numerically-1 radius.
CONVERGENCE_MARGIN = 1e-9

HITTING_RESIDUAL_TOL = 1e-8

# ||Q||_1 * ||Q^{-1}||_1 above this marks Q as effectively singular for
# the upper rate bounds.
CONDITION_LIMIT = 1e12

UPPER_ABSENT_REASON = "q-singular"

MASS_UNDERFLOW = 1e-300

CancelToken = Optional[Callable[[], bool]]


def _check_cancel(cancel: CancelToken):
    if cancel is not None and cancel():
        raise CancelledError("solve cancelled")


@dataclass(frozen=True)
class ConvergenceVerdict:
    """Outcome of a convergence test.

    ``witness_k`` (reachability method) is the largest number of steps any
    state needs before it can first reach the optimal set; ``stuck_states``
    lists states with no path there at all.
    """

    convergent: bool
    method: str
    spectral_radius: Optional[float] = None
    witness_k: Optional[int] = None
    stuck_states: tuple = ()

    def __post_init__(self):
        if self.method not in ("spectral", "reachability"):
            raise ValueError("method must be 'spectral' or 'reachability'")
        if not self.convergent:
            if self.method == "reachability" and not self.stuck_states:
                raise ValueError("a non-convergent reachability verdict needs stuck states")
            if self.method == "spectral" and (
                self.spectral_radius is None or self.spectral_radius < 1.0 - CONVERGENCE_MARGIN
            ):
                raise ValueError("a non-convergent spectral verdict needs a radius at 1")


@dataclass(frozen=True)
class HittingTimes:
    """Expected hitting times h (rows of N @ 1) and staying times s (1^T N)."""

    h: np.ndarray
    staying: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64)
        s = np.array(self.staying, dtype=np.float64)
        h.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "staying", s)
        if h.shape != s.shape:
            raise ValueError("h and staying must have equal length")
        if h.size and (h.min() < 1.0 - 1e-9 or s.min() < 1.0 - 1e-9):
            raise ValueError("every expected time is at least one step")
        total_h, total_s = float(h.sum()), float(s.sum())
        if abs(total_h - total_s) > 1e-6 * max(total_h, 1.0):
            raise ValueError(
                "total hitting time and total staying time must agree "
                f"(got {total_h!r} vs {total_s!r})"
            )


@dataclass(frozen=True)
class RateBounds:
    """Average convergence rate at one horizon together with its bounds.

    ``finite_upper``/``asymptotic_upper`` are absent (None) with
    ``upper_absent_reason`` set when Q is singular or too ill-conditioned.
    ``truncated`` flags a horizon cut short because the non-optimal mass
    underflowed; all values then refer to ``horizon``.
    """

    horizon: int
    exact_rate: float
    finite_lower: float
    asymptotic_lower: float
    finite_upper: Optional[float] = None
    asymptotic_upper: Optional[float] = None
    upper_absent_reason: Optional[str] = None
    truncated: bool = False
    requested_horizon: Optional[int] = None

    def to_dict(self) -> dict:
        def _num(v):
            if v is None or not math.isfinite(v):
                return None
            return v

        return {
            "horizon": self.horizon,
            "exact_rate": _num(self.exact_rate),
            "finite_lower": _num(self.finite_lower),
            "asymptotic_lower": _num(self.asymptotic_lower),
            "finite_upper": _num(self.finite_upper),
            "asymptotic_upper": _num(self.asymptotic_upper),
            "upper_absent_reason": self.upper_absent_reason,
            "truncated": self.truncated,
        }


def spectral_radius(
    chain: AbsorbingChain,
    tol: float = 1e-10,
    max_sweeps: int = 1_000_000,
    cancel: CancelToken = None,
) -> float:
    """Spectral radius of the Q block, accurate to ``tol``.

    Power iteration with Collatz-Wielandt brackets (valid because Q is
    nonnegative) runs first; when it stagnates or exhausts its budget --
    which happens whenever Q is defective or its eigenvalues cluster --
    the estimate switches to Gelfand's formula ||Q^{2^j}||_1^{1/2^j}
    evaluated by scaled repeated squaring.  Raises
    :class:`SpectralNoConvergenceError` with the best bracket if the sweep
    cap is exhausted before either method settles.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = chain.q_block
    m = q.shape[0]
    if m == 0:
        return 0.0
    cap = min(1.0, float(np.max(q.sum(axis=1))))  # rho <= ||Q||_inf <= 1
    value, bracket, sweeps_used = _power_bracket(q, tol, min(max_sweeps, 3000), cancel)
    if value is not None:
        return min(max(value, 0.0), cap)
    budget = max_sweeps - sweeps_used
    value, status = _gelfand_radius(q, tol, max_squarings=budget, cancel=cancel)
    if status == "settled":
        return min(max(value, 0.0), cap)
    # The scaled squaring collapsed or stalled: the entries of Q^t span a
    # wider dynamic range than one common scale factor can represent
    # (defective Q).  Redo the squarings in log space, where nonnegative
    # matrices lose nothing.
    value = _gelfand_radius_log(q, tol, max_squarings=budget, cancel=cancel)
    if value is not None:
        return min(max(value, 0.0), cap)
    raise SpectralNoConvergenceError(bracket, f"no convergence within {max_sweeps} sweeps")


def _power_bracket(q, tol, budget, cancel):
    """Power sweeps with bracket tracking; returns (value|None, bracket, sweeps)."""
    m = q.shape[0]
    v = np.ones(m)
    lo, hi = 0.0, 1.0
    prev_est = None
    stagnant = 0
    for sweep in range(budget):
        if sweep % 64 == 0:
            _check_cancel(cancel)
        w = q @ v
        top = float(w.max())
        if top == 0.0:
            return 0.0, (0.0, 0.0), sweep + 1
        if np.any(w <= 0.0):
            # Brackets need a strictly positive iterate; hand over.
            return None, (lo, hi), sweep + 1
        ratios = w / v
        hi = min(hi, float(ratios.max()))
        lo = max(lo, float(ratios.min()))
        est = hi
        if hi - lo <= tol:
            return 0.5 * (lo + hi), (lo, hi), sweep + 1
        if prev_est is not None:
            rel_change = abs(est - prev_est) / max(est, 1e-300)
            if rel_change < tol / 10.0 and hi - lo > tol:
                stagnant += 1
                if stagnant >= 100:
                    return None, (lo, hi), sweep + 1
            else:
                stagnant = 0
        prev_est = est
        v = w / top
    return None, (lo, hi), budget


def _min_squarings(m, tol):
    # ||M^t||^{1/t} - rho can decay as slowly as rho * m ln(t) / t for a
    # size-m Jordan block, so the stop rule must not engage before 2^j
    # dwarfs m/tol; early estimates often sit on an exact plateau.
    return min(max(20, math.ceil(math.log2(max(2, m) * 50.0 / tol))), 900)


def _gelfand_radius(matrix, tol, max_squarings=200, cancel=None):
    """rho estimate via ||M^{2^j}||_1^{1/2^j}, rescaled after every squaring.

    Valid for any square matrix.  Returns (value, status) with status
    "settled" (two consecutive estimates within tol/4 after the plateau
    guard), "collapsed" (the normalized square underflowed to the zero
    matrix, so the value is the last, possibly loose, upper estimate), or
    "exhausted" (squaring budget spent).  ||M^t||^{1/t} >= rho always, so
    even a non-settled value upper-bounds the radius.
    """
    a = np.array(matrix, dtype=np.float64)
    norm = float(np.abs(a).sum(axis=0).max())
    if norm == 0.0:
        return 0.0, "settled"
    log_norm = math.log(norm)
    a /= norm
    t = 1.0
    est = math.exp(log_norm / t)
    settled = 0
    min_sq = _min_squarings(a.shape[0], tol)
    for j in range(max(0, min(max_squarings, 1000))):
        _check_cancel(cancel)
        a = a @ a
        norm = float(np.abs(a).sum(axis=0).max())
        if norm == 0.0:
            return est, "collapsed"
        log_norm = 2.0 * log_norm + math.log(norm)
        a /= norm
        t *= 2.0
        new_est = math.exp(log_norm / t)
        if j + 1 >= min_sq and abs(new_est - est) <= max(tol / 4.0, abs(new_est) * 4e-15):
            settled += 1
            if settled >= 2:
                return new_est, "settled"
        else:
            settled = 0
        est = new_est
    return est, "exhausted"


@njit(cache=True, parallel=True)
def _log_square(log_mat):
    """Log-space matrix self-product: out[i,j] = logsumexp_k(L[i,k] + L[k,j]).

    Exact up to float rounding regardless of the dynamic range of the
    underlying nonnegative matrix; zero entries are -inf.
    """
    m = log_mat.shape[0]
    out = np.empty((m, m))
    for i in prange(m):
        for j in range(m):
            peak = -np.inf
            for k in range(m):
                v = log_mat[i, k] + log_mat[k, j]
                if v > peak:
                    peak = v
            if peak == -np.inf:
                out[i, j] = -np.inf
            else:
                acc = 0.0
                for k in range(m):
                    acc += np.exp(log_mat[i, k] + log_mat[k, j] - peak)
                out[i, j] = peak + np.log(acc)
    return out


def _gelfand_radius_log(matrix, tol, max_squarings=200, cancel=None):
    """Gelfand squaring for a nonnegative matrix carried entirely in log
    space, immune to the scale collapse of the linear representation."""
    a = np.asarray(matrix, dtype=np.float64)
    if np.any(a < 0.0):
        raise ValueError("log-space squaring needs a nonnegative matrix")
    with np.errstate(divide="ignore"):
        log_mat = np.log(a)
    log_norm = float(logsumexp(log_mat, axis=0).max())
    if log_norm == -math.inf:
        return 0.0
    t = 1.0
    est = math.exp(log_norm / t)
    settled = 0
    min_sq = _min_squarings(a.shape[0], tol)
    for j in range(max(0, min(max_squarings, 1000))):
        _check_cancel(cancel)
        log_mat = _log_square(log_mat)
        log_norm = float(logsumexp(log_mat, axis=0).max())
        if log_norm == -math.inf:
            return 0.0  # genuinely nilpotent
        t *= 2.0
        new_est = math.exp(log_norm / t)
        if j + 1 >= min_sq and abs(new_est - est) <= max(tol / 4.0, abs(new_est) * 4e-15):
            settled += 1
            if settled >= 2:
                return new_est
        else:
            settled = 0
        est = new_est
    return None


def check_convergence_spectral(chain: AbsorbingChain, tol: float = 1e-10) -> ConvergenceVerdict:
    """Convergent iff rho(Q) < 1.

    A computed radius below 1 - 1e-9 certifies convergence outright.  At
    or above that margin the radius is numerically indistinguishable from
    1 even though the true value may be 1 - epsilon for epsilon far below
    float resolution (metastable chains), so the boundary is resolved
    exactly instead: for a substochastic nonnegative Q, rho(Q) = 1 if and
    only if some set of states is closed under the support of Q and leaks
    no probability to the absorbing block.
    """
    rho = spectral_radius(chain, tol=tol)
    if rho < 1.0 - CONVERGENCE_MARGIN:
        convergent = True
    else:
        convergent = not _has_zero_leak_closed_class(chain.q_block)
    return ConvergenceVerdict(
        convergent=convergent,
        method="spectral",
        spectral_radius=rho,
    )


def _has_zero_leak_closed_class(q_block) -> bool:
    """Exact test for rho(Q) = 1: does some subset of states keep all its
    transition mass inside Q forever?

    States whose Q-row sums below 1 leak; any state that can reach a
    leaking state through the support of Q eventually leaks too.  A
    non-leaking remainder is a stochastic closed class with Perron root 1.
    """
    m = q_block.shape[0]
    if m == 0:
        return False
    leaks = np.flatnonzero(1.0 - q_block.sum(axis=1) > 1e-12)
    if len(leaks) == 0:
        return True
    support = q_block > 0.0
    reached = np.zeros(m, dtype=bool)
    queue = deque(int(i) for i in leaks)
    reached[leaks] = True
    while queue:
        y = queue.popleft()
        for x in np.flatnonzero(support[:, y]):
            if not reached[x]:
                reached[x] = True
                queue.append(int(x))
    return not bool(reached.all())


def check_convergence_reachability(kernel: TransitionKernel, space: StateSpace) -> ConvergenceVerdict:
    """Convergent iff every non-optimal state has a positive-probability
    path into the optimal set.

    Runs a reverse breadth-first search from the optimal states over the
    support graph of the kernel; ``witness_k`` is the deepest level, i.e.
    the worst-case number of steps before the optimum is reachable.
    """
    matrix = kernel.matrix
    n = space.size
    for state in space.optimal_states:
        if matrix[state, state] != 1.0:
            raise AbsorbingViolationError(
                int(state), "optimal state is not absorbing; lump the kernel first"
            )
    support = matrix > 0.0
    depth = np.full(n, -1, dtype=np.int64)
    queue = deque()
    for state in space.optimal_states:
        depth[state] = 0
        queue.append(int(state))
    while queue:
        y = queue.popleft()
        for x in np.flatnonzero(support[:, y]):
            if depth[x] < 0:
                depth[x] = depth[y] + 1
                queue.append(int(x))
    non = space.nonoptimal_states
    stuck = tuple(int(x) for x in non if depth[x] < 0)
    if stuck:
        return ConvergenceVerdict(convergent=False, method="reachability", stuck_states=stuck)
    witness = int(depth[non].max()) if len(non) else 0
    return ConvergenceVerdict(convergent=True, method="reachability", witness_k=witness)


def hitting_times(chain: AbsorbingChain) -> HittingTimes:
    """Solve (I - Q) h = 1 and (I - Q)^T s = 1 by one LU factorization.

    h(x) is the expected number of iterations to first reach the optimal
    set from x; s(y) is the expected number of visits to y summed over all
    non-optimal starting states.  Requires a convergent chain; a singular
    or wildly inconsistent system raises :class:`NotConvergentError`.
    """
    m = chain.num_transient
    if m == 0:
        return HittingTimes(h=np.zeros(0), staying=np.zeros(0))
    a = np.eye(m) - chain.q_block
    ones = np.ones(m)
    try:
        with warnings.catch_warnings():
            # singularity is detected by the residual check below
            warnings.simplefilter("ignore", LinAlgWarning)
            lu = lu_factor(a)
            h = lu_solve(lu, ones)
            s = lu_solve(lu, ones, trans=1)
    except LinAlgError as exc:
        raise NotConvergentError(
            "I - Q is singular; run a convergence check before asking for hitting times"
        ) from exc
    res_h = float(np.abs(a @ h - ones).max()) if m else 0.0
    res_s = float(np.abs(a.T @ s - ones).max()) if m else 0.0
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(s))) or max(res_h, res_s) > HITTING_RESIDUAL_TOL:
        raise NotConvergentError(
            "hitting-time system is numerically singular "
            f"(residual {max(res_h, res_s):.3g}); the chain is either not convergent "
            "or so close to the boundary that its expected times exceed the "
            "double-precision solvable range -- run a convergence check first"
        )
    return HittingTimes(h=h, staying=s)


def forward_backward_identity(times: HittingTimes) -> float:
    """Relative gap |sum(h) - sum(s)| / sum(h); zero for empty chains."""
    total_h = float(times.h.sum())
    total_s = float(times.staying.sum())
    if total_h == 0.0:
        return abs(total_s)
    return abs(total_h - total_s) / total_h


class _ScaledPower:
    """Tracks M^t in the form A * e^a with ||A||_inf kept at 1.

    Renormalizing after every multiply keeps intermediates representable
    no matter how fast M^t decays or blows up; ln||M^t||_inf is read off
    as the accumulated log scale.
    """

    def __init__(self, matrix):
        self.base = np.asarray(matrix, dtype=np.float64)
        self.mat = np.eye(self.base.shape[0])
        self.log_scale = 0.0
        self.zero = self.base.shape[0] == 0

    def multiply(self, other_mat, other_log):
        if self.zero:
            return
        prod = self.mat @ other_mat
        norm = float(np.abs(prod).sum(axis=1).max())
        if norm == 0.0:
            self.zero = True
            return
        self.mat = prod / norm
        self.log_scale += other_log + math.log(norm)

    def log_inf_norm(self) -> float:
        if self.zero:
            return -math.inf
        return self.log_scale + math.log(float(np.abs(self.mat).sum(axis=1).max()))


def _log_inf_norm_power(matrix, t: int, cancel: CancelToken = None) -> float:
    """ln||M^t||_inf by binary exponentiation of the scaled representation."""
    if t < 0:
        raise ValueError("power must be nonnegative")
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[0] == 0:
        return -math.inf
    acc = _ScaledPower(matrix)
    norm = float(np.abs(matrix).sum(axis=1).max())
    if norm == 0.0:
        return -math.inf if t > 0 else 0.0
    sq = matrix / norm
    sq_log = math.log(norm)
    e = t
    while e:
        _check_cancel(cancel)
        if e & 1:
            acc.multiply(sq, sq_log)
        e >>= 1
        if e:
            prod = sq @ sq
            n = float(np.abs(prod).sum(axis=1).max())
            if n == 0.0:
                # M^{2^j} vanished; any still-set bit zeroes the product.
                return -math.inf
            sq = prod / n
            sq_log = 2.0 * sq_log + math.log(n)
    return acc.log_inf_norm()


def _invert_q(q_block):
    """Q^{-1} with a 1-norm condition estimate; None when effectively singular."""
    m = q_block.shape[0]
    if m == 0:
        return None
    try:
        with warnings.catch_warnings():
            # a singular Q is an expected, handled outcome here
            warnings.simplefilter("ignore", LinAlgWarning)
            lu = lu_factor(q_block)
            inv = lu_solve(lu, np.eye(m))
    except LinAlgError:
        return None
    if not np.all(np.isfinite(inv)):
        return None
    cond = float(np.abs(q_block).sum(axis=0).max() * np.abs(inv).sum(axis=0).max())
    if cond >= CONDITION_LIMIT:
        return None
    return inv


def rate_bounds(
    chain: AbsorbingChain,
    q0: Distribution,
    horizon: int,
    tol: float = 1e-10,
    cancel: CancelToken = None,
) -> RateBounds:
    """Average convergence rate over ``horizon`` iterations plus its bounds.

    The exact rate comes from iterating the distribution; the finite-t
    bounds from norms of Q^t and (Q^{-1})^t (scaled binary exponentiation);
    the asymptotic ones from rho(Q) and rho(Q^{-1}).  If the mass
    underflows before the horizon, the result is truncated to the last
    representable t and flagged.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    mass0 = float(q0.weights.sum())
    if mass0 <= 0.0:
        raise ValueError("initial distribution has no non-optimal mass")
    q = chain.q_block
    weights = q0.weights.copy()
    mass = mass0
    effective_t = horizon
    for t in range(1, horizon + 1):
        if t % 256 == 0:
            _check_cancel(cancel)
        weights = weights @ q
        mass = float(weights.sum())
        if mass < MASS_UNDERFLOW:
            effective_t = t  # nothing representable beyond this point
            break
    truncated = effective_t < horizon
    exact = math.inf if mass <= 0.0 else max(0.0, -math.log(mass / mass0) / effective_t)

    log_qt = _log_inf_norm_power(q, effective_t, cancel)
    finite_lower = math.inf if log_qt == -math.inf else -log_qt / effective_t
    rho = spectral_radius(chain, tol=tol, cancel=cancel)
    asymptotic_lower = math.inf if rho == 0.0 else -math.log(rho)

    finite_upper = None
    asymptotic_upper = None
    reason = None
    inv = _invert_q(q)
    if inv is None:
        reason = UPPER_ABSENT_REASON
    else:
        log_inv = _log_inf_norm_power(inv, effective_t, cancel)
        finite_upper = log_inv / effective_t
        # ||(Q^-1)^t||^(1/t) >= rho(Q^-1) at every t, so even a non-settled
        # estimate keeps ln(rho_inv) a valid upper bound, just looser.
        rho_inv, _ = _gelfand_radius(inv, tol)
        if rho_inv <= 0.0:
            reason = UPPER_ABSENT_REASON
            finite_upper = None
        else:
            asymptotic_upper = math.log(rho_inv)

    return RateBounds(
        horizon=effective_t,
        exact_rate=exact,
        finite_lower=finite_lower,
        asymptotic_lower=asymptotic_lower,
        finite_upper=finite_upper,
        asymptotic_upper=asymptotic_upper,
        upper_absent_reason=reason,
        truncated=truncated,
        requested_horizon=horizon if truncated else None,
    )


def rate_curve(
    chain: AbsorbingChain,
    q0: Distribution,
    horizon: int,
    max_rows: int = 1000,
    cancel: CancelToken = None,
):
    """Sampled curve of (t, exact_rate, finite_lower, finite_upper).

    Rows are spaced ``stride = ceil(horizon / max_rows)`` apart.  The
    matrix powers advance incrementally by a precomputed Q^stride, so the
    whole curve costs about one matrix multiply per row.  ``finite_upper``
    entries are None when Q is singular.  The curve stops early if the
    non-optimal mass underflows.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    mass0 = float(q0.weights.sum())
    if mass0 <= 0.0:
        raise ValueError("initial distribution has no non-optimal mass")
    q = chain.q_block
    stride = max(1, math.ceil(horizon / max_rows))
    grid = list(range(stride, horizon + 1, stride))
    if grid and grid[-1] != horizon:
        grid.append(horizon)

    inv = _invert_q(q)

    def _power_rep(matrix, power):
        """Scaled representation of matrix**power."""
        rep = _ScaledPower(matrix)
        base = np.asarray(matrix, dtype=np.float64)
        n = float(np.abs(base).sum(axis=1).max())
        if n == 0.0:
            rep.zero = power > 0
            return rep
        normed, logn = base / n, math.log(n)
        e = power
        while e:
            if e & 1:
                rep.multiply(normed, logn)
            e >>= 1
            if e:
                prod = normed @ normed
                pn = float(np.abs(prod).sum(axis=1).max())
                if pn == 0.0:
                    rep.zero = True
                    break
                normed, logn = prod / pn, 2.0 * logn + math.log(pn)
        return rep

    q_acc = _ScaledPower(q)
    q_step = _power_rep(q, stride)
    inv_acc = _ScaledPower(inv) if inv is not None else None
    inv_step = _power_rep(inv, stride) if inv is not None else None

    rows = []
    weights = q0.weights.copy()
    t = 0
    prev_t = 0
    for target in grid:
        _check_cancel(cancel)
        while t < target:
            weights = weights @ q
            t += 1
        mass = float(weights.sum())
        gap = target - prev_t
        if gap == stride:
            _advance(q_acc, q_step)
            if inv is not None:
                _advance(inv_acc, inv_step)
        else:
            _advance(q_acc, _power_rep(q, gap))
            if inv is not None:
                _advance(inv_acc, _power_rep(inv, gap))
        prev_t = target
        log_qt = q_acc.log_inf_norm()
        finite_lower = math.inf if log_qt == -math.inf else -log_qt / target
        finite_upper = None
        if inv is not None and not inv_acc.zero:
            finite_upper = inv_acc.log_inf_norm() / target
        exact = math.inf if mass == 0.0 else -math.log(mass / mass0) / target
        rows.append((target, exact, finite_lower, finite_upper))
        if mass < MASS_UNDERFLOW:
            break
    return rows


def _advance(acc: _ScaledPower, step: _ScaledPower):
    if step.zero:
        acc.zero = True
        return
    if not acc.zero:
        acc.multiply(step.mat, step.log_scale)


@dataclass(frozen=True)
class AnalysisReport:
    """Aggregated exact-analysis results; serializes to report.json."""

    rho: float
    convergent: bool
    witness_k: Optional[int]
    hitting_times: Optional[list] = None
    staying_times: Optional[list] = None
    rate_bounds: Optional[dict] = None
    mean_hitting_time: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "convergent": self.convergent,
            "witness_k": self.witness_k,
            "hitting_times": self.hitting_times,
            "staying_times": self.staying_times,
            "rate_bounds": self.rate_bounds,
            "mean_hitting_time": self.mean_hitting_time,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def load_report(path) -> AnalysisReport:
    """Re-parse a report.json written by :meth:`AnalysisReport.to_json`."""
    with open(Path(path)) as fh:
        doc = json.load(fh)
    return AnalysisReport(
        rho=doc["rho"],
        convergent=doc["convergent"],
        witness_k=doc["witness_k"],
        hitting_times=doc["hitting_times"],
        staying_times=doc["staying_times"],
        rate_bounds=doc["rate_bounds"],
        mean_hitting_time=doc.get("mean_hitting_time"),
    )


RATE_CURVE_HEADER = "t,exact_rate,finite_lower,finite_upper"


def write_rate_curve_csv(rows, path):
    """Write rate_bounds.csv rows as produced by :func:`rate_curve`;
    absent or non-finite bounds become blank cells."""
    with open(path, "w") as fh:
        fh.write(RATE_CURVE_HEADER + "\n")
        for t, exact, lower, upper in rows:
            cells = [str(t)] + [
                "" if v is None or not math.isfinite(v) else repr(v)
                for v in (exact, lower, upper)
            ]
            fh.write(",".join(cells) + "\n")


def load_rate_curve_csv(path):
    """Rows of (t, exact_rate, finite_lower, finite_upper-or-None) as
    written to rate_bounds.csv; blank cells read back as None."""
    rows = []
    with open(Path(path)) as fh:
        header = fh.readline().strip()
        if header != RATE_CURVE_HEADER:
            raise ValueError(f"expected header {RATE_CURVE_HEADER!r}, got {header!r}")
        for line in fh:
            t, exact, lower, upper = line.strip().split(",")
            parse = lambda v: None if v == "" else float(v)
            rows.append((int(t), parse(exact), parse(lower), parse(upper)))
    return rows
