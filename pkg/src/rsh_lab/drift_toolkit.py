"""Drift computations and bound certificates for hitting/staying times.

For a nonnegative potential d over non-optimal states (zero on optimal
states by convention), three drifts are defined:

  point-wise   D(x)     = d(x) - sum_y d(y) P(x, y)      = ((I - Q) d)(x)
  average      Dbar_t   = q_t^T (I - Q) d / ||q_t||_1
  backward     B(y)     = d(y) - sum_x d(x) P(x, y)      = (d^T (I - Q))(y)

Certificates: average (or point-wise) drift >= 1 at every iteration
bounds the expected hitting time from above by d(q0); <= 1 bounds it
from below.  Backward drift >= 1 bounds the staying time above by d
elementwise; <= 1 bounds it below.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .chain_core import AbsorbingChain, Distribution
from .errors import DimensionMismatchError, ProblemFormatError

# Drift values are O(1) by design of the certificates, so the
# hypothesis comparison against 1 uses an absolute tolerance.
HYPOTHESIS_TOL = 1e-9

MASS_UNDERFLOW = 1e-300

# Residual mass below this fraction of the initial mass makes a
# finite-horizon average-drift certificate count as complete.
RESIDUAL_MASS_FRACTION = 1e-12

CERTIFICATE_KINDS = ("upper_hitting", "lower_hitting", "upper_staying", "lower_staying", "none")

MODES = (
    "avg_upper",
    "avg_lower",
    "pointwise_upper",
    "pointwise_lower",
    "backward_upper",
    "backward_lower",
)


@dataclass(frozen=True)
class DriftFunction:
    """Nonnegative potential over the non-optimal states, in ascending
    original-state order."""

    d: np.ndarray

    def __post_init__(self):
        values = np.array(self.d, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "d", values)
        if values.ndim != 1:
            raise DimensionMismatchError("drift function must be a 1-d vector")
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("drift values must be finite and nonnegative")


@dataclass(frozen=True)
class AverageDriftCurve:
    """Average drift per iteration; ``truncated`` marks an underflow stop."""

    values: tuple
    truncated: bool = False


@dataclass(frozen=True)
class DriftReport:
    """Drift vectors plus the certificate outcome of one hypothesis check.

    ``certificate`` is one of upper_hitting / lower_hitting /
    upper_staying / lower_staying / none.  ``bound`` is the scalar d(q0)
    for hitting certificates and the full d vector for staying ones.
    ``horizon_status`` is "horizon-limited" when an average-drift
    hypothesis was only checkable up to the horizon with non-negligible
    mass left over.
    """

    mode: str
    pointwise: np.ndarray
    backward: np.ndarray
    average_by_t: tuple
    certificate: str
    bound: Optional[object]
    hypothesis_margin: float
    violator_state: Optional[int] = None
    violator_iteration: Optional[int] = None
    horizon_status: Optional[str] = None

    def __post_init__(self):
        if self.certificate not in CERTIFICATE_KINDS:
            raise ValueError(f"certificate must be one of {CERTIFICATE_KINDS}")
        if self.certificate != "none" and not self.hypothesis_margin >= -HYPOTHESIS_TOL:
            raise ValueError("a granted certificate cannot carry a failing margin")

    def granted(self) -> bool:
        return self.certificate != "none"

    def to_dict(self) -> dict:
        bound = self.bound
        if isinstance(bound, np.ndarray):
            bound = [float(v) for v in bound]
        margin = self.hypothesis_margin
        return {
            "mode": self.mode,
            "pointwise": [float(v) for v in self.pointwise],
            "backward": [float(v) for v in self.backward],
            "average_by_t": [[int(t), float(v)] for t, v in self.average_by_t],
            "certificate": self.certificate,
            "bound": bound,
            "hypothesis_margin": margin if math.isfinite(margin) else None,
            "violator_state": self.violator_state,
            "violator_iteration": self.violator_iteration,
            "horizon_status": self.horizon_status,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def load_drift(source) -> DriftFunction:
    """Read a drift function from JSON: {"d": [v0, ..., v_{m-1}]}.

    Entries are indexed over non-optimal states in ascending original
    state order.
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
    if not isinstance(doc, dict) or "d" not in doc:
        raise ProblemFormatError("d", "missing required field")
    values = doc["d"]
    if not isinstance(values, (list, tuple)):
        raise ProblemFormatError("d", "must be an array of numbers")
    return DriftFunction(d=np.asarray(values, dtype=np.float64))


def load_drift_report(path) -> dict:
    """Re-parse a drift_report.json file."""
    with open(Path(path)) as fh:
        return json.load(fh)


def _check_dims(chain: AbsorbingChain, d: DriftFunction):
    if d.d.shape[0] != chain.num_transient:
        raise DimensionMismatchError(
            f"drift function has {d.d.shape[0]} entries, chain has "
            f"{chain.num_transient} non-optimal states"
        )


_CHUNK = 1024


def pointwise_drift(chain: AbsorbingChain, d: DriftFunction) -> np.ndarray:
    """One-step expected decrease of d from each non-optimal state: (I - Q) d.

    Evaluated in difference form, sum_y Q(x,y) (d(x) - d(y)) plus the
    absorbing leak times d(x): identical algebraically, but the rounding
    scales with the potential's local increments instead of its absolute
    size, which matters for steep potentials.
    """
    _check_dims(chain, d)
    q = chain.q_block
    values = d.d
    m = values.shape[0]
    out = np.empty(m)
    for start in range(0, m, _CHUNK):
        stop = min(start + _CHUNK, m)
        block = q[start:stop]
        diffs = values[start:stop, None] - values[None, :]
        leak = 1.0 - block.sum(axis=1)
        out[start:stop] = (block * diffs).sum(axis=1) + leak * values[start:stop]
    return out


def backward_drift(chain: AbsorbingChain, d: DriftFunction) -> np.ndarray:
    """Dual drift measuring net flow into each state: d^T (I - Q).

    Same difference-form evaluation as :func:`pointwise_drift`, column-wise.
    """
    _check_dims(chain, d)
    q = chain.q_block
    values = d.d
    m = values.shape[0]
    out = np.empty(m)
    for start in range(0, m, _CHUNK):
        stop = min(start + _CHUNK, m)
        cols = q[:, start:stop]
        diffs = values[None, start:stop] - values[:, None]
        absent = 1.0 - cols.sum(axis=0)
        out[start:stop] = (cols * diffs).sum(axis=0) + absent * values[start:stop]
    return out


def average_drift(
    chain: AbsorbingChain, d: DriftFunction, q0: Distribution, horizon: int
) -> AverageDriftCurve:
    """Point-wise drift averaged under the conditional law of the chain
    given non-optimality, for t = 0..horizon.

    Iterations where the mass is exactly zero are omitted (the average is
    undefined there); the curve stops early, flagged, once the mass
    underflows.
    """
    _check_dims(chain, d)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if q0.weights.shape[0] != chain.num_transient:
        raise DimensionMismatchError("distribution does not match the chain")
    if float(q0.weights.sum()) <= 0.0:
        raise ValueError("initial distribution has no non-optimal mass")
    delta = pointwise_drift(chain, d)
    weights = q0.weights.copy()
    rows = []
    truncated = False
    for t in range(horizon + 1):
        mass = float(weights.sum())
        if mass == 0.0:
            break
        if mass < MASS_UNDERFLOW:
            truncated = True
            break
        rows.append((t, float(weights @ delta) / mass))
        if t < horizon:
            weights = weights @ chain.q_block
    return AverageDriftCurve(values=tuple(rows), truncated=truncated)


def certify(
    chain: AbsorbingChain,
    d: DriftFunction,
    q0: Distribution,
    horizon: int,
    mode: str,
) -> DriftReport:
    """Check one drift hypothesis and emit the corresponding bound.

    Modes: avg_upper / avg_lower (average drift vs 1 over t <= horizon),
    pointwise_upper / pointwise_lower (point-wise drift vs 1 everywhere),
    backward_upper / backward_lower (backward drift vs 1 everywhere).
    A failed hypothesis is a value, not an error: the report carries
    certificate="none" with the violating state or iteration and margin.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    _check_dims(chain, d)
    delta = pointwise_drift(chain, d)
    nabla = backward_drift(chain, d)
    upper = mode.endswith("_upper")

    average_rows: tuple = ()
    horizon_status = None
    if mode.startswith("avg"):
        if float(q0.weights.sum()) <= 0.0:
            raise ValueError("initial distribution has no non-optimal mass")
        rows, margin, violator_t, final_mass = _scan_average_hypothesis(
            chain, q0, horizon, delta, upper
        )
        average_rows = rows
        ok = margin >= -HYPOTHESIS_TOL
        if ok:
            initial_mass = float(q0.weights.sum())
            complete = final_mass <= RESIDUAL_MASS_FRACTION * initial_mass
            horizon_status = "full" if complete else "horizon-limited"
        kind = "upper_hitting" if upper else "lower_hitting"
        return DriftReport(
            mode=mode,
            pointwise=delta,
            backward=nabla,
            average_by_t=average_rows,
            certificate=kind if ok else "none",
            bound=float(q0.weights @ d.d) if ok else None,
            hypothesis_margin=margin,
            violator_iteration=None if ok else violator_t,
            horizon_status=horizon_status,
        )

    if mode.startswith("pointwise"):
        vector, kind = delta, ("upper_hitting" if upper else "lower_hitting")
        scalar_bound = True
    else:
        vector, kind = nabla, ("upper_staying" if upper else "lower_staying")
        scalar_bound = False
    margin, violator_pos = _margin_over_states(vector, upper)
    ok = margin >= -HYPOTHESIS_TOL
    if scalar_bound:
        bound = float(q0.weights @ d.d) if ok else None
    else:
        bound = d.d if ok else None
    return DriftReport(
        mode=mode,
        pointwise=delta,
        backward=nabla,
        average_by_t=average_rows,
        certificate=kind if ok else "none",
        bound=bound,
        hypothesis_margin=margin,
        violator_state=None if ok else int(chain.non_index[violator_pos]),
        horizon_status="full" if ok else None,
    )


def _scan_average_hypothesis(chain, q0, horizon, delta, upper):
    """Check the average drift against 1 for t = 0..horizon.

    Scans the full horizon on success (iterations with underflowed mass
    hold vacuously); stops at the first violation, whose margin is by
    construction the minimum over everything checked.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    weights = q0.weights.copy()
    rows = []
    margin = math.inf
    violator_t = None
    for t in range(horizon + 1):
        mass = float(weights.sum())
        if mass < MASS_UNDERFLOW:
            break
        value = float(weights @ delta) / mass
        rows.append((t, value))
        step_margin = value - 1.0 if upper else 1.0 - value
        if step_margin < margin:
            margin = step_margin
        if margin < -HYPOTHESIS_TOL:
            violator_t = t
            break
        if t < horizon:
            weights = weights @ chain.q_block
    return tuple(rows), margin, violator_t, float(weights.sum())


def _margin_over_states(vector, upper):
    if vector.size == 0:
        return math.inf, None
    if upper:
        pos = int(np.argmin(vector))
        return float(vector[pos] - 1.0), pos
    pos = int(np.argmax(vector))
    return float(1.0 - vector[pos]), pos
