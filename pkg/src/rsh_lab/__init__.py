"""Absorbing-chain analysis of randomised search heuristics.

Exact convergence verdicts, average convergence rates with bounds,
fundamental-matrix hitting/staying times, drift-based bound
certificates, and seeded Monte Carlo validation of the built-in walk
heuristics.
"""

from .chain_core import (
    AbsorbingChain,
    DEFAULT_STATE_CAP,
    Distribution,
    StateSpace,
    TransitionKernel,
    build_chain,
    iterate,
    lump_optimal,
    nonopt_probability,
    point_mass,
    reconstruct_kernel,
    uniform_over_all,
    uniform_over_nonoptimal,
)
from .drift_toolkit import (
    AverageDriftCurve,
    DriftFunction,
    DriftReport,
    average_drift,
    backward_drift,
    certify,
    load_drift,
    pointwise_drift,
)
from .errors import (
    AbsorbingViolationError,
    CancelledError,
    DimensionMismatchError,
    MalformedKernelError,
    NotConvergentError,
    ProblemFormatError,
    RshLabError,
    SpectralNoConvergenceError,
    StateLimitError,
)
from .exact_analysis import (
    AnalysisReport,
    ConvergenceVerdict,
    HittingTimes,
    RateBounds,
    check_convergence_reachability,
    check_convergence_spectral,
    forward_backward_identity,
    hitting_times,
    load_rate_curve_csv,
    load_report,
    rate_bounds,
    rate_curve,
    spectral_radius,
)
from .heuristics import (
    ProblemSpec,
    WalkParams,
    builtin_problem,
    kernel_rsh1,
    kernel_rsh2,
    load_problem,
)
from .simulation import (
    HittingTimeSummary,
    RunStats,
    SimConfig,
    empirical_average_rate,
    empirical_convergence_curve,
    empirical_hitting_time,
    set_worker_threads,
    simulate,
)

__version__ = "0.1.0"
