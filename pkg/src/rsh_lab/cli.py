"""Command-line front end: exact analysis, drift certification, Monte
Carlo simulation, and the built-in reproduction suite.

Exit codes: 0 success, 1 input error, 2 analysis precondition failure
(hitting times requested on a non-convergent chain), 3 drift certificate
denied.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import chain_core, drift_toolkit, exact_analysis, reproduce, simulation
from .errors import NotConvergentError, RshLabError
from .heuristics import WalkParams, builtin_problem, kernel_rsh1, kernel_rsh2, load_problem

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PRECONDITION = 2
EXIT_DENIED = 3

THREADS_ENV = "RSH_LAB_THREADS"


def _init_value(text):
    if text == "uniform":
        return "uniform"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("init must be a state index or 'uniform'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsh-lab",
        description=(
            "Model randomised search heuristics on finite domains as absorbing "
            "Markov chains: exact convergence/rate/hitting-time analysis, drift "
            "certificates, and seeded Monte Carlo validation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_problem_flags(p):
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--builtin", help="built-in fitness: square, square10, shifted_square")
        group.add_argument("--problem", help="path to a problem-definition JSON file")
        p.add_argument("--algo", choices=["rsh1", "rsh2"], default="rsh1",
                       help="rsh1 = elitist walk, rsh2 = non-elitist walk")

    analyze = sub.add_parser("analyze", help="exact chain analysis; writes report.json and rate_bounds.csv")
    add_problem_flags(analyze)
    analyze.add_argument("--init", type=_init_value, default=20,
                         help="start state index or 'uniform' (default 20)")
    analyze.add_argument("--hitting", action="store_true", help="also compute hitting/staying times")
    analyze.add_argument("--rate-horizon", type=int, default=1000, metavar="T",
                         help="horizon for the rate bounds and curve (default 1000)")
    analyze.add_argument("--out", default=".", help="output directory")

    simulate = sub.add_parser("simulate", help="Monte Carlo runs; writes curve.csv, rate.csv, tau.csv")
    add_problem_flags(simulate)
    simulate.add_argument("--init", type=_init_value, default=20)
    simulate.add_argument("--runs", type=int, default=100_000, metavar="K")
    simulate.add_argument("--seed", type=int, default=1, metavar="S")
    simulate.add_argument("--max-iter", type=int, default=1_000_000, metavar="T")
    simulate.add_argument("--stride", type=int, default=100, metavar="R",
                          help="record aggregates every R-th iteration")
    simulate.add_argument("--out", default=".")

    drift = sub.add_parser("drift", help="certify a drift function; writes drift_report.json")
    add_problem_flags(drift)
    drift.add_argument("--drift", required=True, metavar="FILE",
                       help="JSON file {\"d\": [...]} over non-optimal states, ascending")
    drift.add_argument("--mode", required=True, choices=list(drift_toolkit.MODES))
    drift.add_argument("--init", type=_init_value, default="uniform")
    drift.add_argument("--max-iter", type=int, default=100_000, metavar="T",
                       help="horizon for average-drift hypotheses")
    drift.add_argument("--out", default=".")

    rep = sub.add_parser("reproduce", help="run the built-in reproduction suite; writes reproduction.md")
    rep.add_argument("--only", default=None, metavar="FILTER",
                     help="run only criteria whose id matches this substring")
    rep.add_argument("--seed", type=int, default=reproduce.DEFAULT_SEED)
    rep.add_argument("--runs", type=int, default=reproduce.DEFAULT_RUNS,
                     help="Monte Carlo batch size (defaults sized for the stated tolerances)")
    rep.add_argument("--out", default=".")

    return parser


def _resolve_problem(args):
    if args.builtin is not None:
        return builtin_problem(args.builtin)
    return load_problem(args.problem)


def _build_chain(args):
    problem = _resolve_problem(args)
    builder = kernel_rsh1 if args.algo == "rsh1" else kernel_rsh2
    kernel = builder(problem, WalkParams())
    space = problem.state_space()
    return problem, kernel, space, chain_core.build_chain(kernel, space)


def _start_distribution(chain, init):
    if init == "uniform":
        return chain_core.uniform_over_all(chain)
    return chain_core.point_mass(chain, init)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_analyze(args) -> int:
    problem = _resolve_problem(args)
    if isinstance(args.init, int) and not (0 <= args.init < problem.domain_size):
        print(f"init: state {args.init} is outside the domain of size {problem.domain_size}",
              file=sys.stderr)
        return EXIT_INPUT
    if args.rate_horizon < 1:
        print("rate-horizon: must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    builder = kernel_rsh1 if args.algo == "rsh1" else kernel_rsh2
    kernel = builder(problem, WalkParams())
    space = problem.state_space()
    chain = chain_core.build_chain(kernel, space)
    out = _outdir(args)

    rho = exact_analysis.spectral_radius(chain)
    reach = exact_analysis.check_convergence_reachability(kernel, space)
    convergent = rho < 1.0 - exact_analysis.CONVERGENCE_MARGIN

    q0 = _start_distribution(chain, args.init)
    bounds = None
    curve_rows = []
    if float(q0.weights.sum()) > 0.0:
        bounds = exact_analysis.rate_bounds(chain, q0, args.rate_horizon)
        curve_rows = exact_analysis.rate_curve(chain, q0, args.rate_horizon)
    exact_analysis.write_rate_curve_csv(curve_rows, out / "rate_bounds.csv")

    hitting = staying = None
    mean_hitting = None
    hitting_failure = None
    if args.hitting:
        if not reach.convergent:
            hitting_failure = (
                "hitting times are undefined: chain is not convergent; stuck states "
                + ", ".join(str(s) for s in reach.stuck_states)
            )
        else:
            times = exact_analysis.hitting_times(chain)
            hitting = [float(v) for v in times.h]
            staying = [float(v) for v in times.staying]
            mean_hitting = float(q0.weights @ times.h)

    report = exact_analysis.AnalysisReport(
        rho=rho,
        convergent=convergent,
        witness_k=reach.witness_k,
        hitting_times=hitting,
        staying_times=staying,
        rate_bounds=bounds.to_dict() if bounds is not None else None,
        mean_hitting_time=mean_hitting,
    )
    report.to_json(out / "report.json")
    if hitting_failure:
        print(hitting_failure, file=sys.stderr)
        return EXIT_PRECONDITION
    summary = f"rho={rho:.12g} convergent={convergent} witness_k={reach.witness_k}"
    if mean_hitting is not None:
        summary += f" mean_hitting_time={mean_hitting:.12g}"
    print(summary)
    return EXIT_OK


def run_simulate(args) -> int:
    problem = _resolve_problem(args)
    config = simulation.SimConfig(
        runs=args.runs,
        max_iterations=args.max_iter,
        seed=args.seed,
        init=args.init,
        record_stride=args.stride,
    )
    out = _outdir(args)
    stats = simulation.simulate(args.algo, problem, WalkParams(), config)
    simulation.write_curve_csv(stats, out / "curve.csv")
    simulation.write_rate_csv(stats, out / "rate.csv")
    simulation.write_tau_csv(stats, out / "tau.csv")
    summary = simulation.empirical_hitting_time(stats)
    print(f"mean_tau={summary.mean} stderr={summary.stderr} censored={summary.censored}")
    return EXIT_OK


def run_drift(args) -> int:
    problem, kernel, space, chain = _build_chain(args)
    d = drift_toolkit.load_drift(args.drift)
    m = chain.num_transient
    if d.d.shape[0] != m:
        non = [int(v) for v in chain.non_index]
        span = f"[{non[0]}..{non[-1]}]" if non == list(range(non[0], non[-1] + 1)) else str(non)
        print(
            f"drift: expected m={m} entries indexed over non-optimal states in "
            f"ascending original order {span}, got {d.d.shape[0]}",
            file=sys.stderr,
        )
        return EXIT_INPUT
    if args.max_iter < 0:
        print("max-iter: must be nonnegative", file=sys.stderr)
        return EXIT_INPUT
    q0 = _start_distribution(chain, args.init)
    report = drift_toolkit.certify(chain, d, q0, horizon=args.max_iter, mode=args.mode)
    out = _outdir(args)
    report.to_json(out / "drift_report.json")
    if report.granted():
        print(f"certificate={report.certificate} margin={report.hypothesis_margin:.3e} "
              f"status={report.horizon_status}")
        return EXIT_OK
    where = (f"state {report.violator_state}" if report.violator_state is not None
             else f"iteration {report.violator_iteration}")
    print(f"certificate=none violator={where} margin={report.hypothesis_margin:.3e}")
    return EXIT_DENIED


def run_reproduce(args) -> int:
    out = _outdir(args)
    rows = reproduce.run_all(only=args.only, seed=args.seed, runs=args.runs)
    reproduce.write_markdown(rows, out / "reproduction.md")
    for row in rows:
        print(f"{'PASS' if row.passed else 'FAIL'}  {row.ident}: {row.measured}")
    if not rows:
        print(f"no criteria match filter {args.only!r}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if all(row.passed for row in rows) else EXIT_DENIED


def main(argv=None) -> int:
    threads = os.environ.get(THREADS_ENV)
    if threads is not None:
        try:
            simulation.set_worker_threads(int(threads))
        except ValueError:
            print(f"{THREADS_ENV} must be a nonnegative integer", file=sys.stderr)
            return EXIT_INPUT
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; fold that into the input-error code
        return EXIT_INPUT if exc.code else EXIT_OK
    handlers = {
        "analyze": run_analyze,
        "simulate": run_simulate,
        "drift": run_drift,
        "reproduce": run_reproduce,
    }
    try:
        return handlers[args.command](args)
    except NotConvergentError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PRECONDITION
    except (RshLabError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
