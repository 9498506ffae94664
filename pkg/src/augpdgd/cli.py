"""Command-line interface.

Subcommands: ``simulate`` (integrate one flow and export the
trajectory), ``certify`` (compute the exponential-stability certificate,
optionally verifying the envelope along a trajectory), ``counterexample``
(the closed-form study of the plateau family), and ``power`` (the
curtailment experiment).  Every subcommand writes machine-readable CSV
and JSON into the output directory and, unless ``--no-plot`` is given,
renders matplotlib figures next to them.

Exit codes: 0 success, 2 usage or I/O error, 3 assumption violation,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .certify import compute_certificate, verify_envelope
from .counterexample import (
    CounterexampleParams,
    closed_form_arrays,
    demonstrate_nonexponential,
    initial_point,
)
from .dynamics import DynamicsParams, make_field
from .errors import (
    AssumptionViolationError,
    AugPdgdError,
    CertificateInvalidError,
    ConvergenceTimeoutError,
    DivergenceError,
    GenerationError,
    StiffnessError,
)
from .integrate import integrate_adaptive
from .powercurtail import (
    default_feeder_config,
    load_feeder,
    make_power_curtailment,
    run_experiment,
)
from .problem import (
    BUILTIN_PROBLEMS,
    PrimalDualPoint,
    dump_json_17g,
    kkt_residual,
    load_problem,
    sample_near_reference,
    solve_reference_kkt,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ASSUMPTION = 3
EXIT_NUMERICAL = 4


def _float_list(text: str) -> list[float]:
    items = [part for part in text.split(",") if part.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    try:
        return [float(part) for part in items]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_common(parser):
    parser.add_argument("--rho", type=float, default=1.0,
                        help="penalty weight of the augmented Lagrangian")
    parser.add_argument("--eta", type=float, default=1.0,
                        help="dual-rate scale (1 = plain flow)")
    parser.add_argument("--rel-tol", type=float, default=1e-9)
    parser.add_argument("--abs-tol", type=float, default=1e-9)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("augpdgd-out"),
                        help="output directory (created if missing)")
    parser.add_argument("--no-plot", action="store_true",
                        help="skip figure rendering")


def _resolve_problem(name: str, seed: int, alpha: float, rho: float):
    """Problem instance plus the default initial point for it."""
    if name in BUILTIN_PROBLEMS:
        if name == "qp":
            prog = BUILTIN_PROBLEMS[name](seed=seed)
        else:
            prog = BUILTIN_PROBLEMS[name]()
    elif name == "power":
        prog = make_power_curtailment(default_feeder_config(), 4.0)
    else:
        path = Path(name)
        if not path.exists():
            raise FileNotFoundError(f"problem file not found: {path}")
        prog = load_problem(path)
    if prog.name == "counterexample":
        z0 = initial_point(CounterexampleParams(alpha=alpha, rho=rho))
    elif prog.name == "power-curtailment":
        x_w = np.concatenate([0.55 * prog.extras["s_max"],
                              np.zeros(len(prog.extras["s_max"]))])
        z0 = PrimalDualPoint(x_w, np.zeros(prog.m_I), np.zeros(prog.m_E))
    else:
        z0 = PrimalDualPoint.zeros(prog)
    return prog, z0


def _write_json(path: Path, payload: dict):
    with open(path, "w") as fp:
        dump_json_17g(payload, fp)


def cmd_simulate(args) -> int:
    prog, z0 = _resolve_problem(args.problem, args.seed, args.alpha, args.rho)
    params = DynamicsParams(rho=args.rho, eta=args.eta)
    field = make_field(prog, params)
    horizon = args.horizon if args.horizon is not None else (
        args.alpha + 20.0 if prog.name == "counterexample" else 20.0)
    traj = integrate_adaptive(field, z0, horizon, rel_tol=args.rel_tol,
                              abs_tol=args.abs_tol, n_samples=args.samples)
    final = traj.final_point
    report = kkt_residual(prog, final)

    summary = {
        "problem": args.problem, "rho": args.rho, "eta": args.eta,
        "horizon": horizon, "seed": args.seed,
        "final_kkt": {
            "stationarity": report.stationarity,
            "primal_ineq": report.primal_ineq,
            "primal_eq": report.primal_eq,
            "complementarity": report.complementarity,
            "dual_nonneg": report.dual_nonneg,
            "max": report.max_residual,
        },
        "min_lambda": traj.min_multiplier(),
    }
    try:
        z_star = solve_reference_kkt(prog, z0, tol=1e-8, max_time=600.0,
                                     rho=args.rho)
        dist = traj.attach_reference(z_star)
        d0 = float(dist[0])
        summary["d0"] = d0
        summary["max_expansion_ratio"] = float(np.max(dist) / d0) if d0 > 0 else 1.0
    except ConvergenceTimeoutError as exc:
        summary["reference_error"] = str(exc)

    args.out.mkdir(parents=True, exist_ok=True)
    traj.to_csv(args.out / "trajectory.csv")
    _write_json(args.out / "summary.json", summary)
    if not args.no_plot:
        plotting.save_trajectory_figure(traj, args.out / "trajectory.png",
                                        title=f"{args.problem} flow")
    print(f"wrote {args.out}/trajectory.csv (final KKT residual "
          f"{report.max_residual:.3e})")
    return EXIT_OK


def cmd_certify(args) -> int:
    prog, z0_default = _resolve_problem(args.problem, args.seed, args.alpha,
                                        args.rho)
    if args.eta != 1.0:
        raise AssumptionViolationError("certification assumes unit dual rate")
    if prog.name == "counterexample" and args.d0 is None:
        z0 = z0_default
        cert, z_star = compute_certificate(prog, rho=args.rho, z0=z0)
    else:
        d0 = args.d0 if args.d0 is not None else 1.0
        cert, z_star = compute_certificate(prog, rho=args.rho, d0=d0)
        rng = np.random.default_rng(args.seed)
        z0 = sample_near_reference(rng, z_star, cert.d0)

    args.out.mkdir(parents=True, exist_ok=True)
    payload = cert.to_json_dict()
    payload["problem"] = args.problem
    exit_code = EXIT_OK
    if args.verify:
        field = make_field(prog, DynamicsParams(rho=args.rho))
        horizon = args.horizon if args.horizon is not None else 20.0
        traj = integrate_adaptive(field, z0, horizon, rel_tol=args.rel_tol,
                                  abs_tol=args.abs_tol, n_samples=args.samples)
        report = verify_envelope(traj, cert, z_star)
        payload["verification"] = report.to_json_dict()
        traj.to_csv(args.out / "envelope.csv")
        if not args.no_plot:
            plotting.save_envelope_figure(traj, cert, args.out / "envelope.png",
                                          title=f"{args.problem} envelope")
        if not report.passed:
            exit_code = EXIT_NUMERICAL
    _write_json(args.out / "certificate.json", payload)
    print(f"certified rate beta = {cert.beta:.6e}, envelope factor "
          f"M = {cert.M_beta:.6f} (d0 = {cert.d0:g})")
    return exit_code


def cmd_counterexample(args) -> int:
    alphas = sorted(args.alphas)
    report = demonstrate_nonexponential(alphas, args.rho, args.envelope_M,
                                        args.envelope_xi)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "integrals.csv", "w") as fp:
        fp.write("alpha,integral,envelope_bound,ratio\n")
        for alpha, integral, bound, ratio in report.rows:
            from .problem import format_float as ff
            fp.write(f"{ff(alpha)},{ff(integral)},{ff(bound)},{ff(ratio)}\n")

    prog = BUILTIN_PROBLEMS["counterexample"]()
    params = DynamicsParams(rho=args.rho)
    field = make_field(prog, params)
    max_errors = {}
    for alpha in alphas:
        cp = CounterexampleParams(alpha=alpha, rho=args.rho)
        traj = integrate_adaptive(field, initial_point(cp), alpha + args.horizon_pad,
                                  rel_tol=args.rel_tol, abs_tol=args.abs_tol,
                                  n_samples=args.samples)
        reference = closed_form_arrays(cp, traj.times)
        max_errors[alpha] = float(np.max(np.abs(traj.states - reference)))
        tag = f"{alpha:g}".replace(".", "p")
        traj.to_csv(args.out / f"trajectory_alpha_{tag}.csv")
        if not args.no_plot:
            plotting.save_counterexample_trajectory_figure(
                traj, reference, args.out / f"trajectory_alpha_{tag}.png",
                title=f"alpha = {alpha:g}, rho = {args.rho:g}")
    if not args.no_plot:
        plotting.save_counterexample_figure(report, args.out / "counterexample.png")
    _write_json(args.out / "summary.json", {
        "rho": args.rho, "hypothetical_M": args.envelope_M,
        "hypothetical_xi": args.envelope_xi,
        "crossover_alpha": report.crossover_alpha,
        "max_abs_error_vs_closed_form": {f"{a:g}": e
                                         for a, e in max_errors.items()},
    })
    worst = max(max_errors.values())
    print(f"integral table for {len(alphas)} alphas; worst closed-form "
          f"deviation {worst:.3e}; ratio crossover at alpha = "
          f"{report.crossover_alpha}")
    return EXIT_OK


def cmd_power(args) -> int:
    if args.config is not None:
        config = load_feeder(args.config)
    else:
        config = default_feeder_config()
    prog = make_power_curtailment(config, args.pv_ratio)
    horizon = args.horizon if args.horizon is not None else 200.0
    result = run_experiment(prog, args.ratios, args.instances, rho=args.rho,
                            seed=args.seed, t_end=horizon,
                            threads=args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "curves.csv", "w") as fp:
        result.write_curves_csv(fp)
    _write_json(args.out / "rates.json", result.summary_dict())
    with open(args.out / "feeder.json", "w") as fp:
        dump_json_17g(config.to_json_dict(), fp)
    if not args.no_plot:
        plotting.save_power_figure(result, args.out / "power.png")
    n_conv = sum(run.converged for run in result.runs)
    print(f"{len(result.runs)} instances integrated, {n_conv} converged "
          f"below 1e-3 normalized distance")
    if any(run.status != "ok" for run in result.runs):
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augpdgd",
        description="Augmented primal-dual gradient flow: simulation, "
                    "stability certificates, and experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="integrate one flow")
    p_sim.add_argument("--problem", required=True,
                       help="builtin name (counterexample, soc, qp, power) "
                            "or a problem JSON path")
    p_sim.add_argument("--alpha", type=float, default=1.0,
                       help="plateau length selecting the closed-form start "
                            "(counterexample only)")
    p_sim.add_argument("--horizon", type=float, default=None)
    p_sim.add_argument("--samples", type=int, default=400)
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_cert = sub.add_parser("certify", help="compute a stability certificate")
    p_cert.add_argument("--problem", required=True)
    p_cert.add_argument("--d0", type=float, default=None,
                        help="initial distance the certificate covers "
                             "(counterexample default: derive from --alpha)")
    p_cert.add_argument("--alpha", type=float, default=1.0)
    p_cert.add_argument("--verify", action="store_true",
                        help="integrate a trajectory and check the envelope")
    p_cert.add_argument("--horizon", type=float, default=None)
    p_cert.add_argument("--samples", type=int, default=800)
    _add_common(p_cert)
    p_cert.set_defaults(func=cmd_certify)

    p_ce = sub.add_parser("counterexample",
                          help="closed-form plateau-family study")
    p_ce.add_argument("--alphas", type=_float_list, required=True,
                      help="comma-separated plateau lengths")
    p_ce.add_argument("--envelope-M", type=float, default=2.0)
    p_ce.add_argument("--envelope-xi", type=float, default=0.1)
    p_ce.add_argument("--horizon-pad", type=float, default=20.0,
                      help="integrate each alpha to alpha + this pad")
    p_ce.add_argument("--samples", type=int, default=400)
    _add_common(p_ce)
    p_ce.set_defaults(func=cmd_counterexample)

    p_pow = sub.add_parser("power", help="solar-curtailment experiment")
    p_pow.add_argument("--ratios", type=_float_list, required=True,
                       help="comma-separated initial-distance ratios")
    p_pow.add_argument("--instances", type=int, default=10)
    p_pow.add_argument("--pv-ratio", type=float, default=4.0,
                       help="total PV generation over total load")
    p_pow.add_argument("--config", type=Path, default=None,
                       help="feeder JSON (default: shipped 36-bus feeder)")
    p_pow.add_argument("--horizon", type=float, default=None)
    p_pow.add_argument("--threads", type=int, default=None)
    _add_common(p_pow)
    p_pow.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssumptionViolationError as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (DivergenceError, StiffnessError, ConvergenceTimeoutError,
            CertificateInvalidError, GenerationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AugPdgdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
