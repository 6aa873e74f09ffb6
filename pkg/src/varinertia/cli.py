"""Command line interface.

Every subcommand reads a scenario file (``--scenario``) and writes CSV
files into the ``--out`` directory, printing a short human-readable
summary.  Exit codes: 0 success, 1 invalid input, 2 numerical failure,
3 file I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    EquilibriumError,
    check_dissipation,
    classify_run,
    equilibrium_residual,
    find_equilibrium,
    gamma_point,
)
from .grid import GraphError
from .inertia import DestabilizerInertia, check_assumption4
from .passivity import PassivityError
from .scenario import (
    BatchSpec,
    ScenarioError,
    write_csv,
    emit_plot_data,
    load_scenario,
    run_batch,
    write_policy_trace,
)
from .simulator import SimulationAbort

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _scenario(args):
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    return sc


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_certify(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    rows = []
    for bus, cert in zip(sc.network.graph.buses, sc.certificates):
        rows.append((bus, cert.rho, 2.0 * cert.rho, cert.argmin_frequency, cert.method))
    write_csv(out / "certificates.csv", ["bus", "rho", "rate_bound", "argmin_frequency", "method"], rows)
    print(f"{'bus':>8} {'rho':>14} {'2*rho':>14} {'argmin w [rad/s]':>18}  method")
    for bus, rho, bound, w, method in rows:
        print(f"{bus:>8} {rho:14.8g} {bound:14.8g} {w:18.6g}  {method}")
    weak = [r[0] for r in rows if r[1] <= 0]
    if weak:
        print(f"not strictly passive: {', '.join(weak)}")
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    model = args.model or sc.model
    net = sc.network
    pL = sc.final_loads() if args.after_disturbances else net.pL
    eq = find_equilibrium(net, pL, mode=model)
    res = equilibrium_residual(net, eq, pL)
    write_csv(out / "equilibrium_buses.csv", ["bus", "omega", "s"],
               zip(net.graph.buses, eq.omega, eq.s))
    write_csv(out / "equilibrium_lines.csv", ["line", "eta", "p"],
               zip(net.graph.line_names, eq.eta, eq.p))
    print(f"synchronous frequency deviation {eq.omega_sync + 0.0:.10g} Hz ({model} flows)")
    print(f"residual {res:.3e}; cycle rank {eq.cycle_rank}; angle condition {'ok' if eq.assumption1_ok else 'VIOLATED'}")
    return EXIT_OK


def cmd_gamma(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    net = sc.network
    eq = sc.equilibrium(args.model or sc.model, final=False)
    omega_bar = eq.omega_sync + args.offset if args.omega_bar is None else args.omega_bar
    gp = gamma_point(net, omega_bar, args.bus)
    write_csv(out / "gamma_buses.csv", ["bus", "omega", "s"], zip(net.graph.buses, gp.omega, gp.s))
    write_csv(out / "gamma_lines.csv", ["line", "eta", "p"], zip(net.graph.line_names, gp.eta, gp.p))
    print(f"gamma-point at {omega_bar:.10g} Hz with slack bus {gp.slack_bus}: slack injection {gp.slack_injection:.10g} p.u.")
    return EXIT_OK


def _trajectory_outputs(sc, traj, out, model, with_lyapunov=True):
    eq = sc.equilibrium(model)
    emit_plot_data(traj, out)
    write_policy_trace(traj, out / "policy_trace.csv")
    report = None
    V = None
    if with_lyapunov:
        certs = sc.certificates
        if all(c.is_strict for c in certs):
            rho = [c.rho_margined for c in certs]
            report = check_dissipation(sc.network, traj, eq, rho, [c.P for c in certs], mode=model)
            V = report.V
        else:
            logging.getLogger(__name__).warning("some supply is not strictly passive; no energy function")
    traj.to_csv(out / "trajectory.csv", V)
    return eq, report


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    model = args.model or sc.model
    traj = sc.run(model=model)
    eq, report = _trajectory_outputs(sc, traj, out, model, with_lyapunov=True)
    c = classify_run(traj, eq)
    print(f"{len(traj)} samples, status {traj.status}")
    print(f"classification: {c}")
    if report is not None:
        print(f"energy function: {report.positive_jumps} increases above tolerance, monotone {report.monotone_ok}")
    return EXIT_OK if traj.status != "nonfinite" else EXIT_NUMERICAL


def cmd_verify(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    model = args.model or sc.model
    certs = sc.certificates
    weak = [b for b, c in zip(sc.network.graph.buses, certs) if not c.is_strict]
    if weak:
        print(f"cannot verify: supplies at {', '.join(weak)} are not strictly passive", file=sys.stderr)
        return EXIT_INVALID
    traj = sc.run(model=model)
    eq = sc.equilibrium(model)
    report = check_dissipation(sc.network, traj, eq, [c.rho_margined for c in certs], [c.P for c in certs], mode=model)
    emit_plot_data(report, out)
    summary = report.summary()
    rate = check_assumption4(traj.M, [c.rho for c in certs], traj.h, traj.t)
    summary["rate_compliant"] = rate.compliant
    summary["rate_violations"] = len(rate.violations)
    (out / "lyapunov_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"energy function monotone: {report.monotone_ok} (tolerance {report.tolerance:.3e})")
    print(f"positive jumps: {report.positive_jumps}, largest {report.max_positive_jump:.3e}")
    print(f"inertia growth within 2*rho: {rate}")
    return EXIT_OK


def cmd_destabilize(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    model = args.model or sc.model
    traj = sc.run(model=model)
    pol = traj.extra["policy"]
    if not isinstance(pol, DestabilizerInertia):
        print("scenario policy is not a destabilizer", file=sys.stderr)
        return EXIT_INVALID
    _trajectory_outputs(sc, traj, out, model, with_lyapunov=False)
    write_csv(out / "peaks.csv", ["cycle", "t", "deviation"],
               ((i, t, p) for i, (t, p) in enumerate(zip(pol.hold_times, pol.peaks))))
    peaks = np.asarray(pol.peaks)
    growing = bool(np.all(np.diff(peaks) > 0))
    print(f"{len(peaks)} recorded peaks, strictly increasing: {growing}")
    if traj.status == "escaped":
        print(f"left the {pol.escape_radius} Hz escape radius at t = {traj.t[-1]:.2f} s")
    else:
        print("no divergence observed within the horizon")
    return EXIT_OK


def cmd_batch(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    cfg = sc.data.get("batch", {})
    runs = args.runs or cfg.get("runs", 1)
    spec = BatchSpec(sc, runs, args.seed, cfg.get("chunk", 25), args.model)
    report = run_batch(spec, args.workers)
    emit_plot_data(report, out)
    write_csv(out / "runs.csv", ["seed", "label", "max_deviation", "final_deviation"], report.rows())
    print(f"{runs} runs: " + ", ".join(f"{k} {v}" for k, v in report.tallies.items()))
    print(f"envelope deviation {report.envelope_deviation:.6g} Hz; digest {report.digest()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--model", choices=["nonlinear", "linear"], default=None, help="line flow model")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="varinertia", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="strictness constants per bus").set_defaults(func=cmd_certify)
    p = sub.add_parser("equilibrium", parents=[common], help="synchronous equilibrium")
    p.add_argument("--after-disturbances", action="store_true", help="apply every load step first")
    p.set_defaults(func=cmd_equilibrium)
    p = sub.add_parser("gamma", parents=[common], help="gamma-point with one bus pinned")
    p.add_argument("--bus", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--omega-bar", type=float, default=None, help="pinned frequency in Hz")
    g.add_argument("--offset", type=float, default=0.0, help="pinned frequency relative to equilibrium")
    p.set_defaults(func=cmd_gamma)
    sub.add_parser("simulate", parents=[common], help="integrate the scenario").set_defaults(func=cmd_simulate)
    sub.add_parser("verify", parents=[common], help="energy function check along a run").set_defaults(func=cmd_verify)
    sub.add_parser("destabilize", parents=[common], help="run a destabilizer scenario").set_defaults(func=cmd_destabilize)
    p = sub.add_parser("batch", parents=[common], help="seeded batch with frequency envelope")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationAbort, EquilibriumError, PassivityError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GraphError, KeyError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
