"""Command-line front end.

Four subcommands: `simulate` (run a scenario, emit CSV and a key=value
report), `certify` (certificate pipeline, optionally backed by a
simulation), `montecarlo` (observer-basin sweep), and `validate`
(derivative-identity rate checks).

Exit codes: 0 success, 2 configuration error, 3 numerical blowup,
4 derivative-identity rate failure.
"""

import argparse
import sys
import time
from dataclasses import replace

import numpy as np

from . import lyapunov, sim, so3
from .config import load_scenario
from .controller import max_desired_rate
from .errors import ConfigError, NumericalBlowup

_CSV_HEAD = (
    ["t"]
    + [f"eRE_{a}" for a in "xyz"]
    + [f"westim_err_{a}" for a in "xyz"]
    + [f"eR_{a}" for a in "xyz"]
    + [f"eOmega_{a}" for a in "xyz"]
    + [f"u_{a}" for a in "xyz"]
    + ["Psi", "PsiE", "U"]
)


def _fmt(x) -> str:
    # full double-precision round trip, plain ASCII
    return repr(float(x))


def write_csv(log, path: str, v_series=None) -> None:
    head = list(_CSV_HEAD)
    if v_series is not None:
        head.append("V")
    head += ["ortho_R", "ortho_Rbar"]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(head) + "\n")
        for i in range(len(log)):
            row = [log.t[i]]
            row += list(log.e_RE[i]) + list(log.omega_err[i])
            row += list(log.e_R[i]) + list(log.e_Omega[i]) + list(log.u[i])
            row += [log.Psi[i], log.Psi_E[i], log.U[i]]
            if v_series is not None:
                row.append(v_series[i])
            row += [log.ortho_R[i], log.ortho_Rbar[i]]
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def error_norm_sum(log) -> np.ndarray:
    """Per-sample sum of the four error norms."""
    return (np.linalg.norm(log.e_RE, axis=1)
            + np.linalg.norm(log.omega_err, axis=1)
            + np.linalg.norm(log.e_R, axis=1)
            + np.linalg.norm(log.e_Omega, axis=1))


def time_to_threshold(log, threshold: float) -> float:
    """First logged time after which the error-norm sum stays below
    threshold through the end of the run (nan if it never settles)."""
    s = error_norm_sum(log)
    if s[-1] >= threshold:
        return float("nan")
    above = np.nonzero(s >= threshold)[0]
    idx = 0 if above.size == 0 else above[-1] + 1
    return float(log.t[idx])


def exponential_fit(log):
    """Least-squares slope and R^2 of log(error-norm sum) over the
    middle two thirds of the horizon."""
    s = error_norm_sum(log)
    t = log.t
    d = log.scenario.duration
    mask = (t >= d / 6.0) & (t <= 5.0 * d / 6.0) & (s > 0.0)
    if mask.sum() < 2:
        return float("nan"), float("nan")
    x, y = t[mask], np.log(s[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0.0 else float("nan")
    return float(slope), r2


def _initial_estimate_stats(sc):
    qe0 = sc.R0 @ sc.Rbar0.T
    psi_e0 = so3.error_function(sc.weights_E, qe0)
    e_we0 = sc.inertia.J(sc.R0) @ (sc.R0 @ sc.Omega0 - sc.omega_bar0)
    return psi_e0, float(np.linalg.norm(e_we0))


def build_certificate_for(sc) -> lyapunov.SeparationCertificate:
    psi_e0, e_we0 = _initial_estimate_stats(sc)
    omega_max = max_desired_rate(sc.trajectory, sc.duration, sc.h)
    return lyapunov.build_certificate(
        sc.inertia, sc.weights, sc.weights_E,
        sc.controller_gains, sc.observer_gains,
        Omega_max=omega_max, Psi_E0=psi_e0, e_wE0_norm=e_we0)


def _verdict(cert, log=None, threshold: float = 1e-2) -> str:
    if cert.certified:
        return "CERTIFIED"
    if log is None:
        return "UNCERTIFIABLE"
    if error_norm_sum(log)[-1] < threshold:
        return "UNCERTIFIED-CONVERGENT"
    return "DIVERGENT"


def _emit(lines) -> None:
    for line in lines:
        print(line)


def _load(args):
    if getattr(args, "config", None):
        try:
            return load_scenario(args.config)
        except OSError as exc:
            raise ConfigError(str(exc)) from None
    preset = getattr(args, "preset", None)
    if preset == "v-a":
        return sim.stabilization_v_a()
    if preset == "v-b":
        return sim.tracking_v_b()
    raise ConfigError("give --config PATH or --preset {v-a,v-b}")


def cmd_simulate(args) -> int:
    sc = _load(args)
    if args.mode:
        sc = replace(sc, mode=args.mode)
    t0 = time.perf_counter()
    log = sim.run(sc)
    wall = time.perf_counter() - t0
    cert = build_certificate_for(sc)
    v_series = None
    if (cert.c1 is not None and sc.controller_gains.is_scalar
            and sc.observer_gains.is_scalar):
        samples = lyapunov.lyapunov_trace(log, cert.c1, cert.c2,
                                          psi=cert.psi, psi_bar_E=cert.psi_bar_E)
        v_series = [s.V for s in samples]
    if args.out:
        write_csv(log, args.out, v_series)
    slope, r2 = exponential_fit(log)
    lines = [
        f"mode={sc.mode}",
        f"h={sc.h!r}",
        f"duration={sc.duration!r}",
        f"samples={len(log)}",
        f"trajectory={'setpoint' if sc.trajectory.kind == 0 else 'euler321'}",
        f"terminal_eRE_norm={_fmt(np.linalg.norm(log.e_RE[-1]))}",
        f"terminal_westim_err_norm={_fmt(np.linalg.norm(log.omega_err[-1]))}",
        f"terminal_eR_norm={_fmt(np.linalg.norm(log.e_R[-1]))}",
        f"terminal_eOmega_norm={_fmt(np.linalg.norm(log.e_Omega[-1]))}",
        f"time_to_error_sum_1e-2={_fmt(time_to_threshold(log, 1e-2))}",
        f"time_to_error_sum_1e-4={_fmt(time_to_threshold(log, 1e-4))}",
        f"fit_rate={_fmt(slope)}",
        f"fit_r2={_fmt(r2)}",
        f"reprojections_R={log.reprojections_R}",
        f"reprojections_Rbar={log.reprojections_Rbar}",
        f"max_ortho_R={_fmt(log.ortho_R.max())}",
        f"max_ortho_Rbar={_fmt(log.ortho_Rbar.max())}",
        f"verdict={_verdict(cert, log)}",
        f"wall_time_s={wall!r}",
    ]
    if args.out:
        lines.append(f"csv={args.out}")
    _emit(lines)
    return 0


def cmd_certify(args) -> int:
    sc = _load(args)
    cert = build_certificate_for(sc)
    _emit(cert.report())
    log = None
    if args.simulate and not cert.certified:
        log = sim.run(sc)
    print(f"verdict={_verdict(cert, log)}")
    return 0


def cmd_montecarlo(args) -> int:
    sc = _load(args)
    report = sim.monte_carlo(sc, args.n, sampler=args.sampler, seed=args.seed,
                             threshold=args.threshold)
    if args.out:
        with open(args.out, "w", encoding="ascii", newline="\n") as fh:
            fh.write("run_id,classification,time_to_threshold,max_PsiE\n")
            for r in report.runs:
                fh.write(f"{r.run_id},{r.classification},"
                         f"{_fmt(r.time_to_threshold)},{_fmt(r.max_Psi_E)}\n")
    lines = [
        f"n={report.n}",
        f"sampler={report.sampler}",
        f"seed={report.seed}",
        f"threshold={report.threshold!r}",
    ]
    for name in sorted(report.counts):
        lines.append(f"count[{name}]={report.counts[name]}")
    settled = sum(1 for r in report.runs if not np.isnan(r.time_to_threshold))
    lines.append(f"settled_below_threshold={settled}")
    if args.out:
        lines.append(f"csv={args.out}")
    _emit(lines)
    return 0


def cmd_validate(args) -> int:
    sc = _load(args)
    h = args.h if args.h is not None else sc.h
    report = sim.validate_derivatives(sc, h_values=(4.0 * h, 2.0 * h, h),
                                      inject_fault=args.inject_fault)
    _emit(report.report())
    return 0 if report.passed else 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="so3lab",
        description="Attitude observer/controller simulation laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario config file")
        p.add_argument("--preset", choices=("v-a", "v-b"),
                       help="built-in scenario: v-a stabilization, v-b tracking")

    p = sub.add_parser("simulate", help="run one scenario, emit CSV + report")
    common(p)
    p.add_argument("--mode", choices=sim.MODES, help="override control mode")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("certify", help="separation certificate pipeline")
    common(p)
    p.add_argument("--simulate", action="store_true",
                   help="refine an uncertified verdict by simulation")
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("montecarlo", help="observer-basin Monte Carlo sweep")
    common(p)
    p.add_argument("--n", type=int, default=100, help="number of runs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", default="haar",
                   help="haar | equilibrium-{1,2,3}[-perturbed]")
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--out", help="per-run CSV output path")
    p.set_defaults(fn=cmd_montecarlo)

    p = sub.add_parser("validate", help="derivative-identity rate checks")
    common(p)
    p.add_argument("--h", type=float, help="finest step of the 4h/2h/h ladder")
    p.add_argument("--inject-fault", action="store_true",
                   help="corrupt one sample per log to exercise the failure path")
    p.set_defaults(fn=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        where = f"line {exc.line}: " if exc.line else ""
        print(f"config error: {where}{exc}", file=sys.stderr)
        return 2
    except NumericalBlowup as exc:
        print(f"numerical blowup: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
