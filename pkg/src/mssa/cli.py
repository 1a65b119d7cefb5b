"""Command-line front end: ``mssa validate|simulate|reduce|sens|oracle|bench``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    NonConvergence,
    ParseError,
    ReductionError,
    SchemaError,
    SpeciesError,
)
from .network import heat_shock, load_model, validate_assumptions
from .oracle import FiberKernel, _kernel_from_beta, regularity_gap
from .output import parse_output_expr
from .reduction import reduce_iterated, reduce_network
from .rng import RngStream
from .sensitivity import cfd_estimate, full_vs_reduced_report
from .ssa import estimate_expectation, simulate_path

log = logging.getLogger("mssa")

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NONCONVERGENCE, EXIT_REDUCTION = 0, 1, 2, 3, 4

SENS_COLUMNS = ("method", "f", "theta", "h", "t", "N", "value", "halfwidth95", "samples",
                "wall_seconds", "seed", "converged")
BENCH_COLUMNS = ("method", "f", "theta", "h", "t", "N", "value", "halfwidth95", "samples",
                 "events", "speedup", "wall_seconds", "seed")

# analytic derivatives of the averaged heat-shock model at theta=1, t=1, v0=20
HEAT_SHOCK_ORACLES = {
    "x3": 200.0 / 9.0 * math.exp(-5.0 / 3.0),
}


def heat_shock_x1_oracle(theta=1.0, t=1.0, v0=20):
    """d/dtheta of (2/(2+theta)) v0 exp(-5 theta t/(2+theta))."""
    q = 2.0 + theta
    g = 2.0 / q * v0 * math.exp(-5.0 * theta * t / q)
    return g * (-1.0 / q - 10.0 * t / q**2)


HEAT_SHOCK_ORACLES["x1"] = heat_shock_x1_oracle()


def fmt(x) -> str:
    """17 significant digits for floats, plain text otherwise, blank for None."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows):
    """Comma-separated, header row, LF line endings; ``path`` of ``-`` is stdout."""
    lines = [",".join(header)] + [",".join(fmt(r.get(c)) for c in header) for r in rows]
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def write_dat(path, header, pairs):
    lines = [f"# {header}"] + [f"{fmt(a)} {fmt(b)}" for a, b in pairs]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _seed(args) -> int:
    env = os.environ.get("MSSA_SEED")
    return int(env) if env not in (None, "") else int(args.seed)


def _model(args):
    if args.model == "heatshock":
        return heat_shock()
    return load_model(args.model)


def _sens_row(est, f_text, timing):
    return {
        "method": est.method,
        "f": f_text,
        "theta": est.theta,
        "h": est.h,
        "t": est.t,
        "N": est.N,
        "value": est.value,
        "halfwidth95": est.halfwidth95,
        "samples": est.samples,
        "events": est.events,
        "wall_seconds": est.wall_seconds if timing else None,
        "seed": est.seed,
        "converged": est.converged,
    }


# ----------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    net = _model(args)
    rep = validate_assumptions(net)
    for line in rep.lines():
        print(line)
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def cmd_simulate(args) -> int:
    net = _model(args)
    seed = _seed(args)
    theta = net.theta_nominal if args.theta is None else args.theta
    N = net.N0 if args.N is None else args.N
    if args.samples > 1:
        f = parse_output_expr(args.f, net.names)
        est = estimate_expectation(net, args.gamma, N, theta, f, args.t, args.samples, seed)
        row = {"f": args.f, "gamma": args.gamma, "N": N, "theta": theta, "t": args.t,
               "mean": est.mean, "halfwidth95": est.halfwidth95, "samples": est.samples,
               "truncated": est.truncated, "seed": seed}
        write_csv(args.out, list(row), [row])
        return EXIT_OK
    traj = simulate_path(net, args.gamma, N, theta, args.t, RngStream(seed, 0))
    rows = [dict(time=0.0, reaction="", **dict(zip(net.names, map(int, traj.states[0]))))]
    for tm, k, x in zip(traj.jump_times, traj.reaction_log, traj.states[1:]):
        rows.append(dict(time=float(tm), reaction=net.labels[k], **dict(zip(net.names, map(int, x)))))
    write_csv(args.out, ["time", "reaction", *net.names], rows)
    return EXIT_OK


def cmd_reduce(args) -> int:
    net = _model(args)
    theta = net.theta_nominal if args.theta is None else args.theta
    chain = reduce_iterated(net, args.steps)
    rows = []
    for s, red in enumerate(chain, start=1):
        print(f"stage {s}: gamma1={red.gamma1} gamma2={red.gamma2} "
              f"Gamma2={{{', '.join(red.labels[j] for j in red.natural)}}}")
        print(f"  M = {red.M.tolist()}")
        print(f"  u0 = {list(red.initial)}")
        for j in red.natural:
            lam, dlam = red.rate(j, red.initial, theta)
            print(f"  {red.labels[j]}: jump {red.jumps[j].tolist()} "
                  f"rate(u0) = {fmt(lam)} d/dtheta = {fmt(dlam)}")
            rows.append({"stage": s, "reaction": red.labels[j], "gamma2": str(red.gamma2),
                         "rate_u0": lam, "drate_u0": dlam})
    if chain.stop_reason:
        print(f"stopped: {chain.stop_reason}")
    if args.out:
        write_csv(args.out, ["stage", "reaction", "gamma2", "rate_u0", "drate_u0"], rows)
    return EXIT_OK


def cmd_sens(args) -> int:
    net = _model(args)
    seed = _seed(args)
    f = parse_output_expr(args.f, net.names)
    theta = net.theta_nominal if args.theta is None else args.theta
    N = net.N0 if args.N is None else args.N
    kw = dict(target_rel_halfwidth=args.rel_halfwidth, seed=seed, max_samples=args.max_samples,
              central=args.central)
    rows = []
    if args.method in ("reduced", "both"):
        red = reduce_iterated(net, args.steps)
        est_r = cfd_estimate(red, f, theta, args.h, args.t, **kw)
        rows.append(_sens_row(est_r, args.f, args.timing))
    if args.method in ("cfd", "both"):
        gamma = reduce_network(net).gamma2 if args.gamma is None else args.gamma
        est_f = cfd_estimate(net, f, theta, args.h, args.t, gamma=gamma, N=N, **kw)
        rows.append(_sens_row(est_f, args.f, args.timing))
    if args.method == "both":
        se = math.hypot(est_f.standard_error, est_r.standard_error)
        rows.append({"method": "gap", "f": args.f, "theta": theta, "h": args.h, "t": args.t,
                     "N": N, "value": abs(est_f.value - est_r.value), "halfwidth95": 1.96 * se,
                     "samples": est_f.samples, "seed": seed,
                     "converged": est_f.converged and est_r.converged})
    write_csv(args.out, SENS_COLUMNS, rows)
    if not all(r["converged"] for r in rows):
        raise NonConvergence("half-width target not met within --max-samples")
    return EXIT_OK


def cmd_oracle(args) -> int:
    net = _model(args)
    theta = net.theta_nominal if args.theta is None else args.theta
    N = net.N0 if args.N is None else args.N
    red = reduce_network(net)
    v = red.initial
    z = tuple(net.initial)
    fk = FiberKernel(red, v, theta, N)
    zi = fk.index(z)
    labels = [net.labels[k] for k in fk.channels]
    rows = []
    for t in np.linspace(0.0, args.t, args.points):
        kern = _kernel_from_beta(fk, fk.propagator(float(t), zi), zi, float(t))
        row = {"t": float(t), "survival": kern.survival, "rho0": kern.rho0}
        row.update({f"rho_{lab}": kern.rho[k] for lab, k in zip(labels, fk.channels)})
        rows.append(row)
    write_csv(args.out, ["t", "survival", "rho0", *(f"rho_{lab}" for lab in labels)], rows)
    gap = regularity_gap(fk, z, args.t)
    print(f"# regularity gap on [N^-1/2, {fmt(args.t)}]: {fmt(gap)}", file=sys.stderr)
    return EXIT_OK


# ----------------------------------------------------------------------
# bench


def run_bench(scale="desk", seed=42, out=".", timing=False, rel_halfwidth=0.05,
              max_samples=10**6):
    """Heat-shock reproduction suite; returns the rows written to ``bench.csv``."""
    net = heat_shock()
    red = reduce_network(net)
    theta, h, t = 1.0, 0.01, 1.0
    N_list = [50, 200] + ([10_000] if scale == "paper" else [])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for expr in ("x3", "x1"):
        f = parse_output_expr(expr, net.names)
        report = full_vs_reduced_report(net, f, theta, h, t, N_list, rel_halfwidth, seed,
                                        max_samples, reduced=red)
        ref = report[0].estimate
        rows.append({"method": "analytic", "f": expr, "theta": theta, "h": 0.0, "t": t,
                     "value": HEAT_SHOCK_ORACLES[expr], "halfwidth95": 0.0, "samples": 0,
                     "seed": seed})
        for row in report:
            est = row.estimate
            r = _sens_row(est, expr, timing)
            r["speedup"] = est.events / ref.events if ref.events else None
            if timing and est is not ref:
                r["speedup_wall"] = est.wall_seconds / ref.wall_seconds
            rows.append(r)
        for row in report[1:]:
            rows.append({"method": "gap", "f": expr, "theta": theta, "h": h, "t": t,
                         "N": row.estimate.N, "value": row.gap, "halfwidth95": 1.96 * row.gap_se,
                         "samples": row.estimate.samples, "seed": seed})
        write_dat(out / f"gap_{expr}.dat", "N |S^N - S_reduced|",
                  [(r.estimate.N, r.gap) for r in report[1:]])
    write_csv(out / "bench.csv", BENCH_COLUMNS, rows)
    return rows


def cmd_bench(args) -> int:
    if args.suite != "heatshock":
        raise SystemExit(f"unknown suite {args.suite!r}")
    rows = run_bench(args.scale, _seed(args), args.out, args.timing, args.rel_halfwidth,
                     args.max_samples)
    for r in rows:
        print(f"{r['method']:>12} f={r['f']} N={fmt(r.get('N')) or '-':>6} "
              f"value={r['value']:.5g} +- {r['halfwidth95']:.3g}")
    return EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mssa", description=__doc__)
    p.add_argument("--threads", type=int, default=None, help="numba thread cap")
    p.add_argument("--verbose", "-v", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def model_arg(sp):
        sp.add_argument("model", help="model file, or 'heatshock' for the built-in example")

    sp = sub.add_parser("validate", help="check model assumptions")
    model_arg(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("simulate", help="sample path or Monte Carlo mean of the full model")
    model_arg(sp)
    sp.add_argument("--gamma", default="0")
    sp.add_argument("--N", type=float)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--samples", type=int, default=1)
    sp.add_argument("--f", default="x1")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("reduce", help="time-scale reduction summary")
    model_arg(sp)
    sp.add_argument("--steps", type=int, default=1)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("sens", help="coupled finite-difference sensitivity")
    model_arg(sp)
    sp.add_argument("--method", choices=("cfd", "reduced", "both"), default="reduced")
    sp.add_argument("--f", required=True)
    sp.add_argument("--h", type=float, default=0.01)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--rel-halfwidth", type=float, default=0.05)
    sp.add_argument("--N", type=float)
    sp.add_argument("--gamma", default=None)
    sp.add_argument("--steps", type=int, default=1)
    sp.add_argument("--max-samples", type=int, default=10**6)
    sp.add_argument("--central", action="store_true")
    sp.add_argument("--timing", action="store_true", help="fill wall_seconds (breaks byte identity)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_sens)

    sp = sub.add_parser("oracle", help="jump-kernel time series at the initial fiber")
    model_arg(sp)
    sp.add_argument("--N", type=float)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--points", type=int, default=21)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("bench", help="built-in reproduction suite")
    sp.add_argument("--suite", default="heatshock")
    sp.add_argument("--scale", choices=("desk", "paper"), default="desk")
    sp.add_argument("--rel-halfwidth", type=float, default=0.05)
    sp.add_argument("--max-samples", type=int, default=10**6)
    sp.add_argument("--timing", action="store_true")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--out", default="bench-out")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        return args.func(args)
    except (SchemaError, ParseError, SpeciesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ReductionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_REDUCTION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
