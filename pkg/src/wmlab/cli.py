"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .errors import ConfigError, NumericalError, WmlabError
from .harness import ExperimentConfig, fit_exponent, run_experiment, output_root
from .geometry import profile_from_key
from .ground_state import GridSpec, solve_ground_state
from .profile_builder import build_approx_solution, fit_power_logpower
from .spectral import (build_operator, plancherel_error, resonance_residual,
                       spectral_density, bump_profile, transference_diagnostic)


def _cmd_ground_state(args):
    p = profile_from_key(args.target)
    gs = solve_ground_state(p, GridSpec(args.rmin, args.rmax, args.n))
    res = gs.static_residual()
    sink = open(args.out, "w") if args.out else sys.stdout
    sink.write("R,Q,Q1,residual\n")
    for row in zip(gs.grid.r, gs.Q, gs.Q1, res):
        sink.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if args.out:
        sink.close()
    return 0


def _cmd_build_profile(args):
    p = profile_from_key(args.target)
    ap = build_approx_solution(p, args.nu, k_steps=args.k)
    report = {
        "nu": args.nu,
        "k_steps": args.k,
        "e0_power_logpower": list(ap.diagnostics["e0_power"]),
        "c_k": ap.constants.get("c_k"),
        "c_tilde_k": ap.constants.get("c_tilde_k"),
    }
    if args.k >= 1:
        v1, v2 = ap.corrections
        report["v1_rlog_fit"] = v1.diagnostics["rlog_fit"]
        report["singular_exponents"] = v2.diagnostics["singular_exponent"]
        e2 = ap.errors[2]
        d = e2.meta["decay"]
        tl = np.array(d["t"]) ** (-args.nu)
        report["e2_decay_slope_tlam"] = fit_exponent(
            tl, np.array(d["sup_half_cone"])).slope
        a = np.linspace(0.02, 0.9, 64)
        R = a * args.t0 ** (-args.nu)
        out = output_root()
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"corrections-nu{args.nu:g}.csv"
        with open(path, "w") as fh:
            fh.write("R,a,v1,v2\n")
            for row in zip(R, a, v1.field.eval_Ra(R, a), v2.field.eval_Ra(R, a)):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        report["corrections_csv"] = str(path)
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _cmd_spectral(args):
    p = profile_from_key(args.target)
    gs = solve_ground_state(p)
    op = build_operator(gs)
    xi = np.geomspace(args.ximin, args.ximax, args.nxi)
    basis = spectral_density(op, xi)
    out = output_root()
    out.mkdir(parents=True, exist_ok=True)
    csv = out / f"spectral-{args.target.replace(':', '_')}.csv"
    with open(csv, "w") as fh:
        fh.write("xi,rho,A\n")
        for row in zip(basis.xi, basis.rho, basis.A):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    bumps = [(4, 1.0), (5, 1.2), (8, 2.0), (10, 2.5), (12, 3.0)]
    rep = transference_diagnostic(basis, bump_profile(8, 2.0))
    diag = {
        "resonance_residual": resonance_residual(op),
        "c_norm": basis.c_norm,
        "plancherel_errors": [plancherel_error(basis, bump_profile(*b)) for b in bumps],
        "max_eig_residual": float(np.max(basis.eig_residual / (1.0 + basis.xi))),
        "smoothing_ratio_a0": rep["smoothing_ratio_a0"],
        "smoothing_ratio_a0.5": rep["smoothing_ratio_a0.5"],
        "diagonal_reduction": rep["reduction_factor"],
        "rho_smallxi_slope": basis.meta["rho_smallxi_slope"],
        "rho_largexi_slope": basis.meta["rho_largexi_slope"],
        "csv": str(csv),
    }
    json.dump(diag, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _cfg_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        target=args.target, nu=args.nu, t0=args.t0, n_r=args.n,
        cfl=args.cfl, n_snapshots=args.snapshots,
        run_spectral=getattr(args, "with_spectral", False)).validate()


def _cmd_evolve(args):
    manifest = run_experiment(_cfg_from_args(args))
    json.dump({k: manifest[k] for k in sorted(manifest) if k != "config"},
              sys.stdout, indent=2, default=str)
    print()
    return 0


def _run_one(payload):
    cfg = ExperimentConfig.from_json(payload)
    return run_experiment(cfg)["out_dir"]


def _cmd_sweep(args):
    nus = [float(v) for v in args.nu_list.split(",")]
    cfgs = [replace(_cfg_from_args(args), nu=nu).validate() for nu in nus]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outs = list(pool.map(_run_one, [c.to_json() for c in cfgs]))
    else:
        outs = [_run_one(c.to_json()) for c in cfgs]
    json.dump({"runs": outs}, sys.stdout, indent=2)
    print()
    return 0


def _cmd_fit(args):
    data = np.genfromtxt(args.input, delimiter=",", names=True)
    x = data[args.xcol]
    y = np.abs(data[args.ycol])
    window = (args.lo, args.hi) if args.lo is not None else None
    fit = fit_exponent(x, y, window=window, log_correction=args.log_correction)
    json.dump(fit.as_dict(), sys.stdout, indent=2)
    print()
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="wmlab",
                                 description="co-rotational wave map blow-up laboratory")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("ground-state", help="solve Q and emit CSV")
    g.add_argument("--target", default="sphere")
    g.add_argument("--rmin", type=float, default=1e-6)
    g.add_argument("--rmax", type=float, default=3e4)
    g.add_argument("--n", type=int, default=8192)
    g.add_argument("--out", default="")
    g.set_defaults(fn=_cmd_ground_state)

    b = sub.add_parser("build-profile", help="run the correction scheme")
    b.add_argument("--target", default="sphere")
    b.add_argument("--nu", type=float, required=True)
    b.add_argument("--k", type=int, default=1)
    b.add_argument("--t0", type=float, default=1e-4)
    b.set_defaults(fn=_cmd_build_profile)

    s = sub.add_parser("spectral", help="distorted Fourier diagnostics")
    s.add_argument("--target", default="sphere")
    s.add_argument("--ximin", type=float, default=1e-3)
    s.add_argument("--ximax", type=float, default=120.0)
    s.add_argument("--nxi", type=int, default=256)
    s.set_defaults(fn=_cmd_spectral)

    for name in ("evolve", "sweep"):
        e = sub.add_parser(name, help="evolve approximate data and fit the rate"
                           if name == "evolve" else "run several nu values")
        e.add_argument("--target", default="sphere")
        e.add_argument("--t0", type=float, default=0.1)
        e.add_argument("--n", type=int, default=2**14)
        e.add_argument("--cfl", type=float, default=0.4)
        e.add_argument("--snapshots", type=int, default=56)
        e.add_argument("--with-spectral", action="store_true")
        if name == "evolve":
            e.add_argument("--nu", type=float, required=True)
            e.set_defaults(fn=_cmd_evolve)
        else:
            e.add_argument("--nu-list", required=True)
            e.add_argument("--jobs", type=int, default=1)
            e.set_defaults(fn=_cmd_sweep, nu=0.5)

    f = sub.add_parser("fit", help="log-log exponent fit of a CSV column pair")
    f.add_argument("--input", required=True)
    f.add_argument("--xcol", required=True)
    f.add_argument("--ycol", required=True)
    f.add_argument("--lo", type=float, default=None)
    f.add_argument("--hi", type=float, default=None)
    f.add_argument("--log-correction", action="store_true")
    f.set_defaults(fn=_cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, WmlabError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
