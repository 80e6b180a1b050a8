"""Command-line front end.

Subcommands: synth (generate + save an instance), solve (run the SDP and
save lambda/Q), recover (delays + messages from a saved solution), certify
(constructive certificate check), dualpoly (emit the dual-polynomial curve
table), experiment (Monte Carlo sweep).
"""

import argparse
import json
import os
import sys

import numpy as np

from .certificate import build_certificate
from .harness import (
    add_noise,
    dualpoly_table_data,
    emit_tables,
    gen_instance,
    nmse,
    parse_constellation,
    recover_from_solution,
    run_experiment,
    ser,
)
from .recovery import RecoverOptions
from .serialize import (
    load_config,
    load_instance,
    load_solution,
    save_instance,
    save_recovery,
    save_solution,
)
from .solver import SolverOptions, solve_noisy


def _snr_arg(text):
    if text.lower() in ("inf", "infinity"):
        return np.inf
    return float(text)


def _outdir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _solver_opts(base, args):
    opts = base or SolverOptions()
    if args.max_iters is not None:
        opts.max_iters = args.max_iters
    if args.tol is not None:
        opts.eps_abs = args.tol
        opts.eps_rel = 10.0 * args.tol
    if args.shared_q:
        opts.shared_q = True
    return opts


def cmd_synth(args):
    spec, _solver, _config = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)
    inst = gen_instance(spec)
    y = noise = None
    if args.snr is not None and np.isfinite(args.snr):
        y, noise = add_noise(inst.y_clean, args.snr, inst.grid, spec.seed)
    out = _outdir(args)
    path = save_instance(inst, os.path.join(out, "instance.json"), y=y, noise=noise)
    print(f"wrote {path}")
    return 0


def cmd_solve(args):
    inst, y, noise = load_instance(args.instance)
    grid = inst.grid
    if args.snr is not None and np.isfinite(args.snr) and noise is None:
        y, noise = add_noise(inst.y_clean, args.snr, grid, inst.spec.seed)
    eta = noise.eta if noise is not None else 0.0
    opts = _solver_opts(None, args)
    sol = solve_noisy(y, inst.codebooks, grid, eta, opts)
    out = _outdir(args)
    path = save_solution(sol, os.path.join(out, "solution.json"))
    print(f"status={sol.status} iterations={sol.iterations} "
          f"objective={sol.objective:.9g} r_prim={sol.primal_residual:.3e} "
          f"r_dual={sol.dual_residual:.3e}")
    print(f"wrote {path}")
    return 0 if sol.status != "numerical_failure" else 1


def cmd_recover(args):
    inst, y, noise = load_instance(args.instance)
    sol = load_solution(args.solution)
    grid = inst.grid
    noisy = noise is not None and np.isfinite(noise.snr_db)
    opts = RecoverOptions(
        root_radius_tol=5e-2 if noisy else 1e-3,
        threshold=args.threshold,
        grid_size=args.grid_size or 4096,
    )
    kind, order = parse_constellation(inst.spec.constellation)
    estimates, rec = recover_from_solution(
        y, inst.codebooks, grid, sol, method=args.method,
        recover_opts=opts, constellation=order,
    )
    nm = []
    se = []
    for i, ud in enumerate(rec.users):
        a, _m = (1.0, 1.0) if ud.degenerate else nmse(
            ud.message_estimate, inst.messages[i].coeffs)
        nm.append(a)
        if kind == "ask" and inst.symbols[i] is not None and ud.symbols is not None:
            se.append(ser(ud.symbols, inst.symbols[i]))
        est_str = ", ".join(f"{t:.6f}" for t in estimates[i].delays)
        tru_str = ", ".join(f"{t:.6f}" for t in inst.channels[i].delays)
        print(f"user {i}: delays [{est_str}] (truth [{tru_str}]) nmse={a:.3e}")
    out = _outdir(args)
    path = save_recovery(estimates, rec, os.path.join(out, "recovery.json"),
                         nmse_per_user=nm, ser_per_user=se if se else None)
    print(f"ls_residual={rec.ls_residual:.3e}")
    print(f"wrote {path}")
    return 0


def cmd_certify(args):
    inst, _y, _noise = load_instance(args.instance)
    rep = build_certificate(inst.channels, inst.messages, inst.codebooks, inst.grid)
    out = _outdir(args)
    path = os.path.join(out, "certificate.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "format_version": 1,
            "kind": "certificate",
            "valid": rep.valid,
            "max_interp_error": rep.max_interp_error,
            "sup_offsupport_norm": rep.sup_offsupport_norm,
            "d_condition": rep.d_condition,
            "max_support_deriv": rep.max_support_deriv,
            "near_concave": rep.near_concave,
        }, fh)
    print(f"valid={rep.valid} interp_error={rep.max_interp_error:.3e} "
          f"sup_offsupport={rep.sup_offsupport_norm:.6f} "
          f"d_condition={rep.d_condition:.4f}")
    print(f"wrote {path}")
    return 0 if rep.valid else 1


def cmd_dualpoly(args):
    inst, _y, _noise = load_instance(args.instance)
    sol = load_solution(args.solution)
    data = dualpoly_table_data(sol, inst.codebooks, inst.grid,
                               [ch.delays for ch in inst.channels],
                               grid_size=args.grid_size or 4096)
    out = _outdir(args)
    path = emit_tables("dualpoly", data, os.path.join(out, "dualpoly.dat"))
    print(f"wrote {path}")
    return 0


def cmd_experiment(args):
    _spec, _solver, config = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace
        config.instance = replace(config.instance, seed=args.seed)
    summary = run_experiment(config)
    out = _outdir(args)
    xs = [a["sweep_value"] for a in summary.aggregates]
    nm = np.array([a["mean_nmse_aligned"] for a in summary.aggregates])
    emit_tables("sweep", {"x": xs, "metric": nm, "label": "nmse"},
                os.path.join(out, "nmse_sweep.dat"))
    if summary.aggregates[0]["mean_ser"] is not None:
        se = np.array([a["mean_ser"] for a in summary.aggregates])
        emit_tables("sweep", {"x": xs, "metric": se, "label": "ser"},
                    os.path.join(out, "ser_sweep.dat"))
    doc = {
        "format_version": 1,
        "kind": "experiment_summary",
        "sweep_axis": config.sweep_axis,
        "aggregates": [
            {k: (v.tolist() if isinstance(v, np.ndarray) else v)
             for k, v in agg.items()}
            for agg in summary.aggregates
        ],
    }
    path = os.path.join(out, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    for agg in summary.aggregates:
        mean_nm = np.asarray(agg["mean_nmse_aligned"])
        line = (f"x={agg['sweep_value']:g} trials={agg['trials']} "
                f"failures={agg['failures']} nmse={mean_nm.mean():.3e} "
                f"misses={agg['misses']} false_alarms={agg['false_alarms']}")
        if agg["mean_ser"] is not None:
            line += f" ser={np.asarray(agg['mean_ser']).mean():.4f}"
        print(line)
    print(f"wrote {path}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="offgrid-demix",
        description="Multi-user blind deconvolution with off-the-grid delays",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, instance=False, solution=False):
        if config:
            sp.add_argument("--config", required=True, help="JSON config path")
        if instance:
            sp.add_argument("instance", help="instance.json path")
        if solution:
            sp.add_argument("solution", help="solution.json path")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--snr", type=_snr_arg, default=None, help="SNR in dB or 'inf'")
        sp.add_argument("--grid-size", type=int, default=None)
        sp.add_argument("--threshold", type=float, default=None)
        sp.add_argument("--max-iters", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--shared-q", action="store_true")
        sp.add_argument("--method", choices=("roots", "grid"), default="roots")

    sp = sub.add_parser("synth", help="generate and save an instance")
    common(sp, config=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("solve", help="run the SDP and save lambda/Q")
    common(sp, instance=True)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("recover", help="delays and messages from a solution")
    common(sp, instance=True, solution=True)
    sp.set_defaults(func=cmd_recover)

    sp = sub.add_parser("certify", help="constructive exact-recovery certificate")
    common(sp, instance=True)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("dualpoly", help="emit the dual-polynomial curve table")
    common(sp, instance=True, solution=True)
    sp.set_defaults(func=cmd_dualpoly)

    sp = sub.add_parser("experiment", help="Monte Carlo sweep")
    common(sp, config=True)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
