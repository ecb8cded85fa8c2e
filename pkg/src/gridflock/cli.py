"""Command-line interface.

Exit codes: 0 ok, 2 divergence, 3 configuration or solve error,
4 stability-check failure.
"""
import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import scenarios
from .errors import (ConfigError, DivergenceError, GridflockError, MissingRun,
                     UndelayedUnstable)
from .linalg import closed_loop_eigenvalues, solve_care
from .protocol import A_AGENT, B_AGENT
from .sim import run, summarize, write_summary, write_trace
from .stability import frequency_sweep, frozen_loops, hurwitz_check

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG, EXIT_UNSTABLE = 0, 2, 3, 4

FIGURES = {
    "scenario1": ("fig3_voltage.csv", "fig4_reactive.csv"),
    "scenario2": ("fig5_voltage.csv", "fig6_reactive.csv"),
    "scenario3": ("fig7_voltage.csv", "fig8_reactive.csv"),
    "scenario4": ("fig9_voltage.csv", "fig10_reactive.csv"),
}


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _default_out(cfg_dir=None):
    return os.environ.get("GRIDFLOCK_OUT") or cfg_dir or "out"


def write_plot_data(trace, directory, name):
    volt_name, react_name = FIGURES.get(name, (f"{name}_voltage.csv", f"{name}_reactive.csv"))
    with open(os.path.join(directory, volt_name), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "V_pilot", "V_ref"])
        for t, v in zip(trace.t, trace.V_pilot):
            w.writerow([repr(float(t)), repr(float(v)), repr(float(trace.V_ref))])
    with open(os.path.join(directory, react_name), "w", newline="") as fh:
        w = csv.writer(fh)
        N = trace.dQ.shape[1]
        w.writerow(["t", *[f"dQ_{i + 1}" for i in range(N)]])
        for k, t in enumerate(trace.t):
            w.writerow([repr(float(t)), *[repr(float(q)) for q in trace.dQ[k]]])


def _resolve_document(args):
    if args.preset:
        doc = scenarios.preset_document(args.preset)
    else:
        try:
            with open(args.scenario) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read scenario file {args.scenario}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {args.scenario}: {exc}") from exc
    return scenarios.apply_overrides(doc, seed=args.seed, dt=args.dt, t_end=args.t_end)


def execute(doc, out_dir, plot_data=False):
    """Run one scenario document and write its outputs. Returns an exit code."""
    cfg = scenarios.scenario_from_dict(doc)
    os.makedirs(out_dir, exist_ok=True)
    scenarios.write_scenario(cfg, os.path.join(out_dir, "scenario.json"))
    code = EXIT_OK
    try:
        trace = run(cfg)
    except DivergenceError as exc:
        _err(str(exc))
        trace = exc.trace
        code = EXIT_DIVERGED
    if cfg.outputs.emit_trace and trace is not None:
        write_trace(trace, out_dir)
    summary = summarize(trace) if trace is not None and len(trace) else {
        "scenario": cfg.name, "diverged": True}
    if cfg.outputs.emit_summary:
        write_summary(summary, out_dir)
    if plot_data and trace is not None:
        write_plot_data(trace, out_dir, cfg.name)
    return code


def _execute_preset(name, out_dir, overrides, plot_data):
    doc = scenarios.apply_overrides(scenarios.preset_document(name), **overrides)
    return execute(doc, out_dir, plot_data)


def cmd_run(args):
    overrides = {"seed": args.seed, "dt": args.dt, "t_end": args.t_end}
    try:
        if args.sweep:
            base = args.out or _default_out()
            names = sorted(scenarios.PRESETS)
            with ProcessPoolExecutor() as pool:
                codes = list(pool.map(_execute_preset, names,
                                      [os.path.join(base, n) for n in names],
                                      [overrides] * len(names), [args.plot_data] * len(names)))
            for n, c in zip(names, codes):
                print(f"{n}: exit {c}")
            return max(codes)
        doc = _resolve_document(args)
        out = args.out or _default_out(doc.get("outputs", {}).get("directory"))
        code = execute(doc, out, args.plot_data)
        with open(os.path.join(out, "summary.json")) as fh:
            print(fh.read(), end="")
        return code
    except (ConfigError, GridflockError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_CONFIG


def cmd_stability(args):
    run_dir = args.run
    try:
        try:
            cfg = scenarios.load_scenario(os.path.join(run_dir, "scenario.json"))
            with open(os.path.join(run_dir, "summary.json")) as fh:
                summary = json.load(fh)
        except (OSError, ConfigError) as exc:
            raise MissingRun(f"no completed run in {run_dir}: {exc}") from exc
        if summary.get("diverged") or "rho_final" not in summary:
            raise MissingRun(f"run in {run_dir} did not complete")
        coop = np.asarray(summary.get("cooperative", [True] * cfg.n_agents), dtype=bool)
        if not coop.any():
            raise MissingRun(f"run in {run_dir} has no cooperating agents (droop-only)")
        loops = frozen_loops(cfg, summary["rho_final"], coop,
                             delay_multiplier=args.delay_multiplier)
    except MissingRun as exc:
        _err(f"MissingRun: {exc}")
        return EXIT_CONFIG

    reports = []
    worst = None
    code = EXIT_OK
    for t, loop in loops:
        stable, max_re = hurwitz_check(loop)
        entry = {"t_s": t, "max_real_part": max_re}
        try:
            rep = frequency_sweep(loop, omega_max=args.omega_max, grid_points=args.grid,
                                  threshold=args.threshold)
        except UndelayedUnstable as exc:
            entry.update({"pass": False, "error": f"UndelayedUnstable: {exc}"})
            code = EXIT_UNSTABLE
        else:
            entry.update(rep.to_dict())
            if not rep.passed:
                code = EXIT_UNSTABLE
            if worst is None or rep.min_sigma < worst["min_sigma"]:
                worst = rep.to_dict()
        reports.append(entry)
    result = dict(worst or {"pass": False})
    result["pass"] = code == EXIT_OK
    result.update({"delay_multiplier": args.delay_multiplier, "topologies": reports})
    out = args.out or run_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "stability.json"), "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps({k: result[k] for k in ("pass", "min_sigma", "argmin_omega", "omega_max",
                                             "grid_points", "threshold") if k in result}))
    return code


def _matrix_arg(text, name):
    try:
        return np.atleast_2d(np.asarray(json.loads(text), dtype=float))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"--{name}: expected a JSON matrix: {exc}") from exc


def cmd_care(args):
    try:
        A = _matrix_arg(args.A, "A") if args.A else A_AGENT
        B = _matrix_arg(args.B, "B") if args.B else B_AGENT
        if B.shape[0] != A.shape[0] and B.shape[0] == 1:
            B = B.T
        M = _matrix_arg(args.M, "M") if args.M else np.eye(A.shape[0])
        sol = solve_care(A, B, M)
    except (GridflockError, ValueError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_CONFIG
    eig = closed_loop_eigenvalues(A, B, sol)
    out = {
        "P": sol.P.tolist(),
        "BtP": sol.feedback_row.tolist(),
        "residual_norm": sol.residual_norm,
        "closed_loop_eigenvalues": [[float(z.real), float(z.imag)] for z in eig],
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_presets(args):
    for name, (_, desc) in sorted(scenarios.PRESETS.items()):
        print(f"{name}\t{desc}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gridflock",
                                description="Adaptive distributed voltage-control simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write traces")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(scenarios.PRESETS))
    src.add_argument("--scenario", help="path to a JSON scenario file")
    src.add_argument("--sweep", action="store_true", help="run every preset into OUT/<name>/")
    r.add_argument("--out", help="output directory (default: $GRIDFLOCK_OUT or the file's)")
    r.add_argument("--seed", type=int)
    r.add_argument("--dt", type=float)
    r.add_argument("--t-end", type=float, dest="t_end")
    r.add_argument("--plot-data", action="store_true", help="also write per-figure CSV slices")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("stability", help="frozen-gain delay sweep of a completed run")
    s.add_argument("--run", required=True, help="directory written by 'run'")
    s.add_argument("--out", help="where to write stability.json (default: the run directory)")
    s.add_argument("--omega-max", type=float, dest="omega_max")
    s.add_argument("--grid", type=int, default=4096)
    s.add_argument("--delay-multiplier", type=float, default=1.0, dest="delay_multiplier")
    s.add_argument("--threshold", type=float, default=1e-8)
    s.set_defaults(func=cmd_stability)

    c = sub.add_parser("care", help="solve the gain-design Riccati equation")
    c.add_argument("--A")
    c.add_argument("--B")
    c.add_argument("--M")
    c.set_defaults(func=cmd_care)

    pr = sub.add_parser("presets", help="preset scenarios")
    pr.add_argument("action", choices=["list"])
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
