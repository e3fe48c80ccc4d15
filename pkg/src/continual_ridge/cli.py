"""Command-line orchestration and report serialization.

Subcommands
-----------
theory        asymptotic metric curves, CSV
simulate      replicated finite-sample metric curves, CSV
compare       both engines joined, per-row three-standard-error check
tune          greedy ridge-level selection, JSON
validate-rmt  resolvent deviation table over an n-grid, CSV
scenarios     list scenario presets

Every command is a deterministic function of its configuration and seed;
reports carry no timestamps, so repeated runs are byte-identical.
Options override configuration-file values key by key.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .metrics import MetricCurves, compute_curves
from .regime import (
    LAMBDA_MODES,
    PRESET_NAMES,
    ConfigError,
    Regime,
    default_weights,
    load_config,
    scenario_preset,
    validate_config,
)
from .simulate import (
    ReplicationSummary,
    SimConfig,
    resolvent_convergence,
    run_replications,
)
from .theory import risk_table
from .tuning import greedy_lambda, scale_lambda

REPORT_COLUMNS = (
    "scenario", "gamma", "n", "p", "T_total", "k", "metric", "theory_value",
    "sim_mean", "sim_se", "B", "lambda_mode", "lambda_scale", "seed",
)

PRESET_SUMMARIES = {
    "identity": "identical unit covariance in every task",
    "iso-random": "isotropic tasks, scales drawn i.i.d. uniform(0.5, 3.5)",
    "iso-increasing": "isotropic tasks, scale 4t/(T+1) at task t",
    "block-random": "two-block tasks, block fractions i.i.d. uniform(0, 1), block eigenvalue 5",
    "block-increasing": "two-block tasks, block fraction t/T at task t, block eigenvalue 5",
}

COMPARE_FAIL_BUDGET = 0.05  # tolerated fraction of rows outside three standard errors


def _fmt(x):
    return f"{x:.12g}"


def resolve_lambda(cfg, scenario):
    """Per-task ridge levels for a configuration; returns (lam, trace or None)."""
    T, mode = cfg["T"], cfg["lambda_mode"]
    if mode == "fixed":
        return (cfg["lambda_scale"],) * T, None
    trace = greedy_lambda(scenario, T, cfg["gamma"], cfg["sigma2"], cfg["r2"])
    if mode == "greedy":
        if cfg["lambda_scale"] != 1.0:
            raise ConfigError("lambda_mode 'greedy' requires lambda_scale 1.0; "
                              "use lambda_mode 'scaled' to rescale tuned levels")
        return trace.lambda_star, trace
    return scale_lambda(trace, cfg["lambda_scale"]), trace


def theory_curves(cfg, scenario, lam):
    """Asymptotic metric curves for one configuration."""
    regime = Regime.uniform(cfg["T"], cfg["gamma"], lam,
                            sigma2=cfg["sigma2"], r2=cfg["r2"])
    table = risk_table(regime, scenario)
    return compute_curves(table.values, table.ridge, default_weights(cfg["T"]))


def simulation_summary(cfg, scenario, lam, workers=1, progress=None):
    """Replicated finite-sample metric curves for one configuration."""
    p = int(np.floor(cfg["n"] * cfg["gamma"]))
    sim_cfg = SimConfig(n=cfg["n"], p=p, T=cfg["T"], lam=tuple(lam),
                        sigma2=cfg["sigma2"], r2=cfg["r2"], seed=cfg["seed"],
                        replications=cfg["replications"])
    return run_replications(sim_cfg, scenario, workers=workers, progress=progress)


def report_rows(cfg, theory: MetricCurves | None = None,
                sim: ReplicationSummary | None = None):
    """Tidy report rows, one per (metric, prefix length), sorted by (metric, k)."""
    T = cfg["T"]
    p = int(np.floor(cfg["n"] * cfg["gamma"]))
    base = {
        "scenario": cfg["scenario"], "gamma": _fmt(cfg["gamma"]), "n": cfg["n"],
        "p": p, "T_total": T, "lambda_mode": cfg["lambda_mode"],
        "lambda_scale": _fmt(cfg["lambda_scale"]), "seed": cfg["seed"],
        "theory_value": "", "sim_mean": "", "sim_se": "", "B": "",
    }

    def series(metric, ks, th, mean, se):
        out = []
        for i, k in enumerate(ks):
            row = dict(base, metric=metric, k=k)
            if th is not None:
                row["theory_value"] = _fmt(th[i])
            if mean is not None:
                row["sim_mean"] = _fmt(mean[i])
                row["sim_se"] = _fmt(se[i])
                row["B"] = sim.B
            out.append(row)
        return out

    rows = []
    rows += series("avg_risk", range(1, T + 1),
                   theory.avg_risk if theory else None,
                   sim.avg_mean if sim else None, sim.avg_se if sim else None)
    rows += series("bwt", range(2, T + 1),
                   theory.bwt if theory else None,
                   sim.bwt_mean if sim else None, sim.bwt_se if sim else None)
    rows += series("fwt", range(2, T + 1),
                   theory.fwt if theory else None,
                   sim.fwt_mean if sim else None, sim.fwt_se if sim else None)
    rows.sort(key=lambda r: (r["metric"], r["k"]))
    return rows


def flag_discrepancies(rows):
    """Indices of joined rows where |theory - sim_mean| exceeds 3 * sim_se."""
    flagged = []
    for i, row in enumerate(rows):
        if row["theory_value"] == "" or row["sim_mean"] == "":
            continue
        gap = abs(float(row["theory_value"]) - float(row["sim_mean"]))
        if gap > 3.0 * float(row["sim_se"]):
            flagged.append(i)
    return flagged


def write_report(rows, out_path=None, columns=REPORT_COLUMNS):
    """Write rows as CSV to a path, or to stdout when no path is given."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else validate_config({})
    overrides = {
        "scenario": args.scenario, "T": args.tasks, "n": args.n,
        "gamma": args.gamma, "sigma2": getattr(args, "sigma2", None),
        "r2": getattr(args, "r2", None), "lambda_mode": args.lambda_mode,
        "lambda_scale": args.lambda_scale, "seed": args.seed,
        "replications": args.replications,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return validate_config(cfg)


def _progress_printer(stream):
    def progress(done, total):
        print(f"replication {done}/{total}", file=stream)
    return progress


def _materialize_scenario(cfg):
    """Preset scenario as realized at the configured dimension.

    Both engines must condition on the same covariances; block fractions
    are snapped to the grid realizable at p = floor(n * gamma).
    """
    scenario, note = scenario_preset(cfg["scenario"], cfg["T"], cfg["seed"])
    p = int(np.floor(cfg["n"] * cfg["gamma"]))
    return scenario.at_dimension(p), note


def cmd_theory(args):
    cfg = _resolve_config(args)
    scenario, _ = _materialize_scenario(cfg)
    lam, _ = resolve_lambda(cfg, scenario)
    rows = report_rows(cfg, theory=theory_curves(cfg, scenario, lam))
    write_report(rows, args.out)
    return 0


def cmd_simulate(args):
    cfg = _resolve_config(args)
    scenario, _ = _materialize_scenario(cfg)
    lam, _ = resolve_lambda(cfg, scenario)
    sim = simulation_summary(cfg, scenario, lam, workers=args.threads,
                             progress=_progress_printer(sys.stderr))
    rows = report_rows(cfg, sim=sim)
    write_report(rows, args.out)
    return 0


def cmd_compare(args):
    cfg = _resolve_config(args)
    scenario, _ = _materialize_scenario(cfg)
    lam, _ = resolve_lambda(cfg, scenario)
    theory = theory_curves(cfg, scenario, lam)
    sim = simulation_summary(cfg, scenario, lam, workers=args.threads,
                             progress=_progress_printer(sys.stderr))
    rows = report_rows(cfg, theory=theory, sim=sim)
    flagged = flag_discrepancies(rows)
    write_report(rows, args.out)
    frac = len(flagged) / len(rows)
    status = "PASS" if frac <= COMPARE_FAIL_BUDGET else "FAIL"
    print(f"compare: {len(rows) - len(flagged)}/{len(rows)} rows within "
          f"3*SE ({100 * (1 - frac):.1f}%) -> {status}", file=sys.stderr)
    for i in flagged:
        r = rows[i]
        print(f"  flagged: metric={r['metric']} k={r['k']} theory={r['theory_value']} "
              f"sim={r['sim_mean']} se={r['sim_se']}", file=sys.stderr)
    return 0 if frac <= COMPARE_FAIL_BUDGET else 1


def cmd_tune(args):
    cfg = _resolve_config(args)
    scenario, note = _materialize_scenario(cfg)
    trace = greedy_lambda(scenario, cfg["T"], cfg["gamma"], cfg["sigma2"], cfg["r2"])
    payload = {
        "config": cfg,
        "scenario_note": note,
        "lambda_star": list(trace.lambda_star),
        "objective": list(trace.objective),
        "lambda": list(scale_lambda(trace, cfg["lambda_scale"])),
        "brackets": [list(b) for b in trace.brackets],
        "evaluations": list(trace.evaluations),
        "boundary_hit": list(trace.boundary_hit),
        "multimodal": list(trace.multimodal),
    }
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate_rmt(args):
    n_list = [int(x) for x in args.n.split(",")]
    reports, slope_trace, slope_quad = resolvent_convergence(
        n_list, args.gamma, args.lam, trials=args.trials, seed=args.seed)
    columns = ("n", "p", "gamma", "lambda", "trials", "trace_dev", "trace_tol",
               "quad_dev", "quad_tol")
    rows = [{
        "n": r.n, "p": r.p, "gamma": _fmt(r.gamma), "lambda": _fmt(r.lam),
        "trials": r.trials, "trace_dev": _fmt(r.trace_dev),
        "trace_tol": _fmt(5.0 / np.sqrt(r.n)), "quad_dev": _fmt(r.quad_dev),
        "quad_tol": _fmt(10.0 / np.sqrt(r.n)),
    } for r in reports]
    write_report(rows, args.out, columns=columns)
    print(f"fitted log-log slopes: trace {slope_trace:.3f}, quadratic form "
          f"{slope_quad:.3f}", file=sys.stderr)
    return 0


def cmd_scenarios(args):
    for name in PRESET_NAMES:
        print(f"{name:18s} {PRESET_SUMMARIES[name]}")
    return 0


def _add_shared_options(sub):
    sub.add_argument("--config", help="JSON configuration file")
    sub.add_argument("--out", help="output path (default: stdout)")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--replications", type=int, help="replication count B")
    sub.add_argument("--scenario", choices=PRESET_NAMES, help="scenario preset")
    sub.add_argument("--gamma", type=float, help="aspect ratio p/n")
    sub.add_argument("--tasks", type=int, help="task count T")
    sub.add_argument("--n", type=int, help="per-task sample size")
    sub.add_argument("--lambda-mode", choices=LAMBDA_MODES, dest="lambda_mode")
    sub.add_argument("--lambda-scale", type=float, dest="lambda_scale")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker processes for replications")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="continual-ridge",
        description="Asymptotic risk curves and Monte Carlo validation for "
                    "continual ridge regression")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, fn, doc in (
        ("theory", cmd_theory, "asymptotic metric curves as CSV"),
        ("simulate", cmd_simulate, "replicated finite-sample metric curves as CSV"),
        ("compare", cmd_compare, "theory and simulation joined with a 3*SE check"),
        ("tune", cmd_tune, "greedy ridge-level selection as JSON"),
    ):
        sub = subs.add_parser(name, help=doc)
        _add_shared_options(sub)
        sub.set_defaults(fn=fn)

    sub = subs.add_parser("validate-rmt", help="resolvent deviation table over an n-grid")
    sub.add_argument("--n", default="100,400,1600",
                     help="comma-separated sample sizes")
    sub.add_argument("--gamma", type=float, default=1.0)
    sub.add_argument("--lambda", type=float, default=1.0, dest="lam")
    sub.add_argument("--trials", type=int, default=5)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", help="output path (default: stdout)")
    sub.set_defaults(fn=cmd_validate_rmt)

    sub = subs.add_parser("scenarios", help="list scenario presets")
    sub.set_defaults(fn=cmd_scenarios)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
