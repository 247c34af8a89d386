"""Command-line entry point: ``basinprobe <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import harness as hz
from .data import AttackSpec, build_attack_set
from .errors import BasinProbeError, InvalidSpecError
from .hessian import HvpOperator, frobenius_estimate, spectral_report
from .io import environment_fingerprint, load_solution, save_solution, write_csv, write_json
from .net import LossKind, Network
from .train import InitStrategy, init_params, train
from .twolayer import (
    InputDistribution,
    TwoLayerNet,
    check_corollary1,
    input_grad_complexity,
    fisher_c,
    node_scale,
    random_two_layer,
    SWEEP_FIELDS,
    theorem1_sweep,
)

log = logging.getLogger("basinprobe")

SUBCOMMANDS = ("polyfit", "train", "attack-train", "spectrum", "frobenius", "complexity", "bounds",
               "basin-sample", "sgd-vs-gd", "zoo", "convex-demo")


class Run:
    """Output directory plus the artifact list that goes into the manifest."""

    def __init__(self, out, force):
        self.out = Path(out)
        if self.out.exists() and any(self.out.iterdir()):
            if not force:
                raise InvalidSpecError(f"{self.out}: output directory exists and is not empty; pass --force")
            shutil.rmtree(self.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []

    def path(self, name):
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(name)
        return p

    def csv(self, name, rows, fields):
        write_csv(self.path(name), rows, fields)

    def json(self, name, obj):
        write_json(self.path(name), obj)

    def manifest(self, subcommand, effective, seed, summary):
        files = {}
        for name in sorted(set(self.artifacts)):
            files[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
        write_json(self.out / "manifest.json", {
            "tool": "basinprobe",
            "version": __version__,
            "subcommand": subcommand,
            "seed": seed,
            "effective_config": effective,
            "environment": environment_fingerprint(),
            "artifacts": files,
            "summary": summary,
        })


def _study_config(args) -> hz.StudyConfig:
    cfg = hz.StudyConfig.load(args.config) if args.config else hz.StudyConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.k is not None:
        over["k"] = args.k
    if args.probes is not None:
        over["probes"] = args.probes
    if args.fd_eps is not None:
        over["fd_epsilon"] = args.fd_eps
    if args.gamma is not None:
        over["gammas"] = ",".join(str(g) for g in args.gamma)
    if args.attack_size is not None:
        over["attack_sizes"] = ",".join(str(a) for a in args.attack_size)
    if args.init is not None:
        over["inits"] = ",".join(args.init)
    if args.batch_size is not None:
        over["batch_size"] = args.batch_size
    if args.epochs is not None:
        over["max_epochs"] = args.epochs
    return dataclasses.replace(cfg, **over)


def _seed(args, cfg):
    return cfg.seed if args.seed is None else args.seed


def cmd_polyfit(args, cfg, run):
    res, ds = hz.polyfit_study(seed=_seed(args, cfg))
    run.csv("samples.csv", [{"x": x, "y": y} for x, y in zip(ds.inputs[:, 0], ds.labels)], ["x", "y"])
    run.csv("curves/truth.csv", [{"x": x, "prediction": y} for x, y in zip(res.grid, res.truth)], ["x", "prediction"])
    for depth, pred in res.mlp_curves.items():
        run.csv(f"curves/mlp_depth{depth}.csv", [{"x": x, "prediction": y} for x, y in zip(res.grid, pred)],
                ["x", "prediction"])
    for (deg, lam), pred in res.krr_curves.items():
        run.csv(f"curves/krr_deg{deg}_lam{lam:g}.csv", [{"x": x, "prediction": y} for x, y in zip(res.grid, pred)],
                ["x", "prediction"])
    table = res.table()
    run.csv("polyfit_summary.csv", table, hz.POLY_FIELDS)
    lines = [f"{r['model']:>22s}  max deviation {r['max_deviation'] if r['max_deviation'] is None else round(r['max_deviation'], 4)}"
             for r in table]
    return {"models": table}, lines


def _bundle(cfg):
    return hz.load_bundle(cfg)


def _train_one(args, cfg, run, attack):
    bundle = _bundle(cfg)
    seed = _seed(args, cfg)
    gamma = cfg.gamma_grid[0] if attack else 0.0
    if attack and gamma <= 0:
        raise InvalidSpecError("attack-train needs --gamma > 0")
    net = Network((bundle.train.dim,) + cfg.hidden_dims + (bundle.train.num_classes,), cfg.activation)
    init = InitStrategy.parse(cfg.init_grid[0], seed=seed)
    attack_ds = None
    if attack:
        size = cfg.attack_size_grid[0]
        if size > len(bundle.attack_pool):
            raise InvalidSpecError(f"attack size {size} exceeds the pool of {len(bundle.attack_pool)}")
        attack_ds = build_attack_set(AttackSpec(bundle.attack_pool.subset(slice(0, size)), seed,
                                                bundle.train.num_classes))
    tcfg = cfg.train_config(gamma, seed)
    sol = train(net.with_params(init_params(net, init)), bundle.train, tcfg, attack_ds, bundle.test, init)
    run.csv("metrics.csv", sol.history, ["epoch", "R_train", "R_attack", "train_acc", "test_acc"])
    stem = run.out / "solution"
    save_solution(sol, stem)
    run.artifacts += ["solution.json", "solution.f64"]
    meta = sol.metadata()
    lines = [f"train accuracy {sol.train_accuracy:.4f}  test accuracy {sol.test_accuracy:.4f}",
             f"epochs {sol.epochs_used}  target reached {sol.reached_target}"]
    if attack:
        lines.append(f"attack accuracy (wrong labels) {sol.attack_accuracy:.4f}")
    return meta, lines


def cmd_train(args, cfg, run):
    return _train_one(args, cfg, run, attack=False)


def cmd_attack_train(args, cfg, run):
    return _train_one(args, cfg, run, attack=True)


def _solution_operator(args, cfg):
    if not args.solution:
        raise InvalidSpecError("--solution PATH to a saved solution JSON is required")
    net, meta = load_solution(args.solution)
    bundle = _bundle(cfg)
    if bundle.train.dim != net.input_dim:
        raise InvalidSpecError(f"solution expects {net.input_dim} inputs, dataset has {bundle.train.dim}")
    op = HvpOperator.for_network(net, bundle.train.inputs, bundle.train.labels, LossKind.SOFTMAX_CROSS_ENTROPY,
                                 fd_epsilon=cfg.fd_epsilon)
    return op, meta


def cmd_spectrum(args, cfg, run):
    op, meta = _solution_operator(args, cfg)
    rep = spectral_report(op, cfg.k, cfg.probes, _seed(args, cfg), "auto", cfg.dense_cap, cfg.assembly_fd_epsilon)
    run.csv("eigenvalues.csv", [{"index": i, "eigenvalue": v} for i, v in enumerate(rep.eigenvalues)],
            ["index", "eigenvalue"])
    d = rep.to_dict()
    d.pop("eigenvalues")
    d["solution"] = str(args.solution)
    run.json("spectral_report.json", d)
    lines = [f"V({cfg.k}) = {rep.v_of_k}  (k_used {rep.k_used})",
             f"||H||_F^2 estimate {rep.frob_sq_estimate:.6g} +- {rep.frob_sq_se:.3g}",
             f"negative eigenvalues {rep.num_negative}"]
    return d, lines


def cmd_frobenius(args, cfg, run):
    op, meta = _solution_operator(args, cfg)
    mean, se = frobenius_estimate(op, cfg.probes, _seed(args, cfg))
    d = {"frob_sq_estimate": mean, "frob_sq_se": se, "probes": cfg.probes, "fd_epsilon": cfg.fd_epsilon,
         "solution": str(args.solution)}
    run.json("frobenius.json", d)
    return d, [f"||H||_F^2 estimate {mean:.6g} +- {se:.3g} ({cfg.probes} probes)"]


def _two_layer(args, seed):
    if args.solution:
        net, _ = load_solution(args.solution)
        return TwoLayerNet.from_network(net)
    return random_two_layer(args.width, args.input_dim, np.random.default_rng(seed))


def cmd_complexity(args, cfg, run):
    seed = _seed(args, cfg)
    net = _two_layer(args, seed)
    dist = InputDistribution.standard_normal(net.d, args.samples, seed)
    X = dist.samples(net.d)
    rows = []
    for t in (1.0, 0.5, 2.0, 10.0):
        scaled = net if t == 1.0 else node_scale(net, t)
        cx = input_grad_complexity(scaled, dist, X)
        I_c = fisher_c(scaled, dist, X)
        rows.append({"t": t, "complexity": cx.mean, "bilinear": cx.bilinear, "std_error": cx.std_error,
                     "fisher_c_frob_sq": float(np.sum(I_c * I_c))})
    run.csv("complexity.csv", rows, ["t", "complexity", "bilinear", "std_error", "fisher_c_frob_sq"])
    d = {"K": net.K, "d": net.d, "samples": args.samples, "rows": rows}
    return d, [f"E||grad_x f||^2 = {rows[0]['complexity']:.6g} +- {rows[0]['std_error']:.2g} (K={net.K}, d={net.d})"]


def cmd_bounds(args, cfg, run):
    seed = _seed(args, cfg)
    rows = theorem1_sweep(args.nets, 8, 8, args.samples, seed)
    run.csv("theorem1_sweep.csv", rows, SWEEP_FIELDS)
    held = sum(r["holds"] for r in rows)
    zoo = hz.two_layer_zoo(seed=seed)
    zrows = [{**z["info"], **z["report"].to_dict(), "holds": z["report"].corollary1_holds} for z in zoo]
    run.csv("corollary1_zoo.csv", zrows, hz.TWO_LAYER_FIELDS)
    d = {"theorem1_nets": len(rows), "theorem1_held": held,
         "corollary1_nets": len(zrows), "corollary1_held": sum(r["holds"] for r in zrows)}
    return d, [f"first bound held on {held}/{len(rows)} random nets",
               f"Hessian bound held on {d['corollary1_held']}/{len(zrows)} trained nets"]


def cmd_basin_sample(args, cfg, run):
    bundle = _bundle(cfg)
    base = cfg.train_config(0.0)
    inits = cfg.init_grid if args.init else None
    table, runs = hz.basin_fraction_study(bundle, cfg.hidden_dims, inits, cfg.seeds_per_cell if args.seeds is None
                                          else args.seeds, base, hz.BASIN_LR_OVERRIDES, _seed(args, cfg),
                                          cfg.activation)
    run.csv("basin_fraction.csv", table, hz.BASIN_FIELDS)
    run.csv("basin_runs.csv", runs, ["strategy", "seed", "learning_rate", "reached", "train_accuracy",
                                     "test_accuracy", "epochs", "class", "status"])
    lines = [f"{r['strategy']:>16s}  reached {r['reached']}/{r['runs']}  good {r['good']}  bad {r['bad']}  "
             f"test {_pm(r['test_mean'], r['test_sd'])}" for r in table]
    return {"table": table}, lines


def _pm(m, s):
    return "n/a" if m is None else f"{100 * m:.2f} +- {100 * s:.2f}"


def cmd_sgd_vs_gd(args, cfg, run):
    bundle = _bundle(cfg)
    table, runs = hz.sgd_vs_fullbatch_study(bundle.train, bundle.test, cfg.hidden_dims,
                                            6 if args.seeds is None else args.seeds, study_seed=_seed(args, cfg))
    run.csv("sgd_vs_gd.csv", table, hz.COMPARE_FIELDS)
    run.csv("sgd_vs_gd_runs.csv", runs, ["mode", "seed", "batch_size", "learning_rate", "reached",
                                         "train_accuracy", "test_accuracy", "epochs"])
    lines = [f"{r['mode']:>10s} (batch {r['batch_size']})  train {_pm(r['train_mean'], r['train_sd'])}  "
             f"test {_pm(r['test_mean'], r['test_sd'])}" for r in table]
    return {"table": table}, lines


def cmd_zoo(args, cfg, run):
    records, statuses = hz.run_minima_zoo(cfg, threads=args.threads)
    run.csv("records.csv", [r.row() for r in records], hz.RECORD_FIELDS)
    for r in records:
        run.csv(f"spectra/{r.solution_id}.csv", [{"index": i, "eigenvalue": v} for i, v in enumerate(r.eigenvalues)],
                ["index", "eigenvalue"])
    status_rows = [dataclasses.asdict(s) for s in statuses]
    run.csv("runs.csv", status_rows, ["solution_id", "cell", "seed_index", "status", "detail", "epochs",
                                      "train_accuracy", "test_accuracy"])
    summary = {"records": len(records), "runs": len(statuses),
               "status_counts": {k: sum(s.status == k for s in statuses) for k in ("ok", "target_missed", "error")},
               "per_run_status": status_rows}
    lines = [f"{len(records)} probed solutions from {len(statuses)} runs"]
    if len(records) >= 5:
        corr = hz.correlate(records, seed=cfg.seed)
        summary["correlation"] = {k: v.to_dict() for k, v in corr.items()}
        run.json("correlation.json", summary["correlation"])
        for k, v in corr.items():
            lines.append(f"spearman(test accuracy, {k}) = {v.rho} (p = {v.p_value})")
    return summary, lines


def cmd_convex_demo(args, cfg, run):
    report, minima = hz.convex_demo(seed=_seed(args, cfg))
    run.json("constancy_report.json", report.to_dict())
    run.csv("minima.csv", [{"minimum": i, "test_mse": m, "theta_norm": float(np.linalg.norm(t))}
                           for i, (m, t) in enumerate(zip(report.test_mse, minima))],
            ["minimum", "test_mse", "theta_norm"])
    return report.to_dict(), [f"{report.num_minima} minima; Hessians identical: {report.hessians_identical}",
                              f"max gradient norm {report.max_grad_norm:.3g}; test MSE spread {report.test_mse_spread:.4g}"]


COMMANDS = {
    "polyfit": cmd_polyfit, "train": cmd_train, "attack-train": cmd_attack_train, "spectrum": cmd_spectrum,
    "frobenius": cmd_frobenius, "complexity": cmd_complexity, "bounds": cmd_bounds,
    "basin-sample": cmd_basin_sample, "sgd-vs-gd": cmd_sgd_vs_gd, "zoo": cmd_zoo, "convex-demo": cmd_convex_demo,
}


HELP = {
    "polyfit": "fit a 5-point cubic with MLPs of several depths and with polynomial KRR",
    "train": "train one MLP on the training subset and save the solution",
    "attack-train": "train with the wrong-label attack term (first --gamma / --attack-size)",
    "spectrum": "Hessian eigenvalues, V(k) and the Frobenius estimate of a saved solution",
    "frobenius": "randomized Frobenius-norm estimate of a saved solution's Hessian",
    "complexity": "input-gradient complexity of a random two-layer net under node scaling",
    "bounds": "first-bound sweep on random two-layer nets and the Hessian bound on trained ones",
    "basin-sample": "plain training from each init strategy; good/bad fractions",
    "sgd-vs-gd": "mini-batch vs full-batch test accuracy from shared inits",
    "zoo": "train and probe the minima zoo, then rank-correlate test accuracy with sharpness",
    "convex-demo": "global minima of an over-parameterized linear model with identical Hessians",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="study configuration file (see --print-default-config)")
    common.add_argument("--out", help="output directory (default: runs/<subcommand>)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes; 1 runs everything serially")
    common.add_argument("--force", action="store_true", help="replace an existing output directory")
    common.add_argument("--k", type=int, help="top eigenvalues in V(k)")
    common.add_argument("--probes", type=int, help="Gaussian probes M for the Frobenius estimate")
    common.add_argument("--fd-eps", type=float, help="finite-difference step for Hessian-vector products")
    common.add_argument("--gamma", type=float, action="append", help="attack weight (repeatable)")
    common.add_argument("--attack-size", type=int, action="append", help="attack-set size (repeatable)")
    common.add_argument("--init", action="append", help="init strategy, e.g. he_fan_in or uniform(0,1)")
    common.add_argument("--batch-size", type=int)
    common.add_argument("--epochs", type=int, help="epoch cap")
    common.add_argument("--solution", help="saved solution JSON (spectrum, frobenius, complexity)")
    common.add_argument("--seeds", type=int, help="seeds per strategy (basin-sample, sgd-vs-gd)")
    common.add_argument("--width", type=int, default=4, help="hidden width of a random two-layer net")
    common.add_argument("--input-dim", type=int, default=3, help="input dimension of a random two-layer net")
    common.add_argument("--samples", type=int, default=10_000, help="Monte Carlo samples")
    common.add_argument("--nets", type=int, default=1000, help="random nets in the bound sweep")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="basinprobe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"basinprobe {__version__}")
    parser.add_argument("--print-default-config", action="store_true",
                        help="print the default study configuration and exit")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(hz.StudyConfig().to_ini())
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        sys.stderr.write("basinprobe: error: a subcommand is required\n")
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _study_config(args)
        if args.threads < 1:
            raise InvalidSpecError("--threads must be >= 1")
        run = Run(args.out or os.path.join("runs", args.command), args.force)
        summary, lines = COMMANDS[args.command](args, cfg, run)
        run.manifest(args.command, cfg.to_dict(), _seed(args, cfg), summary)
    except (BasinProbeError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "subcommand": args.command,
               "module": _module_of(exc)}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    for line in lines:
        print(line)
    print(f"artifacts written to {run.out}")
    return 0


def _module_of(exc):
    tb = exc.__traceback__
    mod = "cli"
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("basinprobe."):
            mod = name.split(".", 1)[1]
        tb = tb.tb_next
    return mod


if __name__ == "__main__":
    sys.exit(main())
