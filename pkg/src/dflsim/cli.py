"""Command-line entry points for the simulation and control pipeline.

Subcommands mirror the workflow: generate identification data, train the
network models, compare them, run the closed-loop scenario, audit the
derivative network, and post-process a trajectory into metrics.  Exit
status: 0 success, 2 configuration error, 3 plant stall, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_bundle
from .dataset import generate_dataset, load_dataset_csv, save_dataset_csv
from .lpv import assoc_jacobian
from .networks import (compare_models, init_elman, init_mlp, load_rbf,
                       rbf_forward, save_blocks, save_rbf, train_elman,
                       train_mlp, train_rbf)
from .scenario import (ScenarioStallError, compute_metrics,
                       load_trajectory_csv, relative_error, run_scenario,
                       save_lpv_trace, save_trajectory_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STALL = 3
EXIT_SOLVER = 4


def _common_flags(sub):
    sub.add_argument("--config", type=Path, default=None,
                     help="INI configuration file (defaults embedded)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the relevant RNG seed")
    sub.add_argument("--out", type=Path, default=Path("out"),
                     help="output directory")


def _load(args, seed_key=None):
    overrides = {}
    if args.seed is not None and seed_key is not None:
        overrides[seed_key] = args.seed
    return load_bundle(args.config, overrides)


def _ensure_out(args) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_gen_data(args) -> int:
    bundle = _load(args, "training.seed")
    tr = bundle.training
    dataset = generate_dataset(bundle.plant, bundle.fan,
                               sample_count=tr.sample_count, seed=tr.seed,
                               snr_db=tr.snr_db, n_train=tr.n_train)
    out = _ensure_out(args) / "dataset.csv"
    save_dataset_csv(dataset, out)
    print(f"wrote {tr.sample_count} samples ({tr.n_train} train) to {out}")
    return EXIT_OK


def _dataset_for(args, bundle):
    path = args.data if args.data else args.out / "dataset.csv"
    if Path(path).exists():
        return load_dataset_csv(path, n_train=bundle.training.n_train)
    tr = bundle.training
    return generate_dataset(bundle.plant, bundle.fan,
                            sample_count=tr.sample_count, seed=tr.seed,
                            snr_db=tr.snr_db, n_train=tr.n_train)


def cmd_train(args) -> int:
    bundle = _load(args, "training.seed")
    tr = bundle.training
    dataset = _dataset_for(args, bundle)
    out_dir = _ensure_out(args)
    if args.model == "rbf":
        model = train_rbf(dataset, k=tr.rbf_centers, neighbors=tr.rbf_neighbors,
                          seed=tr.model_seed + 1, overlap=tr.rbf_overlap,
                          ridge=tr.ridge, lms_passes=tr.lms_passes,
                          lms_rate=tr.lms_rate)
        path = out_dir / "rbf_model.txt"
        save_rbf(model, path)
        print(f"trained RBF ({tr.rbf_centers} centers) -> {path}")
    elif args.model == "mlp":
        model, losses = train_mlp(
            init_mlp(dataset.stats, hidden=tr.mlp_hidden, seed=tr.model_seed),
            dataset, lr_weights=tr.mlp_lr, lr_bias=tr.mlp_lr,
            max_epochs=tr.mlp_epochs, mse_target=tr.mse_target)
        path = out_dir / "mlp_model.txt"
        save_blocks(path, {"IW": model.iw, "LW": model.lw,
                           "B1": model.b1[None, :], "B2": model.b2[None, :]})
        print(f"trained MLP: {len(losses)} epochs, final MSE {losses[-1]:.6f} -> {path}")
    else:
        model, losses = train_elman(
            init_elman(dataset.stats, hidden=tr.elman_hidden, seed=tr.model_seed),
            dataset, lr=tr.elman_lr, max_epochs=tr.elman_epochs,
            mse_target=tr.mse_target)
        path = out_dir / "elman_model.txt"
        save_blocks(path, {"IW": model.iw, "LW1": model.lw1, "LW2": model.lw2,
                           "B1": model.b1[None, :], "B2": model.b2[None, :]})
        print(f"trained Elman: {len(losses)} epochs, final MSE {losses[-1]:.6f} -> {path}")
    return EXIT_OK


def cmd_compare_models(args) -> int:
    bundle = _load(args, "training.seed")
    tr = bundle.training
    dataset = _dataset_for(args, bundle)
    report = compare_models(dataset, seed=tr.model_seed,
                            mlp_hidden=tr.mlp_hidden,
                            elman_hidden=tr.elman_hidden,
                            rbf_centers=tr.rbf_centers,
                            mlp_epochs=tr.mlp_epochs,
                            elman_epochs=tr.elman_epochs)
    out_dir = _ensure_out(args)
    names = ("torque", "speed", "afr")
    print(f"{'output':>8} | " + " | ".join(f"{m:>7}" for m in report.mape_table))
    for i, name in enumerate(names):
        row = " | ".join(f"{report.mape_table[m][i]:6.2f}%" for m in report.mape_table)
        print(f"{name:>8} | {row}")
    pe_path = out_dir / "prediction_errors.csv"
    with open(pe_path, "w") as fh:
        fh.write("sample," + ",".join(f"{m}_{n}" for m in report.pe_series
                                      for n in names) + "\n")
        n_val = len(next(iter(report.pe_series.values())))
        for i in range(n_val):
            cells = [str(i)]
            for m in report.pe_series:
                cells += [repr(float(v)) for v in report.pe_series[m][i]]
            fh.write(",".join(cells) + "\n")
    mape_path = out_dir / "mape_report.json"
    with open(mape_path, "w") as fh:
        json.dump({m: [float(v) for v in vals]
                   for m, vals in report.mape_table.items()}, fh, indent=2)
    print(f"wrote {pe_path} and {mape_path}")
    return EXIT_OK


def _rbf_for(args, bundle):
    path = args.model_file if args.model_file else args.out / "rbf_model.txt"
    if Path(path).exists():
        return load_rbf(path)
    tr = bundle.training
    dataset = _dataset_for(args, bundle)
    return train_rbf(dataset, k=tr.rbf_centers, neighbors=tr.rbf_neighbors,
                     seed=tr.model_seed + 1, overlap=tr.rbf_overlap,
                     ridge=tr.ridge, lms_passes=tr.lms_passes,
                     lms_rate=tr.lms_rate)


def cmd_simulate(args) -> int:
    bundle = _load(args, "scenario.seed")
    out_dir = _ensure_out(args)
    rbf = None
    if args.controller != "open-loop":
        rbf = _rbf_for(args, bundle)
    trace = [] if args.dump_lpv else None
    try:
        records, metrics = run_scenario(bundle.plant, bundle.fan, bundle.mpc,
                                        bundle.scenario, controller=args.controller,
                                        rbf=rbf, lpv_trace=trace)
    except ScenarioStallError as exc:
        path = out_dir / f"trajectory_{args.controller}.csv"
        save_trajectory_csv(exc.records, path)
        print(f"plant stall: {exc} (partial trajectory in {path})",
              file=sys.stderr)
        return EXIT_STALL
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    path = out_dir / f"trajectory_{args.controller}.csv"
    save_trajectory_csv(records, path)
    if trace is not None:
        save_lpv_trace(trace, out_dir / f"lpv_trace_{args.controller}.csv")
    with open(out_dir / f"metrics_{args.controller}.json", "w") as fh:
        json.dump(metrics, fh, indent=2)
    print(f"{args.controller}: {len(records)} steps -> {path}")
    for label, seg in (("thrust", metrics["thrust_steady"]),
                       ("lambda", metrics["lambda_steady"])):
        if seg is None:
            print(f"steady {label}: segment empty")
        else:
            print(f"steady {label} rel err [{seg['min']:.2f}, {seg['max']:.2f}]% "
                  f"(mae {seg['mae']:.2f}%)")
    return EXIT_OK


def cmd_check_jacobian(args) -> int:
    bundle = _load(args, "training.seed")
    rbf = _rbf_for(args, bundle)
    rng = np.random.default_rng(bundle.training.seed)
    step = 1e-5
    worst = 0.0
    for _ in range(args.points):
        p = rng.uniform(-1.0, 1.0, 4)
        jac = assoc_jacobian(rbf, p)
        fd = np.empty_like(jac)
        for j in range(4):
            dp = np.zeros(4)
            dp[j] = step
            fd[:, j] = (rbf_forward(rbf, p + dp) - rbf_forward(rbf, p - dp)) / (2 * step)
        denom = max(float(np.max(np.abs(fd))), 1e-12)
        worst = max(worst, float(np.max(np.abs(jac - fd))) / denom)
    print(f"max relative Jacobian error over {args.points} points: {worst:.3e}")
    if worst > 1e-6:
        print("FAIL: analytic Jacobian deviates from finite differences",
              file=sys.stderr)
        return 1
    print("PASS")
    return EXIT_OK


def cmd_report(args) -> int:
    bundle = _load(args)
    records = load_trajectory_csv(args.trajectory)
    metrics = compute_metrics(records, bundle.mpc, bundle.scenario)
    out_dir = _ensure_out(args)
    err_path = out_dir / "relative_errors.csv"
    with open(err_path, "w") as fh:
        fh.write("step,thrust_rel_err_pct,lambda_rel_err_pct\n")
        for r in records:
            te = relative_error(r.thrust_true, r.thrust_ref)
            le = relative_error(r.lam_true, r.lam_ref)
            fh.write(f"{r.step},{repr(float(te))},{repr(float(le))}\n")
    metrics_path = out_dir / "metrics_report.json"
    with open(metrics_path, "w") as fh:
        json.dump(metrics, fh, indent=2)
    print(json.dumps(metrics, indent=2))
    print(f"wrote {err_path} and {metrics_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dflsim",
        description="Ducted-fan lift system simulation and adaptive MPC toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("gen-data", help="excite the plant and write the dataset CSV")
    _common_flags(sub)
    sub.set_defaults(func=cmd_gen_data)

    sub = subs.add_parser("train", help="train one network model")
    _common_flags(sub)
    sub.add_argument("--model", choices=("mlp", "elman", "rbf"), required=True)
    sub.add_argument("--data", type=Path, default=None,
                     help="dataset CSV (default: <out>/dataset.csv, regenerated if absent)")
    sub.set_defaults(func=cmd_train)

    sub = subs.add_parser("compare-models",
                          help="train all three models and report validation MAPE")
    _common_flags(sub)
    sub.add_argument("--data", type=Path, default=None)
    sub.set_defaults(func=cmd_compare_models)

    sub = subs.add_parser("simulate", help="run the takeoff-preparation scenario")
    _common_flags(sub)
    sub.add_argument("--controller", choices=("ampc", "linear-mpc", "open-loop"),
                     default="ampc")
    sub.add_argument("--model-file", type=Path, default=None,
                     help="trained RBF block file (default: <out>/rbf_model.txt)")
    sub.add_argument("--data", type=Path, default=None)
    sub.add_argument("--dump-lpv", action="store_true",
                     help="also write the per-step LPV matrices to CSV")
    sub.set_defaults(func=cmd_simulate)

    sub = subs.add_parser("check-jacobian",
                          help="audit the derivative network against finite differences")
    _common_flags(sub)
    sub.add_argument("--model-file", type=Path, default=None)
    sub.add_argument("--data", type=Path, default=None)
    sub.add_argument("--points", type=int, default=100)
    sub.set_defaults(func=cmd_check_jacobian)

    sub = subs.add_parser("report", help="recompute metrics from a trajectory CSV")
    _common_flags(sub)
    sub.add_argument("trajectory", type=Path)
    sub.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
