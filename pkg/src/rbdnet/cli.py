"""Command-line pipeline: simulate, gen-data, train, eval, verify.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Every command validates its inputs before doing work, and all file writes
go through a temp file plus atomic rename.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import datafile, dynamics, evalbench, network, scenarios, training
from ._backend import BACKEND
from .config import ConfigError, load_config
from .errors import RbdnetError
from .prng import scenario_seed

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="config override (repeatable, wins over --config)")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    scen_cfg = cfg.scenario_config()
    if args.bodies is not None:
        if args.bodies not in (3, 4, 5):
            print(f"error: --bodies must be 3, 4, or 5 (got {args.bodies})",
                  file=sys.stderr)
            return USAGE_ERROR
        scen_cfg = scenarios.ScenarioConfig(
            **{**scen_cfg.__dict__, "n_bodies_choices": (args.bodies,)})
    duration = args.duration if args.duration is not None else cfg["sim.duration"]
    if duration <= 0:
        print("error: --duration must be positive", file=sys.stderr)
        return USAGE_ERROR
    seed = scenario_seed(args.seed, 0)
    state = scenarios.sample_scenario(seed, scen_cfg)
    traj = dynamics.simulate(state, duration, cfg["sim.fine_dt"])
    run = scenarios.ScenarioRun(seed=seed, conservative=scen_cfg.conservative,
                                gravity=scen_cfg.gravity, trajectory=traj)
    datafile.write_runs(args.out, [run])
    print(f"wrote {args.out}: {traj.n_samples} samples, {len(traj.events)} collision events")
    return 0


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.scenarios < 3:
        print("error: --scenarios must be >= 3 (split needs one per bucket)",
              file=sys.stderr)
        return USAGE_ERROR
    scen_cfg = cfg.scenario_config()
    runs = scenarios.generate_runs(args.scenarios, args.seed, scen_cfg,
                                   duration=cfg["sim.duration"],
                                   fine_dt=cfg["sim.fine_dt"])
    dataset = scenarios.build_dataset(runs, args.seed, ratios=cfg.ratios())
    datafile.write_dataset(args.out, dataset)
    counts = {code: 0 for code in (0, 1, 2)}
    records = {code: 0 for code in (0, 1, 2)}
    per_traj = runs[0].trajectory.n_samples - 1
    for i, code in enumerate(dataset.split):
        counts[int(code)] += 1
        records[int(code)] += runs[i].trajectory.n_samples - 1
    print(f"wrote {args.out} (+ sidecar): scenarios train/val/test = "
          f"{counts[0]}/{counts[1]}/{counts[2]}, records = "
          f"{records[0]}/{records[1]}/{records[2]} ({per_traj} per scenario)")
    return 0


def _records_split(dataset, code):
    rs = dataset.records_for(code)
    masks = scenarios.target_mask_matrix(rs.masks)
    return rs, masks


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    if not os.path.exists(args.data):
        print(f"error: dataset {args.data} does not exist", file=sys.stderr)
        return USAGE_ERROR
    dataset = datafile.read_dataset(args.data)
    net_cfg = cfg.network_config(architecture=args.arch, init_seed=args.seed)
    train_cfg = cfg.train_config(shuffle_seed=args.seed)
    train_rs, train_masks = _records_split(dataset, 0)
    val_rs, val_masks = _records_split(dataset, 1)
    norm = dataset.normalizer
    x_train = norm.apply_inputs(train_rs.inputs)
    x_val = norm.apply_inputs(val_rs.inputs)
    if net_cfg.predict_delta:
        t_train_raw = train_rs.targets - evalbench._state_features_of_inputs(train_rs.inputs)
        t_val_raw = val_rs.targets - evalbench._state_features_of_inputs(val_rs.inputs)
        norm = scenarios.Normalizer(norm.input_mean, norm.input_std,
                                    *_delta_stats(t_train_raw, train_rs.masks))
        t_train = norm.apply_targets(t_train_raw, train_rs.masks)
        t_val = norm.apply_targets(t_val_raw, val_rs.masks)
    else:
        t_train = norm.apply_targets(train_rs.targets, train_rs.masks)
        t_val = norm.apply_targets(val_rs.targets, val_rs.masks)
    params = network.init_network(net_cfg)
    result = training.train(params, x_train, t_train, train_masks,
                            x_val, t_val, val_masks, train_cfg)
    training.write_model(args.out, result.params, norm)
    training.write_history(str(args.out) + ".history.csv", result.history)
    print(f"wrote {args.out}: arch={args.arch} best_epoch={result.best_epoch} "
          f"val_loss={result.best_val_loss:.6g} epochs_run={len(result.history)}")
    return 0


def _delta_stats(deltas, masks):
    mean = np.zeros(scenarios.TARGET_DIM)
    std = np.ones(scenarios.TARGET_DIM)
    m = masks > 0.5
    for b in range(scenarios.N_MAX):
        sel = m[:, b]
        cols = slice(13 * b, 13 * (b + 1))
        if np.any(sel):
            mean[cols] = deltas[sel, cols].mean(axis=0)
            std[cols] = np.maximum(deltas[sel, cols].std(axis=0), 1e-8)
    return mean, std


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set)
    for path in [args.data, args.model]:
        if not os.path.exists(path):
            print(f"error: {path} does not exist", file=sys.stderr)
            return USAGE_ERROR
    dataset = datafile.read_dataset(args.data)
    params, norm = training.read_model(args.model)
    if params.config.input_dim != scenarios.INPUT_DIM:
        print(f"error: model input_dim {params.config.input_dim} does not match "
              f"dataset layout {scenarios.INPUT_DIM}", file=sys.stderr)
        return RUNTIME_ERROR
    predictors = [evalbench.NetworkPredictor(Path(args.model).stem, params, norm)]
    for token in (args.baselines.split(",") if args.baselines else []):
        token = token.strip()
        if not token:
            continue
        if token == "rk4":
            predictors.append(evalbench.PhysicsStepPredictor("rk4_coarse", substeps=1))
        elif token == "identity":
            predictors.append(evalbench.IdentityPredictor())
        else:
            print(f"error: unknown baseline {token!r} (use rk4, identity)",
                  file=sys.stderr)
            return USAGE_ERROR
    if args.baseline_model:
        p2, n2 = training.read_model(args.baseline_model)
        name = Path(args.baseline_model).stem
        if name == Path(args.model).stem:
            name += "_baseline"
        predictors.append(evalbench.NetworkPredictor(name, p2, n2))
    ece_runs = None
    if cfg["eval.ece_scenarios"] > 0:
        ece_cfg = scenarios.ScenarioConfig(conservative=True,
                                           gravity=cfg["scenario.gravity"])
        ece_runs = scenarios.generate_runs(cfg["eval.ece_scenarios"], args.seed,
                                           ece_cfg, duration=cfg["sim.duration"],
                                           fine_dt=cfg["sim.fine_dt"])
    reports = evalbench.evaluate_suite(
        predictors, dataset, ece_runs=ece_runs,
        rollout_horizon=cfg["eval.rollout_horizon"],
        ece_horizon=cfg["eval.ece_horizon"],
        rollout_scenarios=cfg["eval.rollout_scenarios"],
        timing_repeats=cfg["eval.timing_repeats"])
    outdir = Path(args.out_report)
    outdir.mkdir(parents=True, exist_ok=True)
    from .fileio import atomic_write
    with atomic_write(outdir / "report.csv") as f:
        f.write(evalbench.report_csv(reports).encode())
    with atomic_write(outdir / "report.json") as f:
        f.write(evalbench.report_json(reports).encode())
    for name, rep in reports.items():
        safe = name.replace("/", "_")
        with atomic_write(outdir / f"curve_{safe}.csv") as f:
            f.write(evalbench.curve_csv(rep).encode())
    print(f"wrote {outdir}/report.csv, report.json, and "
          f"{len(reports)} cumulative-error curves")
    for name, rep in reports.items():
        print(f"  {name}: position MSE {rep.mse['position']:.6g} m^2, "
              f"ECE {rep.ece_percent if rep.ece_percent is not None else float('nan'):.4g} %")
    return 0


def cmd_verify(args) -> int:
    from . import verify
    results = verify.run_checks(full=args.full,
                                corrupt_collision_sign=args.corrupt_collision_sign)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed "
          f"(backend: {BACKEND})")
    return 0 if not failed else RUNTIME_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbdnet",
        description="Deterministic rigid-body simulation, dataset generation, "
                    "residual-network training, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one random scenario to a file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bodies", type=int, default=None, help="pin body count (3-5)")
    p.add_argument("--duration", type=float, default=None, help="seconds (default 5)")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-data", help="generate a scenario dataset + sidecar")
    p.add_argument("--scenarios", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a network on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=network.ARCHITECTURES, default="residual")
    p.add_argument("--seed", type=int, default=0, help="init + shuffle seed")
    p.add_argument("--out", required=True, help="model file to write")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate predictors, write reports")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--baselines", default="rk4",
                   help="comma list from {rk4, identity} (default rk4)")
    p.add_argument("--baseline-model", default=None,
                   help="second model file (e.g. the feedforward baseline)")
    p.add_argument("--seed", type=int, default=7, help="seed for the ECE scenario set")
    p.add_argument("--out-report", required=True, help="report directory")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the oracle suite")
    p.add_argument("--full", action="store_true", help="include slow training checks")
    p.add_argument("--corrupt-collision-sign", action="store_true",
                   help=argparse.SUPPRESS)  # negative-control test hook
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (RbdnetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
