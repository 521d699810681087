"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
with the measured value against its tolerance.

The desk-scale comparison (criterion 11) trains four networks on a
1000-scenario dataset and takes most of this module's runtime; everything
else finishes in seconds to a couple of minutes.
"""
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from rbdnet import evalbench, network, scenarios, training, verify


def report(criterion, name, passed, measured, requirement, elapsed=None):
    status = "PASS" if passed else "FAIL"
    timing = f" [{elapsed:.1f}s]" if elapsed is not None else ""
    print(f"ACCEPTANCE {criterion:>2} {name}: {status} "
          f"(measured {measured}, requires {requirement}){timing}")
    assert passed, f"criterion {criterion} ({name}): {measured} vs {requirement}"


def checked(criterion, result, t0=None, budget=None):
    elapsed = None if t0 is None else time.perf_counter() - t0
    report(criterion, result.name, result.passed, f"{result.measured:.6g}",
           result.requirement, elapsed)
    if budget is not None:
        report(criterion, f"{result.name}_runtime", elapsed < budget,
               f"{elapsed:.1f}s", f"< {budget}s")


def test_criterion_01_elastic_swap():
    t0 = time.perf_counter()
    result = verify.check_elastic_swap()
    checked(1, result, t0, budget=1.0)


def test_criterion_02_conservation_suite():
    t0 = time.perf_counter()
    results = verify.check_conservation_suite(cases=10_000)
    elapsed = time.perf_counter() - t0
    for r in results:
        report(2, r.name, r.passed, f"{r.measured:.6g}", r.requirement)
    report(2, "conservation_runtime", elapsed < 30.0, f"{elapsed:.1f}s", "< 30s")


def test_criterion_03_rk4_order():
    t0 = time.perf_counter()
    result = verify.check_rk4_order()
    checked(3, result, t0, budget=30.0)


def test_criterion_04_free_fall():
    t0 = time.perf_counter()
    result = verify.check_free_fall()
    checked(4, result, t0, budget=1.0)


def test_criterion_05_quaternion_hygiene():
    for r in verify.check_quaternion_hygiene(n_scenarios=100):
        report(5, r.name, r.passed, f"{r.measured:.6g}", r.requirement)


def test_criterion_06_gradient_check():
    t0 = time.perf_counter()
    result = verify.check_gradient()
    checked(6, result, t0, budget=60.0)


def test_criterion_07_adam_oracle():
    checked(7, verify.check_adam_oracle())


def test_criterion_08_lr_schedule():
    checked(8, verify.check_lr_schedule())


def test_criterion_09_overfit():
    t0 = time.perf_counter()
    result = verify.check_overfit(max_epochs=2000)
    checked(9, result, t0, budget=300.0)


def test_criterion_10_ece_ground_truth():
    t0 = time.perf_counter()
    result = verify.check_ece_ground_truth(n_scenarios=100)
    checked(10, result, t0, budget=120.0)


DESK_SEED = 2024
DESK_SCENARIOS = 1000
DESK_EPOCHS = 5
TRAIN_SEEDS = (1, 2)


@pytest.fixture(scope="module")
def desk_dataset():
    runs = scenarios.generate_runs(DESK_SCENARIOS, DESK_SEED, scenarios.ScenarioConfig())
    return scenarios.build_dataset(runs, DESK_SEED)


def _train_and_score(dataset, architecture, seed):
    net_cfg = network.NetworkConfig(architecture=architecture, init_seed=seed)
    train_cfg = training.TrainConfig(epochs=DESK_EPOCHS, patience=DESK_EPOCHS,
                                     shuffle_seed=seed)
    train_rs = dataset.records_for(0)
    val_rs = dataset.records_for(1)
    norm = dataset.normalizer
    params = network.init_network(net_cfg)
    result = training.train(
        params,
        norm.apply_inputs(train_rs.inputs),
        norm.apply_targets(train_rs.targets, train_rs.masks),
        scenarios.target_mask_matrix(train_rs.masks),
        norm.apply_inputs(val_rs.inputs),
        norm.apply_targets(val_rs.targets, val_rs.masks),
        scenarios.target_mask_matrix(val_rs.masks),
        train_cfg)
    test_rs = dataset.records_for(2)
    predictor = evalbench.NetworkPredictor(architecture, result.params, norm)
    preds = predictor.predict(test_rs.inputs, None)
    return evalbench.mse_component(preds, test_rs.targets, test_rs.masks, "position")


def test_criterion_11_desk_scale_architecture_ordering(desk_dataset):
    t0 = time.perf_counter()
    for seed in TRAIN_SEEDS:
        res_mse = _train_and_score(desk_dataset, "residual", seed)
        ff_mse = _train_and_score(desk_dataset, "feedforward", seed)
        report(11, f"residual_beats_feedforward_seed{seed}", res_mse <= ff_mse,
               f"residual {res_mse:.6g} vs feedforward {ff_mse:.6g} m^2",
               "residual <= feedforward (statistical ordering)")
    elapsed = time.perf_counter() - t0
    report(11, "desk_scale_runtime", elapsed < 1800.0, f"{elapsed:.0f}s", "< 1800s")


def _run_cli(args, cwd, threads):
    env = dict(os.environ)
    env["OPENBLAS_NUM_THREADS"] = str(threads)
    env["OMP_NUM_THREADS"] = str(threads)
    r = subprocess.run([sys.executable, "-m", "rbdnet.cli", *args],
                       cwd=cwd, env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    return r


def test_criterion_12_determinism(tmp_path):
    gen_args = ["gen-data", "--scenarios", "12", "--seed", "9", "--set",
                "sim.duration=1.0"]
    train_args = ["train", "--arch", "residual", "--seed", "4",
                  "--set", "network.hidden_dim=32", "--set", "network.num_blocks=1",
                  "--set", "train.epochs=2"]
    blobs = {}
    for tag, threads in (("a", 1), ("b", 1), ("c", 4)):
        _run_cli([*gen_args, "--out", f"d_{tag}.rbd"], tmp_path, threads)
        _run_cli([*train_args, "--data", f"d_{tag}.rbd", "--out", f"m_{tag}.rbm"],
                 tmp_path, threads)
        blobs[tag] = (
            (tmp_path / f"d_{tag}.rbd").read_bytes(),
            (tmp_path / f"d_{tag}.rbd.rbds").read_bytes(),
            (tmp_path / f"m_{tag}.rbm").read_bytes(),
        )
    same_runs = blobs["a"] == blobs["b"]
    report(12, "byte_identical_across_runs", same_runs, same_runs, "identical bytes")
    same_threads = blobs["a"] == blobs["c"]
    report(12, "byte_identical_across_thread_counts", same_threads, same_threads,
           "identical bytes (1 vs 4 BLAS threads)")


def test_criterion_13_cumulative_error_monotonic(desk_dataset):
    cfg = network.NetworkConfig(hidden_dim=32, num_blocks=1, init_seed=0)
    predictors = [
        evalbench.NetworkPredictor("untrained_net", network.init_network(cfg),
                                   desk_dataset.normalizer),
        evalbench.PhysicsStepPredictor("rk4_coarse", 1),
        evalbench.IdentityPredictor(),
    ]
    worst = np.inf
    for sid in desk_dataset.scenario_ids_for(2)[:5]:
        run = desk_dataset.runs[sid]
        truth = evalbench.ground_truth_states(run, 100)
        for predictor in predictors:
            res = evalbench.rollout(predictor, run, 100, truth=truth)
            diffs = np.diff(np.concatenate([[0.0], res.e_cumulative]))
            worst = min(worst, float(diffs.min()))
    report(13, "cumulative_error_non_decreasing", worst >= 0.0,
           f"min step increment {worst:.3g}", ">= 0 (exact)")
