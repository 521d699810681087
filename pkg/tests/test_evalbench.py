import numpy as np
import pytest

from rbdnet import dynamics, evalbench, scenarios
from rbdnet.bodies import CollisionEvent
from rbdnet.evalbench import (IdentityPredictor, NetworkPredictor, PhysicsStepPredictor,
                              categorize_scenario, energy_conservation_error,
                              evaluate_suite, mse_component, orientation_geodesic_deg,
                              relative_error, relative_error_detail, rollout)
from rbdnet.network import NetworkConfig, init_network


def _runs(n, seed=17, duration=1.0, conservative=False, **cfg_kw):
    cfg = scenarios.ScenarioConfig(conservative=conservative, **cfg_kw)
    return scenarios.generate_runs(n, seed, cfg, duration=duration)


def _static_runs(n, seed=5):
    return _runs(n, seed=seed, conservative=True, gravity=False,
                 velocity_range=(0.0, 0.0), angular_velocity_range=(0.0, 0.0))


def _records(run, sid=0):
    return scenarios.make_records(run.trajectory, scenario_id=sid)


def test_mse_perfect_predictions():
    rs = _records(_runs(1)[0])
    for c in evalbench.COMPONENTS:
        assert mse_component(rs.targets, rs.targets, rs.masks, c) == 0.0


def test_mse_position_hand_value():
    rs = _records(_static_runs(1)[0])
    preds = rs.targets.copy()
    preds[0, 0] += 0.1  # one body, one record, x off by 0.1
    n_real = int(rs.masks.sum())
    count = 3 * n_real  # position scalars over unmasked (record, body) pairs
    expect = 0.01 / (count / len(rs) * len(rs))
    got = mse_component(preds[:1], rs.targets[:1], rs.masks[:1], "position")
    n_bodies = int(rs.masks[0].sum())
    assert abs(got - 0.01 / (3 * n_bodies)) <= 1e-15


def test_mse_orientation_sign_alignment():
    rs = _records(_runs(1)[0])
    preds = rs.targets.copy()
    for b in range(5):
        preds[:, 13 * b + 3:13 * b + 7] *= -1.0
    assert mse_component(preds, rs.targets, rs.masks, "orientation") <= 1e-28
    assert orientation_geodesic_deg(preds, rs.targets, rs.masks) <= 1e-5


def test_mse_unknown_component():
    rs = _records(_runs(1)[0])
    with pytest.raises(ValueError):
        mse_component(rs.targets, rs.targets, rs.masks, "momentum")


def test_relative_error_cases():
    targets = np.zeros((1, 65))
    preds = np.zeros((1, 65))
    masks = np.zeros((1, 5))
    masks[0, 0] = 1.0
    targets[0, 0] = 2.0
    preds[0, 0] = 1.0
    targets[0, 3] = 1.0
    preds[0, 3] = 1.0
    val, excluded, used = relative_error_detail(preds, targets, masks, "position")
    assert abs(val - 50.0) <= 1e-12
    assert used == 1 and excluded == 2  # y=0 features dropped but counted
    assert relative_error(targets, targets, masks, "position") == 0.0


def test_relative_error_degenerate():
    targets = np.zeros((1, 65))
    masks = np.zeros((1, 5))
    masks[0, 0] = 1.0
    with pytest.raises(ValueError, match="degenerate"):
        relative_error_detail(targets, targets, masks, "position")


def test_categorize():
    run = _runs(1)[0]
    traj = run.trajectory

    def with_events(steps):
        traj.events = [CollisionEvent(s, 0, 0, 1, 0.5) for s in steps]
        return traj

    assert categorize_scenario(with_events([])) == "none"
    assert categorize_scenario(with_events([10])) == "single"
    assert categorize_scenario(with_events([10, 40])) == "multiple"
    assert categorize_scenario(with_events([10, 10, 40])) == "simultaneous"


def test_identity_predictor_on_static_rollout():
    run = _static_runs(1)[0]
    res = rollout(IdentityPredictor(), run, 30)
    assert np.abs(res.per_step_sq).max() == 0.0
    assert np.all(res.e_cumulative == 0.0)


def test_rollout_rk4_freefall_tight():
    # collisionless single body in gravity: the coarse step is exact
    cfg = scenarios.ScenarioConfig(n_bodies_choices=(3,), conservative=True,
                                   velocity_range=(0.0, 0.0),
                                   angular_velocity_range=(0.0, 0.0),
                                   position_range=(0.0, 40.0))
    state = scenarios.sample_scenario(12, cfg)
    traj = dynamics.simulate(state, 1.0)
    assert len(traj.events) == 0
    run = scenarios.ScenarioRun(1, True, True, traj)
    res = rollout(PhysicsStepPredictor("rk4", 1), run, 50)
    pos_err = np.abs(res.predicted[:, :, :3] - res.truth[:, :, :3]).max()
    assert pos_err <= 1e-10


def test_rollout_cumulative_is_running_sum():
    run = _runs(1)[0]
    res = rollout(PhysicsStepPredictor("rk4", 1), run, 20)
    assert np.allclose(res.e_cumulative, np.cumsum(res.per_step_sq))
    assert np.all(np.diff(res.e_cumulative) >= 0.0)
    assert abs((res.per_step_sq[0] + res.per_step_sq[1]) - res.e_cumulative[1]) <= 1e-18


def test_rollout_extends_ground_truth():
    run = _runs(1, duration=0.5)[0]
    res = rollout(PhysicsStepPredictor("rk4", 1), run, 40)  # 0.8 s > stored 0.5 s
    assert res.truth.shape[0] == 41
    stored = run.trajectory.samples
    assert np.array_equal(res.truth[: stored.shape[0]], stored)


def test_ece_identity_static_and_hand_value():
    runs = _static_runs(2)
    # static + gravity off: zero energy, no qualifying scenario
    with pytest.raises(ValueError):
        energy_conservation_error(IdentityPredictor(), runs, horizon=10)
    moving = _runs(3, conservative=True, gravity=False, seed=8)
    ece = energy_conservation_error(IdentityPredictor(), moving, horizon=10)
    assert ece == 0.0  # identity keeps the state, so E_final == E_initial


def test_ece_hand_value():
    # initial energy 100 J; a predictor stuck at a 99 J state gives ECE 1%
    from rbdnet.bodies import BodyParams, Environment, RigidBodyState, SystemState
    body = RigidBodyState([0, 0, 0], [1, 0, 0, 0], [10.0, 0, 0], [0, 0, 0])
    params = BodyParams(2.0, 0.5, (0.1, 0.1, 0.1))
    env = Environment(gravity=[0, 0, 0], restitution=1.0)
    sys = SystemState([body], [params], env)
    assert dynamics.total_energy(sys) == 100.0
    traj = dynamics.simulate(sys, 0.5)
    run = scenarios.ScenarioRun(0, True, False, traj)

    class StuckPredictor:
        name = "stuck"

        def predict(self, inputs, run=None):
            out = evalbench._padding_template()[None, :].repeat(
                np.atleast_2d(inputs).shape[0], axis=0)
            out[:, 0:13] = [0, 0, 0, 1, 0, 0, 0, np.sqrt(99.0), 0, 0, 0, 0, 0]
            return out

    ece = energy_conservation_error(StuckPredictor(), [run], horizon=5)
    assert abs(ece - 1.0) <= 1e-9


def test_ece_fine_simulator_small():
    runs = _runs(5, conservative=True, seed=9, duration=1.0)
    fine = PhysicsStepPredictor("truth", substeps=round(0.02 / dynamics.DEFAULT_FINE_DT))
    ece = energy_conservation_error(fine, runs, horizon=50)
    assert ece <= 0.5


def test_benchmark_inference_stable():
    runs = _runs(2, duration=0.5)
    ds = scenarios.Dataset(runs, np.array([2, 2], dtype=np.int8),
                           scenarios.Normalizer(np.zeros(100), np.ones(100),
                                                np.zeros(65), np.ones(65)))
    rs = ds.records_for(2)
    mean, std = evalbench.benchmark_inference(PhysicsStepPredictor("rk4", 1), rs,
                                              runs, repeats=30)
    assert mean > 0.0 and std >= 0.0


def _tiny_dataset(n=6, seed=3, duration=1.0):
    runs = _runs(n, seed=seed, duration=duration)
    return scenarios.build_dataset(runs, seed, ratios=(0.5, 0.25, 0.25))


def test_evaluate_suite_schema_and_determinism():
    ds = _tiny_dataset()
    cfg = NetworkConfig(hidden_dim=16, num_blocks=1, init_seed=0, dropout_rate=0.0)
    net = NetworkPredictor("net", init_network(cfg), ds.normalizer)
    preds = [net, PhysicsStepPredictor("rk4_coarse", 1), IdentityPredictor()]
    reports = evaluate_suite(preds, ds, ece_runs=None, rollout_horizon=30,
                             rollout_scenarios=1, with_timing=False)
    assert set(reports) == {"net", "rk4_coarse", "identity"}
    for rep in reports.values():
        assert set(rep.mse) == set(evalbench.COMPONENTS)
        assert all(v >= 0.0 for v in rep.mse.values())
        assert rep.schema_version == 1
        assert np.all(np.diff(rep.curve_values) >= -1e-18)
    # identity predictor cannot beat the physics baseline on moving scenarios
    assert reports["rk4_coarse"].mse["position"] <= reports["identity"].mse["position"]
    reports2 = evaluate_suite(preds, ds, ece_runs=None, rollout_horizon=30,
                              rollout_scenarios=1, with_timing=False)
    for name in reports:
        assert reports[name].mse == reports2[name].mse


def test_evaluate_suite_identity_zero_on_static():
    runs = _static_runs(4)
    split = np.array([0, 0, 2, 2], dtype=np.int8)
    rs = scenarios.RecordSet.concat([scenarios.make_records(r.trajectory, i)
                                     for i, r in enumerate(runs) if split[i] == 0])
    norm = scenarios.Normalizer.fit(rs.inputs, rs.targets)
    ds = scenarios.Dataset(runs, split, norm)
    reports = evaluate_suite([IdentityPredictor()], ds, ece_runs=None,
                             rollout_horizon=10, rollout_scenarios=1, with_timing=False)
    rep = reports["identity"]
    assert all(v == 0.0 for v in rep.mse.values())
    assert all(v == 0.0 for v in rep.re_percent.values())


def test_report_serializations():
    ds = _tiny_dataset()
    reports = evaluate_suite([PhysicsStepPredictor("rk4_coarse", 1)], ds, ece_runs=None,
                             rollout_horizon=10, rollout_scenarios=1, with_timing=False)
    csv_text = evalbench.report_csv(reports)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "predictor,metric,value,unit"
    assert any(line.startswith("rk4_coarse,mse_position,") for line in lines)
    js = evalbench.report_json(reports)
    import json
    doc = json.loads(js)
    assert doc["schema_version"] == 1
    assert doc["reports"][0]["predictor"] == "rk4_coarse"
    curve = evalbench.curve_csv(reports["rk4_coarse"])
    assert curve.startswith("t_seconds,E_cumulative\n")
    assert len(curve.strip().split("\n")) == 11


def test_network_predictor_round_trips_normalization():
    ds = _tiny_dataset()
    rs = ds.records_for(0)
    cfg = NetworkConfig(hidden_dim=16, num_blocks=1, init_seed=1)
    params = init_network(cfg)
    net = NetworkPredictor("net", params, ds.normalizer)
    out = net.predict(rs.inputs[:8], ds.runs[0])
    assert out.shape == (8, 65)
    assert np.all(np.isfinite(out))
    # padded slots come back as canonical padding
    row_mask = rs.masks[:8]
    for b in range(5):
        rows = row_mask[:, b] < 0.5
        if rows.any():
            assert np.allclose(out[rows, 13 * b + 3], 1.0)
            assert np.allclose(out[rows, 13 * b:13 * b + 3], 0.0)
