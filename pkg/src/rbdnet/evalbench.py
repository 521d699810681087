"""Evaluation bench: predictors, metrics, rollouts, categories, timing.

All metrics are computed in physical units (predictions are de-normalized
first). Orientation scoring renormalizes the predicted quaternion and
sign-aligns it to the target (q and -q encode the same rotation); the
geodesic angle is reported alongside as a diagnostic.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import dynamics, network
from ._backend import kernels
from .bodies import SystemState, Trajectory
from .scenarios import (BODY_FEATURES, Dataset, N_MAX, Normalizer, RecordSet, ScenarioRun,
                        make_records, pack_input_features)

COMPONENTS = ("position", "orientation", "linear_velocity", "angular_velocity")

# offsets of each component inside a 13-wide state block
_COMPONENT_SLICES = {
    "position": (0, 3),
    "orientation": (3, 7),
    "linear_velocity": (7, 10),
    "angular_velocity": (10, 13),
}

COMPONENT_UNITS = {
    "position": "m^2",
    "orientation": "unitless",
    "linear_velocity": "(m/s)^2",
    "angular_velocity": "(rad/s)^2",
}

RE_GUARD = 1e-6  # |y| below this is excluded from relative error

CATEGORIES = ("none", "single", "multiple", "simultaneous")


class NetworkPredictor:
    """Trained network in eval mode; handles normalization internally."""

    def __init__(self, name: str, params: network.NetworkParameters, norm: Normalizer):
        self.name = name
        self.params = params
        self.norm = norm

    def predict(self, inputs: np.ndarray, run: ScenarioRun | None = None) -> np.ndarray:
        x = np.atleast_2d(inputs)
        masks = x[:, N_MAX * BODY_FEATURES:]
        z = self.norm.apply_inputs(x)
        y, _ = network.forward(self.params, z, train=False)
        out = self.norm.invert_targets(y, masks)
        if self.params.config.predict_delta:
            out = out + _state_features_of_inputs(x)
            out = _canonicalize_padding(out, masks)
        return out.reshape(np.shape(inputs)[:-1] + (out.shape[-1],))


class PhysicsStepPredictor:
    """One 0.02 s physics step (RK4 substeps + collision resolution).

    substeps=1 is the coarse RK4 baseline; substeps=200 reproduces the
    ground-truth integrator.
    """

    def __init__(self, name: str, substeps: int = 1):
        self.name = name
        self.substeps = int(substeps)

    def predict(self, inputs: np.ndarray, run: ScenarioRun) -> np.ndarray:
        x = np.atleast_2d(inputs)
        n = run.trajectory.n_bodies
        params = run.trajectory.params
        packed_params = np.stack([p.pack() for p in params])
        env = run.trajectory.env.pack()
        h = dynamics.SAMPLE_DT / self.substeps
        out = np.zeros((x.shape[0], N_MAX * 13))
        out[:, :] = _padding_template()
        for r in range(x.shape[0]):
            state = _states_of_input(x[r], n)
            state, _events, _corr = kernels.simulate_path(
                state, packed_params, env, h, self.substeps, self.substeps)
            for b in range(n):
                out[r, 13 * b:13 * b + 13] = state[1, b]
        return out.reshape(np.shape(inputs)[:-1] + (out.shape[-1],))


class IdentityPredictor:
    """Returns the input state unchanged (test fixture)."""

    name = "identity"

    def predict(self, inputs: np.ndarray, run: ScenarioRun | None = None) -> np.ndarray:
        x = np.atleast_2d(inputs)
        return _state_features_of_inputs(x).reshape(
            np.shape(inputs)[:-1] + (N_MAX * 13,))


def _padding_template() -> np.ndarray:
    t = np.zeros(N_MAX * 13)
    for b in range(N_MAX):
        t[13 * b + 3] = 1.0
    return t


def _state_features_of_inputs(x: np.ndarray) -> np.ndarray:
    """Copy the 13 state features of each body slot out of (m,100) inputs."""
    out = np.zeros((x.shape[0], N_MAX * 13))
    for b in range(N_MAX):
        out[:, 13 * b:13 * b + 13] = x[:, BODY_FEATURES * b:BODY_FEATURES * b + 13]
    return out


def _canonicalize_padding(targets: np.ndarray, masks: np.ndarray) -> np.ndarray:
    out = targets.copy()
    m = masks > 0.5
    for b in range(N_MAX):
        rows = ~m[:, b]
        out[rows, 13 * b:13 * (b + 1)] = 0.0
        out[rows, 13 * b + 3] = 1.0
    return out


def _states_of_input(record_input: np.ndarray, n: int | None = None) -> np.ndarray:
    """(100,) input -> (n,13) state rows for the real bodies."""
    if n is None:
        n = int(round(record_input[N_MAX * BODY_FEATURES:].sum()))
    rows = np.zeros((n, 13))
    for b in range(n):
        rows[b] = record_input[BODY_FEATURES * b:BODY_FEATURES * b + 13]
    return rows


def align_quaternions(preds: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Renormalize predicted quaternions and flip signs to match targets.

    Quaternions already unit to 1e-12 are left untouched so exact
    predictions score exactly zero.
    """
    out = preds.copy()
    for b in range(N_MAX):
        cols = slice(13 * b + 3, 13 * b + 7)
        q = out[:, cols]
        norms = np.linalg.norm(q, axis=1, keepdims=True)
        fix = (np.abs(norms - 1.0) > 1e-12) & (norms > 1e-12)
        q = np.where(fix, q / np.where(norms > 1e-12, norms, 1.0), q)
        dots = (q * targets[:, cols]).sum(axis=1, keepdims=True)
        q = np.where(dots < 0.0, -q, q)
        out[:, cols] = q
    return out


def _component_errors(preds, targets, masks, component):
    """Stacked per-(record, body) error and truth arrays for one component."""
    lo, hi = _COMPONENT_SLICES[component]
    if component == "orientation":
        preds = align_quaternions(preds, targets)
    m = np.atleast_2d(masks) > 0.5
    err_parts = []
    truth_parts = []
    for b in range(N_MAX):
        sel = m[:, b]
        if not np.any(sel):
            continue
        cols = slice(13 * b + lo, 13 * b + hi)
        err_parts.append(preds[sel, cols] - targets[sel, cols])
        truth_parts.append(targets[sel, cols])
    if not err_parts:
        raise ValueError("no unmasked bodies in the evaluation set")
    return np.concatenate(err_parts), np.concatenate(truth_parts)


def mse_component(preds, targets, masks, component) -> float:
    """Mean squared error over unmasked scalar features of one component."""
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}")
    err, _ = _component_errors(np.atleast_2d(preds), np.atleast_2d(targets),
                               masks, component)
    if err.size == 0:
        raise ValueError("empty evaluation set")
    return float((err * err).mean())


def relative_error_detail(preds, targets, masks, component):
    """(percent, n_excluded, n_used): mean |y-yhat|/|y| over |y| >= 1e-6."""
    err, truth = _component_errors(np.atleast_2d(preds), np.atleast_2d(targets),
                                   masks, component)
    err = err.ravel()
    truth = truth.ravel()
    keep = np.abs(truth) >= RE_GUARD
    excluded = int((~keep).sum())
    if not np.any(keep):
        raise ValueError("degenerate targets: all features below the magnitude guard")
    ratio = np.abs(err[keep]) / np.abs(truth[keep])
    return float(ratio.mean() * 100.0), excluded, int(keep.sum())


def relative_error(preds, targets, masks, component) -> float:
    return relative_error_detail(preds, targets, masks, component)[0]


def orientation_geodesic_deg(preds, targets, masks) -> float:
    """Mean geodesic rotation angle (degrees) between predicted and true
    orientations; diagnostic only, not a headline metric."""
    p = align_quaternions(np.atleast_2d(preds), np.atleast_2d(targets))
    t = np.atleast_2d(targets)
    m = np.atleast_2d(masks) > 0.5
    angles = []
    for b in range(N_MAX):
        sel = m[:, b]
        if not np.any(sel):
            continue
        cols = slice(13 * b + 3, 13 * b + 7)
        dots = np.clip(np.abs((p[sel, cols] * t[sel, cols]).sum(axis=1)), 0.0, 1.0)
        angles.append(2.0 * np.degrees(np.arccos(dots)))
    return float(np.concatenate(angles).mean())


def categorize_scenario(traj: Trajectory) -> str:
    """none / single / multiple / simultaneous, from the event log."""
    steps = [ev.fine_step for ev in traj.events]
    if not steps:
        return "none"
    if len(steps) == 1:
        return "single"
    if len(set(steps)) < len(steps):
        return "simultaneous"
    return "multiple"


@dataclass
class RolloutResult:
    predicted: np.ndarray       # (T+1, n, 13)
    truth: np.ndarray           # (T+1, n, 13)
    per_step_sq: np.ndarray     # (T,)
    e_cumulative: np.ndarray    # (T,)
    times: np.ndarray           # (T,) seconds


def ground_truth_states(run: ScenarioRun, horizon: int,
                        fine_dt: float | None = None) -> np.ndarray:
    """(horizon+1, n, 13) ground truth, re-simulating past the stored span."""
    traj = run.trajectory
    stored = traj.samples.shape[0] - 1
    if horizon <= stored:
        return traj.samples[:horizon + 1]
    if fine_dt is None:
        fine_dt = traj.fine_dt if np.isfinite(traj.fine_dt) else dynamics.DEFAULT_FINE_DT
    extended = dynamics.simulate(traj.initial_state, horizon * dynamics.SAMPLE_DT,
                                 fine_dt, renorm_tol=None)
    return extended.samples


def rollout(predictor, run: ScenarioRun, horizon: int,
            truth: np.ndarray | None = None) -> RolloutResult:
    """Autoregressive rollout against fine-simulated ground truth.

    Each prediction is renormalized and sign-aligned to the previous state
    before being fed back with the scenario's constant forces.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    traj = run.trajectory
    n = traj.n_bodies
    if truth is None:
        truth = ground_truth_states(run, horizon)
    predicted = np.empty((horizon + 1, n, 13))
    predicted[0] = truth[0]
    per_step = np.empty(horizon)
    state = truth[0]
    for step in range(horizon):
        x = pack_input_features(state, traj.params)
        y = predictor.predict(x[None, :], run)[0]
        if not np.all(np.isfinite(y)):
            raise ValueError(f"non-finite prediction at rollout step {step + 1}")
        new_state = np.empty((n, 13))
        for b in range(n):
            row = y[13 * b:13 * b + 13].copy()
            q = row[3:7]
            norm = np.linalg.norm(q)
            if norm <= 1e-12:
                q = state[b, 3:7]
            elif abs(norm - 1.0) > 1e-12:
                q = q / norm
            if float(q @ state[b, 3:7]) < 0.0:
                q = -q
            row[3:7] = q
            new_state[b] = row
        predicted[step + 1] = new_state
        per_step[step] = float(((new_state - truth[step + 1]) ** 2).sum())
        state = new_state
    e_cum = np.cumsum(per_step)
    times = dynamics.SAMPLE_DT * np.arange(1, horizon + 1)
    return RolloutResult(predicted, truth, per_step, e_cum, times)


def energy_conservation_error(predictor, runs: list[ScenarioRun],
                              horizon: int = 250, min_energy: float = 1.0) -> float:
    """Mean |E_final - E_initial| / |E_initial| (percent) over conservative runs."""
    ratios = []
    for run in runs:
        if not run.conservative:
            continue
        initial = run.trajectory.initial_state
        e_initial = dynamics.total_energy(initial)
        if abs(e_initial) < min_energy:
            continue
        result = rollout(predictor, run, horizon,
                         truth=ground_truth_states(run, horizon))
        final = SystemState(
            [_row_state(result.predicted[-1], b) for b in range(run.trajectory.n_bodies)],
            run.trajectory.params, run.trajectory.env)
        e_final = dynamics.total_energy(final)
        ratios.append(abs(e_final - e_initial) / abs(e_initial))
    if not ratios:
        raise ValueError("no qualifying conservative scenarios (need |E_initial| >= 1 J)")
    return float(np.mean(ratios) * 100.0)


def _row_state(rows: np.ndarray, b: int):
    from .bodies import RigidBodyState
    r = rows[b]
    q = r[3:7]
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > 1e-12 and norm > 0.0:
        q = q / norm
    return RigidBodyState(r[0:3], q, r[7:10], r[10:13])


def benchmark_inference(predictor, records: RecordSet, runs: list[ScenarioRun],
                        repeats: int = 100):
    """(mean_ms, std_ms) per single-record prediction, warmup excluded.

    Also asserts the predictions are bit-identical across repeats; timing
    runs pinned to one thread.
    """
    if len(records) == 0:
        raise ValueError("no records to time")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    idx = 0
    n_rec = len(records)
    with threadpool_limits(limits=1):
        reference = None
        for _ in range(5):  # warmup
            rec = records[idx % n_rec]
            predictor.predict(rec.input[None, :], runs[rec.scenario_id])
        times = np.empty(repeats)
        for r in range(repeats):
            rec = records[r % n_rec]
            run = runs[rec.scenario_id]
            t0 = time.perf_counter()
            out = predictor.predict(rec.input[None, :], run)
            times[r] = (time.perf_counter() - t0) * 1e3
            if r % n_rec == 0:
                if reference is None:
                    reference = out
                elif not np.array_equal(reference, out):
                    raise AssertionError("predictions changed across repeats")
    return float(times.mean()), float(times.std())


@dataclass
class MetricsReport:
    """Table-style comparison row for one predictor."""

    predictor: str
    mse: dict[str, float]
    re_percent: dict[str, float]
    re_excluded: dict[str, int]
    orientation_geodesic_deg: float
    ece_percent: float | None
    inference_ms_mean: float | None
    inference_ms_std: float | None
    category_quartiles: dict[str, dict[str, float]]
    curve_times: np.ndarray
    curve_values: np.ndarray
    schema_version: int = 1

    def to_json_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "predictor": self.predictor,
            "mse": self.mse,
            "re_percent": self.re_percent,
            "re_excluded": self.re_excluded,
            "orientation_geodesic_deg": self.orientation_geodesic_deg,
            "ece_percent": self.ece_percent,
            "inference_ms_mean": self.inference_ms_mean,
            "inference_ms_std": self.inference_ms_std,
            "category_quartiles": self.category_quartiles,
            "cumulative_error_curve": {
                "t_seconds": [float(t) for t in self.curve_times],
                "e_cumulative": [float(v) for v in self.curve_values],
            },
        }


def evaluate_suite(predictors: list, dataset: Dataset,
                   ece_runs: list[ScenarioRun] | None = None,
                   rollout_horizon: int = 500, ece_horizon: int = 250,
                   rollout_scenarios: int = 10,
                   timing_repeats: int = 100,
                   with_timing: bool = True) -> dict[str, MetricsReport]:
    """Full comparison: per-component MSE and RE, ECE, timing, per-category
    position-MSE quartiles, and mean cumulative-error curves."""
    test_ids = dataset.scenario_ids_for(2)
    if not test_ids:
        raise ValueError("dataset has no test scenarios")
    per_scenario = {sid: make_records(dataset.runs[sid].trajectory, scenario_id=sid)
                    for sid in test_ids}
    categories = {sid: categorize_scenario(dataset.runs[sid].trajectory)
                  for sid in test_ids}
    rollout_ids = test_ids[:rollout_scenarios]
    truth_cache = {sid: ground_truth_states(dataset.runs[sid], rollout_horizon)
                   for sid in rollout_ids}
    all_targets = np.concatenate([per_scenario[sid].targets for sid in test_ids])
    all_masks = np.concatenate([per_scenario[sid].masks for sid in test_ids])
    timing_records = RecordSet.concat([per_scenario[sid] for sid in test_ids[:2]])

    reports: dict[str, MetricsReport] = {}
    for predictor in predictors:
        preds_parts = []
        scenario_pos_mse: dict[int, float] = {}
        for sid in test_ids:
            rs = per_scenario[sid]
            p = predictor.predict(rs.inputs, dataset.runs[sid])
            preds_parts.append(p)
            scenario_pos_mse[sid] = mse_component(p, rs.targets, rs.masks, "position")
        preds = np.concatenate(preds_parts)
        mse = {c: mse_component(preds, all_targets, all_masks, c) for c in COMPONENTS}
        re_vals = {}
        re_excl = {}
        for c in COMPONENTS:
            try:
                val, excl, _used = relative_error_detail(preds, all_targets, all_masks, c)
            except ValueError:
                # every target below the magnitude guard (e.g. static set):
                # nothing measurable, reported as zero with all features excluded
                err, truth = _component_errors(preds, all_targets, all_masks, c)
                val, excl = 0.0, truth.size
            re_vals[c] = val
            re_excl[c] = excl
        geo = orientation_geodesic_deg(preds, all_targets, all_masks)
        cat_q: dict[str, dict[str, float]] = {}
        for cat in CATEGORIES:
            vals = np.array([scenario_pos_mse[sid] for sid in test_ids
                             if categories[sid] == cat])
            if vals.size:
                cat_q[cat] = {"q1": float(np.percentile(vals, 25)),
                              "median": float(np.percentile(vals, 50)),
                              "q3": float(np.percentile(vals, 75)),
                              "count": int(vals.size)}
        curves = []
        for sid in rollout_ids:
            res = rollout(predictor, dataset.runs[sid], rollout_horizon,
                          truth=truth_cache[sid])
            if np.any(np.diff(res.e_cumulative) < 0.0):
                raise AssertionError("cumulative error decreased during rollout")
            curves.append(res.e_cumulative)
        curve_mean = np.mean(curves, axis=0) if curves else np.zeros(0)
        curve_times = (dynamics.SAMPLE_DT * np.arange(1, rollout_horizon + 1)
                       if curves else np.zeros(0))
        ece = (energy_conservation_error(predictor, ece_runs, ece_horizon)
               if ece_runs else None)
        if with_timing:
            t_mean, t_std = benchmark_inference(predictor, timing_records,
                                                dataset.runs, timing_repeats)
        else:
            t_mean = t_std = None
        reports[predictor.name] = MetricsReport(
            predictor=predictor.name, mse=mse, re_percent=re_vals, re_excluded=re_excl,
            orientation_geodesic_deg=geo, ece_percent=ece,
            inference_ms_mean=t_mean, inference_ms_std=t_std,
            category_quartiles=cat_q, curve_times=curve_times, curve_values=curve_mean)
    return reports


def report_csv(reports: dict[str, MetricsReport]) -> str:
    """Fixed-schema CSV: predictor, metric, value, unit."""
    lines = ["predictor,metric,value,unit"]
    for name, rep in reports.items():
        for c in COMPONENTS:
            lines.append(f"{name},mse_{c},{rep.mse[c]!r},{COMPONENT_UNITS[c]}")
        for c in COMPONENTS:
            lines.append(f"{name},re_{c},{rep.re_percent[c]!r},%")
        lines.append(f"{name},orientation_geodesic,{rep.orientation_geodesic_deg!r},deg")
        if rep.ece_percent is not None:
            lines.append(f"{name},ece,{rep.ece_percent!r},%")
        if rep.inference_ms_mean is not None:
            lines.append(f"{name},inference_mean,{rep.inference_ms_mean!r},ms")
            lines.append(f"{name},inference_std,{rep.inference_ms_std!r},ms")
    return "\n".join(lines) + "\n"


def report_json(reports: dict[str, MetricsReport]) -> str:
    return json.dumps({"schema_version": 1,
                       "reports": [rep.to_json_dict() for rep in reports.values()]},
                      indent=2)


def curve_csv(rep: MetricsReport) -> str:
    lines = ["t_seconds,E_cumulative"]
    for t, v in zip(rep.curve_times, rep.curve_values):
        lines.append(f"{float(t)!r},{float(v)!r}")
    return "\n".join(lines) + "\n"
