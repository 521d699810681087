"""Scenario sampling, record extraction, dataset splitting, normalization.

Everything here is deterministic given seeds: scenario i of a run uses the
xoshiro256++ stream seeded with splitmix64(global_seed XOR i), and the
draw order inside one scenario is part of the reproducibility contract
(see ``sample_scenario``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .bodies import BodyParams, Environment, RigidBodyState, SystemState, Trajectory
from .errors import CrowdedSceneError
from .prng import Xoshiro256pp, scenario_seed, splitmix64

N_MAX = 5
BODY_FEATURES = 19          # pos 3, quat 4, linvel 3, angvel 3, force 3, torque 3
INPUT_DIM = N_MAX * BODY_FEATURES + N_MAX   # 100: features then 5-bit body mask
STATE_FEATURES = 13
TARGET_DIM = N_MAX * STATE_FEATURES         # 65

_SPLIT_SALT = 0x53504C4954  # "SPLIT"


@dataclass
class ScenarioConfig:
    """Sampling ranges for random scenarios (uniform in every range)."""

    n_bodies_choices: tuple[int, ...] = (3, 4, 5)
    mass_range: tuple[float, float] = (0.5, 2.0)
    radius_range: tuple[float, float] = (0.2, 0.5)
    position_range: tuple[float, float] = (0.0, 4.0)
    velocity_range: tuple[float, float] = (-2.0, 2.0)
    angular_velocity_range: tuple[float, float] = (-3.0, 3.0)
    force_range: tuple[float, float] = (-5.0, 5.0)
    torque_range: tuple[float, float] = (-1.0, 1.0)
    restitution_range: tuple[float, float] = (0.5, 1.0)
    linear_drag_range: tuple[float, float] = (0.0, 0.5)
    angular_damping_range: tuple[float, float] = (0.0, 0.1)
    gravity: bool = True
    conservative: bool = False  # forces eps=1, zero drag/damping/force/torque

    def __post_init__(self):
        if not self.n_bodies_choices or not set(self.n_bodies_choices) <= {3, 4, 5}:
            raise ValueError("n_bodies_choices must be a nonempty subset of {3, 4, 5}")
        for name in ("mass_range", "radius_range", "position_range", "velocity_range",
                     "angular_velocity_range", "force_range", "torque_range",
                     "restitution_range", "linear_drag_range", "angular_damping_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: ({lo}, {hi})")
        if self.mass_range[0] <= 0.0 or self.radius_range[0] <= 0.0:
            raise ValueError("mass and radius ranges must be strictly positive")
        if self.restitution_range[0] < 0.0 or self.restitution_range[1] > 1.0:
            raise ValueError("restitution range must lie in [0, 1]")
        if self.linear_drag_range[0] < 0.0 or self.angular_damping_range[0] < 0.0:
            raise ValueError("drag/damping ranges must be nonnegative")


MAX_PLACEMENT_REJECTIONS = 1000


def sample_scenario(seed: int, cfg: ScenarioConfig) -> SystemState:
    """Draw one initial system state.

    Draw order (fixed, reproducibility contract): body count; then unless
    conservative: restitution, drag, damping; then per body: mass, radius,
    position (resampled until non-overlapping), orientation, linear and
    angular velocity, force, torque. Conservative scenarios draw neither
    the environment coefficients nor forces/torques.
    """
    rng = Xoshiro256pp(seed)
    n = cfg.n_bodies_choices[rng.choice_index(len(cfg.n_bodies_choices))]
    if cfg.conservative:
        restitution, c_d, c_r = 1.0, 0.0, 0.0
    else:
        restitution = rng.uniform(*cfg.restitution_range)
        c_d = rng.uniform(*cfg.linear_drag_range)
        c_r = rng.uniform(*cfg.angular_damping_range)
    env = Environment(gravity=(0.0, 0.0, -9.81) if cfg.gravity else (0.0, 0.0, 0.0),
                      linear_drag=c_d, angular_damping=c_r, restitution=restitution)
    bodies: list[RigidBodyState] = []
    params: list[BodyParams] = []
    for _ in range(n):
        mass = rng.uniform(*cfg.mass_range)
        radius = rng.uniform(*cfg.radius_range)
        rejections = 0
        while True:
            pos = np.array([rng.uniform(*cfg.position_range) for _ in range(3)])
            clear = all(
                float(np.linalg.norm(pos - b.position)) > radius + p.radius
                for b, p in zip(bodies, params))
            if clear:
                break
            rejections += 1
            if rejections >= MAX_PLACEMENT_REJECTIONS:
                raise CrowdedSceneError(
                    f"cube too crowded: {rejections} consecutive placement rejections "
                    f"(seed {seed})")
        quat = np.array(rng.unit_quaternion())
        linvel = np.array([rng.uniform(*cfg.velocity_range) for _ in range(3)])
        angvel = np.array([rng.uniform(*cfg.angular_velocity_range) for _ in range(3)])
        if cfg.conservative:
            force = np.zeros(3)
            torque = np.zeros(3)
        else:
            force = np.array([rng.uniform(*cfg.force_range) for _ in range(3)])
            torque = np.array([rng.uniform(*cfg.torque_range) for _ in range(3)])
        inertia = 0.4 * mass * radius * radius  # solid sphere
        bodies.append(RigidBodyState(pos, quat, linvel, angvel))
        params.append(BodyParams(mass, radius, (inertia, inertia, inertia), force, torque))
    return SystemState(bodies, params, env, time=0.0)


@dataclass
class ScenarioRun:
    """One simulated scenario: its seed, flags, and sampled trajectory."""

    seed: int
    conservative: bool
    gravity: bool
    trajectory: Trajectory


@dataclass
class SampleRecord:
    """One supervised pair: padded input layout and next-state target."""

    input: np.ndarray    # (100,)
    target: np.ndarray   # (65,)
    scenario_id: int
    step_index: int


@dataclass
class RecordSet:
    """Packed records of one or more trajectories."""

    inputs: np.ndarray        # (m, 100)
    targets: np.ndarray       # (m, 65)
    scenario_ids: np.ndarray  # (m,)
    step_indices: np.ndarray  # (m,)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __getitem__(self, k: int) -> SampleRecord:
        return SampleRecord(self.inputs[k], self.targets[k],
                            int(self.scenario_ids[k]), int(self.step_indices[k]))

    @property
    def masks(self) -> np.ndarray:
        return self.inputs[:, N_MAX * BODY_FEATURES:]

    @staticmethod
    def concat(parts: list["RecordSet"]) -> "RecordSet":
        return RecordSet(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.scenario_ids for p in parts]),
            np.concatenate([p.step_indices for p in parts]),
        )


def pack_state_features(state_rows: np.ndarray) -> np.ndarray:
    """(n,13) state rows -> (65,) padded target vector."""
    n = state_rows.shape[0]
    out = np.zeros(TARGET_DIM)
    for b in range(N_MAX):
        if b < n:
            out[13 * b:13 * b + 13] = state_rows[b]
        else:
            out[13 * b + 3] = 1.0  # identity quaternion in padded slots
    return out


def pack_input_features(state_rows: np.ndarray, params: list[BodyParams]) -> np.ndarray:
    """(n,13) state rows plus per-body force/torque -> (100,) padded input."""
    n = state_rows.shape[0]
    out = np.zeros(INPUT_DIM)
    for b in range(N_MAX):
        base = BODY_FEATURES * b
        if b < n:
            out[base:base + 13] = state_rows[b]
            out[base + 13:base + 16] = params[b].external_force
            out[base + 16:base + 19] = params[b].external_torque
            out[N_MAX * BODY_FEATURES + b] = 1.0
        else:
            out[base + 3] = 1.0
    return out


def make_records(traj: Trajectory, scenario_id: int = 0) -> RecordSet:
    """One record per consecutive sample pair: state at t -> state at t+Δt."""
    if traj.n_samples < 2:
        raise ValueError("trajectory needs at least 2 samples to form records")
    n = traj.n_bodies
    m = traj.n_samples - 1
    inputs = np.zeros((m, INPUT_DIM))
    targets = np.zeros((m, TARGET_DIM))
    # constant columns (forces, torques, mask, padding) built once
    template = pack_input_features(traj.samples[0], traj.params)
    inputs[:] = template
    targets[:] = pack_state_features(traj.samples[0])
    for b in range(n):
        inputs[:, BODY_FEATURES * b:BODY_FEATURES * b + 13] = traj.samples[:-1, b, :]
        targets[:, 13 * b:13 * b + 13] = traj.samples[1:, b, :]
    return RecordSet(inputs, targets,
                     np.full(m, scenario_id, dtype=np.int64),
                     np.arange(m, dtype=np.int64))


def split_dataset(n_scenarios: int, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> np.ndarray:
    """Assign each scenario to train(0)/val(1)/test(2), floor counts, remainder to train."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if n_scenarios < 3:
        raise ValueError("need at least 3 scenarios to split")
    n_val = int(n_scenarios * ratios[1])
    n_test = int(n_scenarios * ratios[2])
    n_train = n_scenarios - n_val - n_test
    order = list(range(n_scenarios))
    rng = Xoshiro256pp(splitmix64((seed ^ _SPLIT_SALT) & ((1 << 64) - 1)))
    for i in range(n_scenarios - 1, 0, -1):  # Fisher-Yates
        j = rng.choice_index(i + 1)
        order[i], order[j] = order[j], order[i]
    split = np.empty(n_scenarios, dtype=np.int8)
    for pos, idx in enumerate(order):
        split[idx] = 0 if pos < n_train else (1 if pos < n_train + n_val else 2)
    return split


_STD_FLOOR = 1e-8


@dataclass
class Normalizer:
    """Per-feature z-score statistics fitted on training records only.

    Statistics for a body slot's columns are computed over the records
    where that slot is real; slots never populated get mean 0, std 1.
    ``apply`` zeroes padded feature columns, ``invert`` restores the
    canonical padding (identity quaternion, zeros), so the round trip is
    exact everywhere.
    """

    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    @staticmethod
    def fit(inputs: np.ndarray, targets: np.ndarray) -> "Normalizer":
        if inputs.shape[0] < 2:
            raise ValueError("need at least 2 records to fit a normalizer")
        masks = inputs[:, N_MAX * BODY_FEATURES:] > 0.5
        in_mean = np.zeros(INPUT_DIM)
        in_std = np.ones(INPUT_DIM)
        for b in range(N_MAX):
            sel = masks[:, b]
            cols = slice(BODY_FEATURES * b, BODY_FEATURES * (b + 1))
            if np.any(sel):
                block = inputs[sel, cols]
                in_mean[cols] = block.mean(axis=0)
                in_std[cols] = np.maximum(block.std(axis=0), _STD_FLOOR)
        mask_cols = slice(N_MAX * BODY_FEATURES, INPUT_DIM)
        in_mean[mask_cols] = inputs[:, mask_cols].mean(axis=0)
        in_std[mask_cols] = np.maximum(inputs[:, mask_cols].std(axis=0), _STD_FLOOR)
        t_mean = np.zeros(TARGET_DIM)
        t_std = np.ones(TARGET_DIM)
        for b in range(N_MAX):
            sel = masks[:, b]
            cols = slice(13 * b, 13 * (b + 1))
            if np.any(sel):
                block = targets[sel, cols]
                t_mean[cols] = block.mean(axis=0)
                t_std[cols] = np.maximum(block.std(axis=0), _STD_FLOOR)
        return Normalizer(in_mean, in_std, t_mean, t_std)

    def apply_inputs(self, inputs: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(inputs)
        masks = x[:, N_MAX * BODY_FEATURES:] > 0.5
        out = (x - self.input_mean) / self.input_std
        for b in range(N_MAX):
            out[~masks[:, b], BODY_FEATURES * b:BODY_FEATURES * (b + 1)] = 0.0
        return out.reshape(np.shape(inputs))

    def invert_inputs(self, normalized: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(normalized)
        out = z * self.input_std + self.input_mean
        masks = out[:, N_MAX * BODY_FEATURES:] > 0.5
        for b in range(N_MAX):
            rows = ~masks[:, b]
            cols = slice(BODY_FEATURES * b, BODY_FEATURES * (b + 1))
            out[rows, cols] = 0.0
            out[rows, BODY_FEATURES * b + 3] = 1.0
        out[:, N_MAX * BODY_FEATURES:] = masks.astype(np.float64)
        return out.reshape(np.shape(normalized))

    def apply_targets(self, targets: np.ndarray, masks: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(targets)
        m = np.atleast_2d(masks) > 0.5
        out = (t - self.target_mean) / self.target_std
        for b in range(N_MAX):
            out[~m[:, b], 13 * b:13 * (b + 1)] = 0.0
        return out.reshape(np.shape(targets))

    def invert_targets(self, normalized: np.ndarray, masks: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(normalized)
        m = np.atleast_2d(masks) > 0.5
        out = z * self.target_std + self.target_mean
        for b in range(N_MAX):
            rows = ~m[:, b]
            out[rows, 13 * b:13 * (b + 1)] = 0.0
            out[rows, 13 * b + 3] = 1.0
        return out.reshape(np.shape(normalized))


def target_mask_matrix(masks: np.ndarray) -> np.ndarray:
    """(m, 5) body masks -> (m, 65) per-feature 0/1 loss mask."""
    m = np.atleast_2d(masks)
    return np.repeat(m > 0.5, STATE_FEATURES, axis=1).astype(np.float64)


@dataclass
class Dataset:
    """Scenario runs plus split assignment and fitted normalizer."""

    runs: list[ScenarioRun]
    split: np.ndarray
    normalizer: Normalizer

    def __post_init__(self):
        if len(self.runs) != len(self.split):
            raise ValueError("split length must match scenario count")

    def records_for(self, split_code: int) -> RecordSet:
        parts = [make_records(run.trajectory, scenario_id=i)
                 for i, run in enumerate(self.runs)
                 if self.split[i] == split_code]
        if not parts:
            raise ValueError(f"no scenarios in split {split_code}")
        return RecordSet.concat(parts)

    def scenario_ids_for(self, split_code: int) -> list[int]:
        return [i for i in range(len(self.runs)) if self.split[i] == split_code]


def generate_runs(n_scenarios: int, global_seed: int, cfg: ScenarioConfig,
                  duration: float = 5.0,
                  fine_dt: float = dynamics.DEFAULT_FINE_DT) -> list[ScenarioRun]:
    """Sample and simulate n scenarios with per-scenario derived seeds."""
    runs = []
    for idx in range(n_scenarios):
        seed = scenario_seed(global_seed, idx)
        state = sample_scenario(seed, cfg)
        traj = dynamics.simulate(state, duration, fine_dt)
        runs.append(ScenarioRun(seed=seed, conservative=cfg.conservative,
                                gravity=cfg.gravity, trajectory=traj))
    return runs


def build_dataset(runs: list[ScenarioRun], global_seed: int,
                  ratios=(0.8, 0.1, 0.1)) -> Dataset:
    """Split by scenario and fit the normalizer on the training split."""
    split = split_dataset(len(runs), ratios, global_seed)
    train_parts = [make_records(run.trajectory, scenario_id=i)
                   for i, run in enumerate(runs) if split[i] == 0]
    train = RecordSet.concat(train_parts)
    normalizer = Normalizer.fit(train.inputs, train.targets)
    return Dataset(runs, split, normalizer)
