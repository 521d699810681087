"""Binary dataset container ("RBD1") and split/normalizer sidecar ("RBDS").

All integers and floats are little-endian. The main file stores sampled
trajectories per scenario; supervised records are rebuilt in memory.
Event step indices are fine-step indices (the step of the integration
substep in which the impulse was applied).

The sidecar lives next to the main file at ``<path>.rbds``.
"""
from __future__ import annotations

import os

import numpy as np

from .bodies import BodyParams, CollisionEvent, Environment, Trajectory
from .errors import BadMagicError, FileFormatError, UnsupportedVersionError
from .fileio import Reader, Writer, atomic_write
from .scenarios import Dataset, Normalizer, ScenarioRun, INPUT_DIM, N_MAX, TARGET_DIM

MAGIC_DATA = b"RBD1"
MAGIC_SIDECAR = b"RBDS"
VERSION = 1

SAMPLE_DT = 0.02


def sidecar_path(path) -> str:
    return os.fspath(path) + ".rbds"


def _encode_runs(runs: list[ScenarioRun]) -> bytes:
    w = Writer()
    w.raw(MAGIC_DATA)
    w.u32(VERSION)
    w.u32(N_MAX)
    w.u64(len(runs))
    for run in runs:
        traj = run.trajectory
        env = traj.env
        w.u64(run.seed)
        w.u32(traj.n_bodies)
        w.u8((1 if run.conservative else 0) | (2 if run.gravity else 0))
        w.f64(env.restitution)
        w.f64(env.linear_drag)
        w.f64(env.angular_damping)
        for p in traj.params:
            w.f64(p.mass)
            w.f64(p.radius)
            w.f64_array(p.inertia_body_diag)
            w.f64_array(p.external_force)
            w.f64_array(p.external_torque)
        w.u32(traj.n_samples)
        w.f64_array(traj.samples)
        w.u32(len(traj.events))
        for ev in traj.events:
            w.u32(ev.fine_step)
            w.u16(ev.i)
            w.u16(ev.j)
            w.f64(ev.impulse)
    return w.getvalue()


def write_runs(path, runs: list[ScenarioRun]) -> None:
    data = _encode_runs(runs)
    with atomic_write(path) as f:
        f.write(data)


def read_runs(path) -> list[ScenarioRun]:
    with open(path, "rb") as f:
        r = Reader(f.read())
    if r.raw(4) != MAGIC_DATA:
        raise BadMagicError(f"{path}: bad magic, expected {MAGIC_DATA!r}")
    version = r.u32()
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    n_max = r.u32()
    if n_max != N_MAX:
        raise FileFormatError(f"{path}: n_max {n_max} != {N_MAX}")
    n_scenarios = r.u64()
    runs = []
    for _ in range(n_scenarios):
        seed = r.u64()
        n_bodies = r.u32()
        flags = r.u8()
        restitution = r.f64()
        c_d = r.f64()
        c_r = r.f64()
        gravity = bool(flags & 2)
        env = Environment(gravity=(0.0, 0.0, -9.81) if gravity else (0.0, 0.0, 0.0),
                          linear_drag=c_d, angular_damping=c_r, restitution=restitution)
        params = []
        for _b in range(n_bodies):
            mass = r.f64()
            radius = r.f64()
            inertia = r.f64_array(3)
            force = r.f64_array(3)
            torque = r.f64_array(3)
            params.append(BodyParams(mass, radius, inertia, force, torque))
        n_samples = r.u32()
        samples = r.f64_array(n_samples * n_bodies * 13, (n_samples, n_bodies, 13))
        n_events = r.u32()
        events = []
        for _e in range(n_events):
            step = r.u32()
            i = r.u16()
            j = r.u16()
            impulse = r.f64()
            # sample grouping is not serialized; -1 marks it unknown
            events.append(CollisionEvent(fine_step=step, sample_step=-1,
                                         i=i, j=j, impulse=impulse))
        times = SAMPLE_DT * np.arange(n_samples)
        traj = Trajectory(params=params, env=env, sample_dt=SAMPLE_DT, times=times,
                          samples=samples, events=events, fine_dt=float("nan"))
        runs.append(ScenarioRun(seed=seed, conservative=bool(flags & 1),
                                gravity=gravity, trajectory=traj))
    if not r.at_end():
        raise FileFormatError(f"{path}: trailing data after payload")
    return runs


def _encode_sidecar(split: np.ndarray, norm: Normalizer) -> bytes:
    w = Writer()
    w.raw(MAGIC_SIDECAR)
    w.u32(VERSION)
    w.u64(len(split))
    for s in split:
        w.u8(int(s))
    w.u32(INPUT_DIM)
    w.u32(TARGET_DIM)
    w.f64_array(norm.input_mean)
    w.f64_array(norm.input_std)
    w.f64_array(norm.target_mean)
    w.f64_array(norm.target_std)
    return w.getvalue()


def write_sidecar(path, split: np.ndarray, norm: Normalizer) -> None:
    data = _encode_sidecar(split, norm)
    with atomic_write(path) as f:
        f.write(data)


def read_sidecar(path):
    with open(path, "rb") as f:
        r = Reader(f.read())
    if r.raw(4) != MAGIC_SIDECAR:
        raise BadMagicError(f"{path}: bad magic, expected {MAGIC_SIDECAR!r}")
    version = r.u32()
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    n = r.u64()
    split = np.array([r.u8() for _ in range(n)], dtype=np.int8)
    input_dim = r.u32()
    target_dim = r.u32()
    if input_dim != INPUT_DIM or target_dim != TARGET_DIM:
        raise FileFormatError(
            f"{path}: dims ({input_dim},{target_dim}) != ({INPUT_DIM},{TARGET_DIM})")
    norm = Normalizer(r.f64_array(input_dim), r.f64_array(input_dim),
                      r.f64_array(target_dim), r.f64_array(target_dim))
    if not r.at_end():
        raise FileFormatError(f"{path}: trailing data after payload")
    return split, norm


def write_dataset(path, dataset: Dataset) -> None:
    """Write the trajectory container and its split/normalizer sidecar."""
    write_runs(path, dataset.runs)
    write_sidecar(sidecar_path(path), dataset.split, dataset.normalizer)


def read_dataset(path) -> Dataset:
    runs = read_runs(path)
    split, norm = read_sidecar(sidecar_path(path))
    return Dataset(runs, split, norm)
