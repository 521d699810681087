"""Domain types: body state, body parameters, environment, system, trajectory.

The simulation kernels work on packed float64 arrays; these dataclasses are
the friendly API surface and define the packing layout:

    state row  (13): px py pz  qw qx qy qz  vx vy vz  wx wy wz
    params row (11): mass radius  Ix Iy Iz  fx fy fz  tx ty tz
    env vector  (6): gx gy gz  c_d c_r  restitution
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import math3d

STATE_WIDTH = 13
PARAMS_WIDTH = 11

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


def _as_vec(v, n, name) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(n).copy()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite components: {a}")
    return a


@dataclass
class RigidBodyState:
    """Position, unit orientation quaternion, and world-frame velocities."""

    position: np.ndarray
    orientation: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray

    def __post_init__(self):
        self.position = _as_vec(self.position, 3, "position")
        self.orientation = _as_vec(self.orientation, 4, "orientation")
        self.linear_velocity = _as_vec(self.linear_velocity, 3, "linear_velocity")
        self.angular_velocity = _as_vec(self.angular_velocity, 3, "angular_velocity")
        if abs(math3d.quat_norm(self.orientation) - 1.0) > math3d.UNIT_NORM_TOL:
            raise ValueError("orientation must be a unit quaternion within 1e-9")

    def pack(self) -> np.ndarray:
        return np.concatenate([
            self.position, self.orientation,
            self.linear_velocity, self.angular_velocity,
        ])

    @staticmethod
    def unpack(row: np.ndarray) -> "RigidBodyState":
        return RigidBodyState(row[0:3], row[3:7], row[7:10], row[10:13])


@dataclass
class BodyParams:
    """Inertial parameters plus the constant applied force and torque."""

    mass: float
    radius: float
    inertia_body_diag: np.ndarray
    external_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    external_torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.mass = float(self.mass)
        self.radius = float(self.radius)
        self.inertia_body_diag = _as_vec(self.inertia_body_diag, 3, "inertia_body_diag")
        self.external_force = _as_vec(self.external_force, 3, "external_force")
        self.external_torque = _as_vec(self.external_torque, 3, "external_torque")
        if not (self.mass > 0.0 and self.radius > 0.0):
            raise ValueError("mass and radius must be strictly positive")
        if np.any(self.inertia_body_diag <= 0.0):
            raise ValueError("inertia diagonal must be strictly positive")

    def pack(self) -> np.ndarray:
        return np.concatenate([
            [self.mass, self.radius], self.inertia_body_diag,
            self.external_force, self.external_torque,
        ])

    @staticmethod
    def unpack(row: np.ndarray) -> "BodyParams":
        return BodyParams(row[0], row[1], row[2:5], row[5:8], row[8:11])

    @staticmethod
    def solid_sphere(mass: float, radius: float,
                     external_force=(0.0, 0.0, 0.0),
                     external_torque=(0.0, 0.0, 0.0)) -> "BodyParams":
        i = 0.4 * mass * radius * radius
        return BodyParams(mass, radius, (i, i, i), external_force, external_torque)


@dataclass
class Environment:
    """Gravity plus the linear drag / angular damping / restitution constants."""

    gravity: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))
    linear_drag: float = 0.0
    angular_damping: float = 0.0
    restitution: float = 1.0

    def __post_init__(self):
        self.gravity = _as_vec(self.gravity, 3, "gravity")
        self.linear_drag = float(self.linear_drag)
        self.angular_damping = float(self.angular_damping)
        self.restitution = float(self.restitution)
        if self.linear_drag < 0.0 or self.angular_damping < 0.0:
            raise ValueError("drag and damping coefficients must be nonnegative")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")

    def pack(self) -> np.ndarray:
        return np.concatenate([
            self.gravity, [self.linear_drag, self.angular_damping, self.restitution],
        ])


@dataclass
class SystemState:
    """All bodies of one scenario at one instant."""

    bodies: list[RigidBodyState]
    params: list[BodyParams]
    env: Environment
    time: float = 0.0

    def __post_init__(self):
        if len(self.bodies) != len(self.params) or len(self.bodies) < 1:
            raise ValueError("bodies and params must be same nonempty length")

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    def pack_states(self) -> np.ndarray:
        return np.stack([b.pack() for b in self.bodies])

    def pack_params(self) -> np.ndarray:
        return np.stack([p.pack() for p in self.params])

    def with_states(self, rows: np.ndarray, time: float | None = None) -> "SystemState":
        bodies = [RigidBodyState.unpack(rows[i]) for i in range(rows.shape[0])]
        return SystemState(bodies, self.params, self.env,
                           self.time if time is None else time)


@dataclass
class CollisionEvent:
    """One applied impulse: when (fine and sample step), which pair, how hard."""

    fine_step: int
    sample_step: int
    i: int
    j: int
    impulse: float


@dataclass
class Trajectory:
    """Time-sampled system states plus the collision event log.

    ``samples`` has shape (n_samples, n_bodies, 13); ``samples[0]`` is the
    initial state. Timestamps advance by exactly ``sample_dt``.
    """

    params: list[BodyParams]
    env: Environment
    sample_dt: float
    times: np.ndarray
    samples: np.ndarray
    events: list[CollisionEvent]
    fine_dt: float
    max_renorm: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_bodies(self) -> int:
        return self.samples.shape[1]

    def state_at(self, k: int) -> SystemState:
        rows = self.samples[k]
        bodies = [RigidBodyState.unpack(rows[i]) for i in range(self.n_bodies)]
        return SystemState(bodies, self.params, self.env, float(self.times[k]))

    @property
    def initial_state(self) -> SystemState:
        return self.state_at(0)
