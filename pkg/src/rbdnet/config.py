"""Flat key=value run configuration with dotted names and flag overrides.

Example file:

    # scenario sampling
    scenario.gravity = true
    scenario.force_min = -2.0
    scenario.force_max = 2.0
    train.epochs = 50

Unknown keys are rejected. Command-line ``--set key=value`` overrides win
over the file. All values are validated (by constructing the typed configs)
before any command does work.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .dynamics import DEFAULT_FINE_DT
from .network import NetworkConfig
from .scenarios import ScenarioConfig
from .training import TrainConfig


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(p.strip()) for p in s.split(",") if p.strip())


# dotted key -> (parser, default)
KEY_SPECS: dict[str, tuple] = {
    "scenario.n_bodies_choices": (_parse_int_list, (3, 4, 5)),
    "scenario.mass_min": (float, 0.5),
    "scenario.mass_max": (float, 2.0),
    "scenario.radius_min": (float, 0.2),
    "scenario.radius_max": (float, 0.5),
    "scenario.position_min": (float, 0.0),
    "scenario.position_max": (float, 4.0),
    "scenario.velocity_min": (float, -2.0),
    "scenario.velocity_max": (float, 2.0),
    "scenario.angular_velocity_min": (float, -3.0),
    "scenario.angular_velocity_max": (float, 3.0),
    "scenario.force_min": (float, -5.0),
    "scenario.force_max": (float, 5.0),
    "scenario.torque_min": (float, -1.0),
    "scenario.torque_max": (float, 1.0),
    "scenario.restitution_min": (float, 0.5),
    "scenario.restitution_max": (float, 1.0),
    "scenario.linear_drag_min": (float, 0.0),
    "scenario.linear_drag_max": (float, 0.5),
    "scenario.angular_damping_min": (float, 0.0),
    "scenario.angular_damping_max": (float, 0.1),
    "scenario.gravity": (_parse_bool, True),
    "scenario.conservative": (_parse_bool, False),
    "sim.duration": (float, 5.0),
    "sim.fine_dt": (float, DEFAULT_FINE_DT),
    "data.train_ratio": (float, 0.8),
    "data.val_ratio": (float, 0.1),
    "data.test_ratio": (float, 0.1),
    "network.hidden_dim": (int, 256),
    "network.num_blocks": (int, 4),
    "network.dropout_rate": (float, 0.2),
    "network.predict_delta": (_parse_bool, False),
    "train.epochs": (int, 200),
    "train.batch_size": (int, 64),
    "train.lr0": (float, 1e-3),
    "train.lr_gamma": (float, 0.1),
    "train.lr_power": (float, 0.75),
    "train.l2": (float, 1e-4),
    "train.patience": (int, 20),
    "eval.rollout_horizon": (int, 500),
    "eval.ece_horizon": (int, 250),
    "eval.rollout_scenarios": (int, 10),
    "eval.ece_scenarios": (int, 100),
    "eval.timing_repeats": (int, 100),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values.get(key, KEY_SPECS[key][1])

    def set(self, key: str, raw: str):
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key {key!r}")
        parser = KEY_SPECS[key][0]
        try:
            self.values[key] = parser(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            n_bodies_choices=self["scenario.n_bodies_choices"],
            mass_range=(self["scenario.mass_min"], self["scenario.mass_max"]),
            radius_range=(self["scenario.radius_min"], self["scenario.radius_max"]),
            position_range=(self["scenario.position_min"], self["scenario.position_max"]),
            velocity_range=(self["scenario.velocity_min"], self["scenario.velocity_max"]),
            angular_velocity_range=(self["scenario.angular_velocity_min"],
                                    self["scenario.angular_velocity_max"]),
            force_range=(self["scenario.force_min"], self["scenario.force_max"]),
            torque_range=(self["scenario.torque_min"], self["scenario.torque_max"]),
            restitution_range=(self["scenario.restitution_min"],
                               self["scenario.restitution_max"]),
            linear_drag_range=(self["scenario.linear_drag_min"],
                               self["scenario.linear_drag_max"]),
            angular_damping_range=(self["scenario.angular_damping_min"],
                                   self["scenario.angular_damping_max"]),
            gravity=self["scenario.gravity"],
            conservative=self["scenario.conservative"],
        )

    def network_config(self, architecture: str = "residual", init_seed: int = 0) -> NetworkConfig:
        return NetworkConfig(hidden_dim=self["network.hidden_dim"],
                             num_blocks=self["network.num_blocks"],
                             dropout_rate=self["network.dropout_rate"],
                             predict_delta=self["network.predict_delta"],
                             architecture=architecture, init_seed=init_seed)

    def train_config(self, shuffle_seed: int = 0) -> TrainConfig:
        return TrainConfig(epochs=self["train.epochs"],
                           batch_size=self["train.batch_size"],
                           lr0=self["train.lr0"], lr_gamma=self["train.lr_gamma"],
                           lr_power=self["train.lr_power"], l2=self["train.l2"],
                           patience=self["train.patience"], shuffle_seed=shuffle_seed)

    def ratios(self) -> tuple[float, float, float]:
        return (self["data.train_ratio"], self["data.val_ratio"], self["data.test_ratio"])

    def validate(self):
        """Construct every typed config so invariants are checked up front."""
        self.scenario_config()
        self.network_config()
        self.train_config()
        if not self["sim.duration"] > 0 or not self["sim.fine_dt"] > 0:
            raise ConfigError("sim.duration and sim.fine_dt must be positive")
        if abs(sum(self.ratios()) - 1.0) > 1e-9:
            raise ConfigError("data split ratios must sum to 1")
        return self


def parse_config_text(text: str, into: RunConfig | None = None) -> RunConfig:
    cfg = into if into is not None else RunConfig()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, value = line.split("=", 1)
        cfg.set(key.strip(), value.strip())
    return cfg


def load_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    """File first, then ``key=value`` overrides (overrides win)."""
    cfg = RunConfig()
    if path:
        with open(path, "r", encoding="utf-8") as f:
            parse_config_text(f.read(), cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    return cfg.validate()
