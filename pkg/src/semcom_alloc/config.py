"""Scenario configuration: schema, YAML loading with line-aware errors, dumping.

Power-like quantities are written in dBm / dBm/Hz in the file and converted
to watts exactly once, when the ``SystemConfig`` is built.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import GAIN_MODES, RadioConstants, dbm_to_watt
from .distortion import AiTaskConstants

PHASES = ("training", "inference")
REWARD_TRANSFORMS = ("linear", "symlog")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DdpgHyper:
    lr_actor: float = 3e-4
    lr_critic: float = 1e-3
    gamma: float = 0.99
    tau: float = 5e-3
    batch: int = 128
    warmup_episodes: int = 50
    steps_per_episode: int = 200
    train_episodes: int = 150
    buffer_capacity: int = 100_000
    hidden: tuple = (128, 128)
    momentum: float = 0.9
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_decay: float = 0.995
    reward_scale: float = 10.0
    grad_clip: float = 1.0
    reward_transform: str = "symlog"

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ConfigError("ddpg.tau must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ConfigError("ddpg.gamma must lie in (0, 1]")
        if not 0 < self.ou_decay <= 1:
            raise ConfigError("ddpg.ou_decay must lie in (0, 1]")
        for name in ("batch", "steps_per_episode", "buffer_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ddpg.{name} must be >= 1")
        if self.reward_transform not in REWARD_TRANSFORMS:
            raise ConfigError(f"ddpg.reward_transform must be one of {REWARD_TRANSFORMS}")
        for name in ("warmup_episodes", "train_episodes"):
            if getattr(self, name) < 0:
                raise ConfigError(f"ddpg.{name} must be >= 0")


@dataclass(frozen=True)
class SystemConfig:
    users: int = 10
    region_side_km: float = 1.0
    min_distance_km: float = 0.01
    gain_mode: str = "empirical"
    noise_psd_dbm_hz: float = -174.0
    interference_w: float = 0.0
    bandwidth_max_hz: float = 10e6
    power_max_dbm: float = 10.0
    shadow_db_sigma: float = 8.0
    payload_bits: float = 24528.0
    compression_table: str | None = None
    task: AiTaskConstants = field(default_factory=AiTaskConstants)
    epsilon_learn: float = 3.0
    epsilon_inf: float = 0.05
    model_variance: float = 0.01
    data_variance: float = 0.0
    data_counts: tuple | None = None
    penalty_weight: float = 1e4
    energy_reference_j: float | None = None
    infeasible_reward: float = -100.0
    min_selected: int = 0
    phase: str = "inference"
    seed: int = 0
    ddpg: DdpgHyper = field(default_factory=DdpgHyper)
    radio: RadioConstants = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.users < 1:
            raise ConfigError("users must be >= 1")
        if self.gain_mode not in GAIN_MODES:
            raise ConfigError(f"gain_mode must be one of {GAIN_MODES}")
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}")
        for name in ("region_side_km", "min_distance_km", "bandwidth_max_hz", "payload_bits",
                     "epsilon_learn", "epsilon_inf", "penalty_weight", "shadow_db_sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        for name in ("model_variance", "data_variance", "interference_w"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be >= 0, got {v!r}")
        if not 0 <= self.min_selected <= self.users:
            raise ConfigError("min_selected must lie in [0, users]")
        if self.data_counts is not None:
            if len(self.data_counts) != self.users or min(self.data_counts) <= 0:
                raise ConfigError("data_counts needs one positive entry per user")
        radio = RadioConstants(
            noise_psd_N0=dbm_to_watt(self.noise_psd_dbm_hz),
            interference_I=self.interference_w,
            bandwidth_cap_Bmax=self.bandwidth_max_hz,
            power_cap_Pmax=dbm_to_watt(self.power_max_dbm),
            shadow_fading_db_sigma=self.shadow_db_sigma,
        )
        object.__setattr__(self, "radio", radio)
        if self.energy_reference_j is None:
            # P_max * Z / R_ref with R_ref = one bit/s/Hz on an equal bandwidth share
            ref_rate = self.bandwidth_max_hz / self.users
            object.__setattr__(self, "energy_reference_j", radio.power_cap_Pmax * self.payload_bits / ref_rate)
        elif not self.energy_reference_j > 0:
            raise ConfigError("energy_reference_j must be positive")

    @property
    def user_data_counts(self) -> tuple:
        return tuple(self.data_counts) if self.data_counts is not None else (1,) * self.users

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_power(self, dbm: float) -> "SystemConfig":
        """Same scenario at another P_max; the resolved energy reference is kept."""
        return self.replace(power_max_dbm=float(dbm))

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if not f.init:
                continue
            v = getattr(self, f.name)
            if f.name in ("task", "ddpg"):
                v = {k: (list(x) if isinstance(x, tuple) else x) for k, x in dataclasses.asdict(v).items()}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


# key -> expected python type(s) for scalar fields; nested sections handled separately
_SCALARS = {f.name: f.type for f in dataclasses.fields(SystemConfig) if f.init}
_NESTED = {"task": AiTaskConstants, "ddpg": DdpgHyper}


def _coerce(value, default, where: str):
    """Coerce a YAML scalar/list to the type of ``default``; raise with location otherwise."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(default, tuple):
        if isinstance(value, list):
            return tuple(_coerce(v, default[0] if default else 0.0, f"{where}[{i}]") for i, v in enumerate(value))
        raise ConfigError(f"{where}: expected a list, got {value!r}")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


# defaults that are None need an explicit type to coerce against
_NONE_DEFAULT_TYPES = {"compression_table": "", "data_counts": (1,), "energy_reference_j": 1.0}


def _mapping_lines(node) -> dict:
    """Map each key in a YAML mapping node to its 1-based line number."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            lines[k.value] = (k.start_mark.line + 1, v)
    return lines


def parse_config(text: str, source: str = "<string>") -> SystemConfig:
    try:
        root = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    lines = _mapping_lines(root)
    defaults = SystemConfig()
    kwargs = {}
    for key, value in raw.items():
        line = lines.get(key, (0, None))[0]
        where = f"{source}:{line}: {key}"
        if key not in _SCALARS:
            raise ConfigError(f"{where}: unknown key")
        if key in _NESTED:
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a mapping")
            sub_lines = _mapping_lines(lines[key][1])
            sub_default = _NESTED[key]()
            sub_kwargs = {}
            for sk, sv in value.items():
                sline = sub_lines.get(sk, (line, None))[0]
                swhere = f"{source}:{sline}: {key}.{sk}"
                if not hasattr(sub_default, sk):
                    raise ConfigError(f"{swhere}: unknown key")
                sub_kwargs[sk] = _coerce(sv, getattr(sub_default, sk), swhere)
            try:
                kwargs[key] = _NESTED[key](**sub_kwargs)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{where}: {exc}") from None
            continue
        default = getattr(defaults, key)
        if value is None:
            kwargs[key] = None
            continue
        if default is None:
            default = _NONE_DEFAULT_TYPES[key]
        kwargs[key] = _coerce(value, default, where)
    try:
        return SystemConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> SystemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    return parse_config(text, str(path))


def dump_config(config: SystemConfig) -> str:
    """Effective configuration (all defaults resolved) as YAML."""
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=False)


def default_config_path() -> Path:
    return Path(str(resources.files("semcom_alloc") / "data" / "default.yaml"))


def default_config_text() -> str:
    """The bundled, commented default scenario file."""
    return resources.files("semcom_alloc").joinpath("data/default.yaml").read_text()
