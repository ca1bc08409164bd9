"""Pipeline configuration: every tunable in one validated, JSON-backed object."""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .calib import STATIC_VARIANCE_BOUND
from .dyn.fall import FallRecoveryConfig
from .dyn.model import ContactParams, DEFAULT_KD, DEFAULT_KP, DEFAULT_TORQUE_LIMIT
from .dyn.reward import RewardConfig
from .exceptions import ConfigError
from .insole import DEFAULT_CONTACT_THRESHOLD, DEFAULT_COP_MIN_FORCE, sensor_subset
from .statediff import AblationMask

ABLATIONS = ("OA", "OAV", "OAVJglo", "OAVJrel")
_SENSORS_RE = re.compile(r"^([2-6])(\+pressure)?$")


def parse_sensors(spec):
    """``"4+pressure"`` -> (4, True); ``"3"`` -> (3, False)."""
    m = _SENSORS_RE.match(str(spec).strip())
    if not m:
        raise ConfigError("sensors", f"expected 2..6 optionally followed by +pressure, got {spec!r}")
    return int(m.group(1)), m.group(2) is not None


@dataclass(frozen=True)
class CalibSection:
    static_variance_bound: float = STATIC_VARIANCE_BOUND
    tau_acc: float = 3.0
    sync_max_lag: int = 200
    lowpass_cutoff_hz: float = 5.0


@dataclass(frozen=True)
class InsoleSection:
    contact_threshold: float = DEFAULT_CONTACT_THRESHOLD
    cop_min_force: float = DEFAULT_COP_MIN_FORCE


@dataclass(frozen=True)
class KinnetSection:
    buffer_frames: int = 100
    hidden: int = 64
    oracle_noise: float = 0.0


@dataclass(frozen=True)
class DynSection:
    kp: float = DEFAULT_KP
    kd: float = DEFAULT_KD
    torque_limit: float = DEFAULT_TORQUE_LIMIT
    stiffness: float = ContactParams.stiffness
    damping: float = ContactParams.damping
    friction: float = ContactParams.friction
    substeps: int = 10
    total_mass: float | None = None


@dataclass(frozen=True)
class RewardSection:
    w_amp: float = 0.5
    w_imit: float = 0.5
    w_p: float = 0.5
    w_theta: float = 0.3
    w_v: float = 0.1
    w_omega: float = 0.1
    k_p: float = 100.0
    k_theta: float = 100.0
    k_v: float = 10.0
    k_omega: float = 0.1
    alpha: float = 0.0005
    lambda_gp: float = 5.0
    window: int = 10
    gamma: float = 0.99
    skip_frames: int = 3


@dataclass(frozen=True)
class FallSection:
    tau_z: float = 0.30
    tau_rho: float = 0.7
    tau_e: float = 0.25


# (section, key) -> (lower, upper, lower inclusive); None means unbounded
_RANGES = {
    ("calib", "static_variance_bound"): (0.0, None, False),
    ("calib", "tau_acc"): (0.0, None, False),
    ("calib", "sync_max_lag"): (0, None, True),
    ("calib", "lowpass_cutoff_hz"): (0.0, 50.0, False),
    ("insole", "contact_threshold"): (0.0, None, True),
    ("insole", "cop_min_force"): (0.0, None, False),
    ("kinnet", "buffer_frames"): (1, None, True),
    ("kinnet", "hidden"): (1, None, True),
    ("kinnet", "oracle_noise"): (0.0, None, True),
    ("dyn", "kp"): (0.0, None, True),
    ("dyn", "kd"): (0.0, None, True),
    ("dyn", "torque_limit"): (0.0, None, False),
    ("dyn", "stiffness"): (0.0, None, False),
    ("dyn", "damping"): (0.0, None, True),
    ("dyn", "friction"): (0.0, None, True),
    ("dyn", "substeps"): (1, None, True),
    ("dyn", "total_mass"): (0.0, None, False),
    ("reward", "window"): (1, None, True),
    ("reward", "gamma"): (0.0, 1.0, False),
    ("reward", "skip_frames"): (0, None, True),
    ("fall", "tau_z"): (0.0, None, False),
    ("fall", "tau_rho"): (0.0, 1.0, False),
    ("fall", "tau_e"): (0.0, None, False),
}
for _k in ("w_amp", "w_imit", "w_p", "w_theta", "w_v", "w_omega", "k_p", "k_theta", "k_v",
           "k_omega", "alpha", "lambda_gp"):
    _RANGES[("reward", _k)] = (0.0, None, True)

_SECTIONS = {"calib": CalibSection, "insole": InsoleSection, "kinnet": KinnetSection,
             "dyn": DynSection, "reward": RewardSection, "fall": FallSection}


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline tunables.

    Load with :meth:`from_dict` or :func:`load_config`; values are checked on
    construction and a :class:`ConfigError` names the dotted key at fault.
    """

    seed: int = 0
    sensors: str = "4+pressure"
    ablation: str = "OAVJrel"
    segment_frames: int = 500
    calib: CalibSection = field(default_factory=CalibSection)
    insole: InsoleSection = field(default_factory=InsoleSection)
    kinnet: KinnetSection = field(default_factory=KinnetSection)
    dyn: DynSection = field(default_factory=DynSection)
    reward: RewardSection = field(default_factory=RewardSection)
    fall: FallSection = field(default_factory=FallSection)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        parse_sensors(self.sensors)
        if self.ablation not in ABLATIONS:
            raise ConfigError("ablation", f"must be one of {', '.join(ABLATIONS)}")
        if not isinstance(self.segment_frames, int) or self.segment_frames < 3:
            raise ConfigError("segment_frames", "must be an integer of at least 3")
        for name in _SECTIONS:
            sec = getattr(self, name)
            for f in fields(sec):
                _check_value(name, f.name, getattr(sec, f.name), f.default)

    # -- derived views -------------------------------------------------------
    @property
    def n_imus(self):
        return parse_sensors(self.sensors)[0]

    @property
    def pressure(self):
        return parse_sensors(self.sensors)[1]

    @property
    def devices(self):
        return sensor_subset(self.n_imus)

    @property
    def mask(self):
        return AblationMask.from_name(self.ablation)

    def reward_config(self):
        return RewardConfig(**asdict(self.reward))

    def fall_config(self):
        return FallRecoveryConfig(self.fall.tau_z, self.fall.tau_rho, self.kinnet.buffer_frames, self.fall.tau_e)

    def contact_params(self):
        return ContactParams(self.dyn.stiffness, self.dyn.damping, self.dyn.friction)

    def humanoid(self):
        from .dyn.model import smpl_humanoid

        return smpl_humanoid(self.dyn.total_mass, self.dyn.kp, self.dyn.kd, self.dyn.torque_limit,
                             self.contact_params())

    # -- serialisation -------------------------------------------------------
    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("<root>", "configuration must be a mapping")
        top = {f.name for f in fields(cls)}
        kwargs = {}
        for key, val in d.items():
            if key not in top:
                raise ConfigError(key, "unknown key")
            if key in _SECTIONS:
                if not isinstance(val, dict):
                    raise ConfigError(key, "must be a mapping")
                sec_cls = _SECTIONS[key]
                names = {f.name for f in fields(sec_cls)}
                for k in val:
                    if k not in names:
                        raise ConfigError(f"{key}.{k}", "unknown key")
                for f in fields(sec_cls):
                    if f.name in val:
                        _check_value(key, f.name, val[f.name], f.default)
                kwargs[key] = sec_cls(**val)
            else:
                kwargs[key] = val
        return cls(**kwargs)

    def with_overrides(self, **kw):
        """Copy with top-level values replaced; ``None`` entries are ignored."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _check_value(section, key, value, default):
    dotted = f"{section}.{key}"
    if value is None:
        if default is None:
            return
        raise ConfigError(dotted, "must not be null")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(dotted, f"must be a number, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool) and not isinstance(value, int):
        raise ConfigError(dotted, "must be an integer")
    lo, hi, lo_inclusive = _RANGES.get((section, key), (None, None, True))
    if lo is not None and (value < lo or (value == lo and not lo_inclusive)):
        raise ConfigError(dotted, f"must be {'>=' if lo_inclusive else '>'} {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(dotted, f"must be <= {hi}, got {value}")


def load_config(path=None):
    """Defaults when ``path`` is None, otherwise the validated JSON file."""
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such config file: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return PipelineConfig.from_dict(data)
