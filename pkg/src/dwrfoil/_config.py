"""Run configuration: dataclass sections read from flat ``section.key = value`` text."""

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Tuple, Union, get_type_hints

from dwrfoil._euler import FLUXES, FreeStream
from dwrfoil._geometry import DELTA_RANGE, ThicknessConstraint
from dwrfoil.exceptions import ConfigError, DomainError

logger = logging.getLogger(__name__)

OBJECTIVES = ("drag", "lift_drag_ratio", "surrogate")
REWARD_MODES = ("simple", "generalized")

Ranges = Tuple[Tuple[float, float], ...]
PathLike = Union[str, Path]


@dataclass
class GeometryConfig:
    degree: int = 16
    lambda_s: float = 1e-6
    n_points: int = 132
    thickness: float = 0.12
    delta: float = 0.4
    max_step: float = 0.005
    thickness_ranges: Ranges = ((0.01, 0.1), (0.7, 0.9))
    min_thickness: float = 0.01

    def validate(self) -> None:
        _require(self.degree >= 1, "geometry.degree must be >= 1")
        _require(self.lambda_s >= 0.0, "geometry.lambda_s must be >= 0")
        _require(self.n_points >= 2 * (self.degree + 1), "geometry.n_points too small for the degree")
        _require(DELTA_RANGE[0] <= self.delta <= DELTA_RANGE[1], f"geometry.delta outside {DELTA_RANGE}")
        _require(self.max_step > 0.0, "geometry.max_step must be > 0")
        try:
            self.constraint()
        except DomainError as exc:
            raise ConfigError(f"geometry thickness constraint: {exc}") from exc

    def constraint(self) -> ThicknessConstraint:
        return ThicknessConstraint(self.thickness_ranges, self.min_thickness)


@dataclass
class MeshConfig:
    radius: float = 35.0
    layers: int = 24
    smoothing_sweeps: int = 3
    follow_decay: float = 0.5
    curvature_capture: bool = False
    kappa_tol: float = 0.1
    capture_rounds: int = 5

    def validate(self) -> None:
        _require(self.radius > 2.0, "mesh.radius must be > 2 chords")
        _require(self.layers >= 3, "mesh.layers must be >= 3")
        _require(self.smoothing_sweeps >= 0, "mesh.smoothing_sweeps must be >= 0")
        _require(self.follow_decay > 0.0, "mesh.follow_decay must be > 0")
        _require(self.kappa_tol > 0.0, "mesh.kappa_tol must be > 0")


@dataclass
class SolverConfig:
    tol: float = 1e-3
    max_iter: int = 100
    flux: str = "rusanov"
    cfl: float = 10.0

    def validate(self) -> None:
        _require(self.tol > 0.0, "solver.tol must be > 0")
        _require(self.max_iter >= 1, "solver.max_iter must be >= 1")
        _require(self.flux in FLUXES, f"solver.flux must be one of {FLUXES}")
        _require(self.cfl > 0.0, "solver.cfl must be > 0")


@dataclass
class DwrConfig:
    refine_steps: int = 2
    k: float = 1.0
    fine_max_iter: int = 20
    adjoint_tol: float = 1e-8

    def validate(self) -> None:
        _require(self.refine_steps >= 1, "dwr.refine_steps must be >= 1")
        _require(self.fine_max_iter >= 0, "dwr.fine_max_iter must be >= 0")
        _require(self.adjoint_tol > 0.0, "dwr.adjoint_tol must be > 0")


@dataclass
class RewardConfig:
    mode: str = "simple"
    lambda0: float = 0.0
    decay: float = 0.9
    penalty: float = -0.01
    discount: float = 0.99

    def validate(self) -> None:
        _require(self.mode in REWARD_MODES, f"reward.mode must be one of {REWARD_MODES}")
        _require(self.lambda0 >= 0.0, "reward.lambda0 must be >= 0")
        _require(0.0 < self.decay < 1.0, "reward.decay must lie in (0, 1)")
        _require(self.penalty < 0.0, "reward.penalty must be < 0")
        _require(0.0 < self.discount <= 1.0, "reward.discount must lie in (0, 1]")


@dataclass
class SurrogateConfig:
    """Known action whose result defines the surrogate objective's target control points."""

    x_target: float = 0.3
    y_upper_change: float = 0.004
    y_lower_change: float = -0.004

    def validate(self) -> None:
        _require(0.0 < self.x_target < 1.0, "surrogate.x_target must lie in (0, 1)")


@dataclass
class RLConfig:
    warmup_episodes: int = 4
    warmup_steps: int = 64
    epochs: int = 75
    steps_per_epoch: int = 8
    batch_size: int = 256
    initial_batch_size: int = 64
    batch_switch: int = 1024
    buffer_capacity: int = 100_000
    recent_fraction: float = 0.25
    best_fraction: float = 0.25
    epsilon: float = 0.9
    noise_coeff: float = 1.0
    decay: float = 0.85
    decay_every: int = 3
    tau: float = 0.995
    policy_delay: int = 2
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_dt: float = 1.0
    target_noise: float = 0.2
    target_noise_clip: float = 0.5
    min_reward: float = 0.0
    early_stop: float = -0.05
    similar_noise: float = 0.1
    good_quantile: float = 0.9
    n_types: int = 1
    updates_per_step: int = 1

    def validate(self) -> None:
        for name in ("warmup_steps", "epochs", "steps_per_epoch", "batch_size", "initial_batch_size"):
            _require(getattr(self, name) >= 1, f"rl.{name} must be >= 1")
        _require(self.warmup_episodes >= 0, "rl.warmup_episodes must be >= 0")
        _require(self.buffer_capacity >= self.batch_size, "rl.buffer_capacity must hold a batch")
        _require(
            0.0 <= self.recent_fraction and 0.0 <= self.best_fraction
            and self.recent_fraction + self.best_fraction <= 1.0,
            "rl.recent_fraction + rl.best_fraction must lie in [0, 1]",
        )
        _require(0.0 <= self.epsilon <= 1.0, "rl.epsilon must lie in [0, 1]")
        _require(0.0 < self.decay <= 1.0, "rl.decay must lie in (0, 1]")
        _require(self.decay_every >= 1, "rl.decay_every must be >= 1")
        _require(0.0 <= self.tau <= 1.0, "rl.tau must lie in [0, 1]")
        _require(self.policy_delay >= 1, "rl.policy_delay must be >= 1")
        _require(self.ou_sigma >= 0.0, "rl.ou_sigma must be >= 0")
        _require(0.0 < self.good_quantile < 1.0, "rl.good_quantile must lie in (0, 1)")
        _require(self.n_types >= 1, "rl.n_types must be >= 1")
        _require(self.updates_per_step >= 0, "rl.updates_per_step must be >= 0")


@dataclass
class RunConfig:
    objective: str = "drag"
    seed: int = 0
    out: str = "runs"
    freestream: FreeStream = field(default_factory=lambda: FreeStream(0.85, 0.0))
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    dwr: DwrConfig = field(default_factory=DwrConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    rl: RLConfig = field(default_factory=RLConfig)

    def validate(self) -> None:
        _require(self.objective in OBJECTIVES, f"objective must be one of {OBJECTIVES}")
        for name in _SECTIONS:
            section = getattr(self, name)
            if hasattr(section, "validate"):
                section.validate()

    def dump(self) -> str:
        """Config echo; :func:`parse_config` reads it back to an equal config."""
        lines = [f"{name} = {_format(getattr(self, name))}" for name in _TOP_LEVEL]
        for section in _SECTIONS:
            values = getattr(self, section)
            for item in dataclasses.fields(values):
                lines.append(f"{section}.{item.name} = {_format(getattr(values, item.name))}")
        return "\n".join(lines) + "\n"


_TOP_LEVEL = ("objective", "seed", "out")
_SECTIONS = ("freestream", "geometry", "mesh", "solver", "dwr", "reward", "surrogate", "rl")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(f"{lo!r}:{hi!r}" for lo, hi in value)
    return str(value)


def _coerce(raw: str, kind: Any, key: str) -> Any:
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == Ranges:
            pairs = [chunk.split(":") for chunk in raw.split(",") if chunk.strip()]
            return tuple((float(lo), float(hi)) for lo, hi in pairs)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: '{raw}'") from exc
    raise ConfigError(f"unsupported field type for {key}")


def _apply(target: Any, name: str, raw: str, key: str) -> Any:
    hints = get_type_hints(type(target))
    if name not in hints:
        raise ConfigError(f"unknown key '{key}'")
    value = _coerce(raw, hints[name], key)
    try:
        return dataclasses.replace(target, **{name: value})
    except DomainError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Read ``section.key = value`` lines; ``#`` starts a comment.

    Raises:
        ConfigError: Malformed line, unknown key, bad value or out-of-range setting.
    """
    config = RunConfig()
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got '{content}'")
        key, raw = (part.strip() for part in content.split("=", 1))
        if "." not in key:
            config = _apply(config, key, raw, key)
            continue
        section, name = key.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"{source}:{number}: unknown section '{section}'")
        updated = _apply(getattr(config, section), name, raw, key)
        config = dataclasses.replace(config, **{section: updated})
    config.validate()
    return config


def load_config(path: PathLike) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    config = parse_config(text, str(path))
    logger.debug("loaded config %s", path)
    return config


def with_overrides(config: RunConfig, overrides: List[str]) -> RunConfig:
    """Apply ``key=value`` overrides on top of an existing config."""
    return parse_config(config.dump() + "\n".join(overrides) + "\n", "<overrides>")
