"""Run configuration: one tree covering every module, with YAML I/O.

A run is fully described by a RunConfig.  Files hold partial trees that
override the defaults; command lines override single leaves with dotted
keys (``train.lr_predictor=3e-4``).  Unknown keys are rejected at every
level, so typos fail loudly instead of silently training with defaults.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

import yaml

from .errors import InvalidInput
from .metrics import CRASH_DISTANCE, MISS_THRESHOLD
from .policy import TD3Config
from .training import TrainConfig


@dataclass
class DataConfig:
    """Where instances come from and how recordings become windows.

    With paths given, those CSVs are the corpus; otherwise recordings are
    synthesized per ``scenarios``.  ood_scenarios feeds the distribution-
    shift evaluation only.
    """

    paths: list = field(default_factory=list)
    scenarios: list = field(default_factory=lambda: ["roundabout"])
    ood_scenarios: list = field(default_factory=lambda: ["highway"])
    n_recordings: int = 4
    n_agents: int = 6
    n_frames: int = 450
    downsample: int = 5
    stride: int = 5
    obs_steps: int | None = None
    horizon_steps: int | None = None
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15
    split_seed: int = 0

    def __post_init__(self):
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise InvalidInput(f"split fractions must sum to 1, got {total}")
        for name in ("n_recordings", "n_agents", "n_frames", "downsample",
                     "stride"):
            if getattr(self, name) < 1:
                raise InvalidInput(f"{name} must be positive")


@dataclass
class MetricsConfig:
    miss_threshold: float = MISS_THRESHOLD
    crash_distance: float = CRASH_DISTANCE

    def __post_init__(self):
        if self.miss_threshold <= 0.0 or self.crash_distance <= 0.0:
            raise InvalidInput("metric thresholds must be positive")


@dataclass
class CsaConfig:
    alpha: float = 1.0
    beta: float = 1.0


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs"
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    td3: TD3Config = field(default_factory=TD3Config)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    csa: CsaConfig = field(default_factory=CsaConfig)


def config_from_dict(cls, data: dict):
    """Build a config dataclass, recursing into sections, rejecting typos."""
    if not isinstance(data, dict):
        raise InvalidInput(f"{cls.__name__} section must be a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise InvalidInput(
            f"unknown {cls.__name__} keys: {sorted(unknown)}"
        )
    kwargs = {}
    for name, value in data.items():
        ftype = hints[name]
        if dataclasses.is_dataclass(ftype):
            kwargs[name] = config_from_dict(ftype, value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidInput(f"bad {cls.__name__}: {exc}") from exc


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def _deep_merge(base: dict, override: dict) -> dict:
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value
    return base


def _parse_value(text: str):
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidInput(f"unparseable override value {text!r}") from exc
    if isinstance(value, str):
        # YAML leaves dotless exponents like 3e-4 as strings
        try:
            return int(value)
        except ValueError:
            pass
        try:
            return float(value)
        except ValueError:
            pass
    return value


def apply_overrides(tree: dict, overrides) -> dict:
    """Assign ``section.key=value`` items into a config dict in place.

    Values parse as YAML scalars, so ``true``, ``null``, ``3e-4``, and
    ``[a,b]`` all come out typed.
    """
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep or not key.strip():
            raise InvalidInput(f"override must look like key=value: {item!r}")
        parts = key.strip().split(".")
        node = tree
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise InvalidInput(f"unknown config key: {key.strip()!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise InvalidInput(f"unknown config key: {key.strip()!r}")
        node[parts[-1]] = _parse_value(text)
    return tree


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the YAML file, then dotted overrides; validated."""
    tree = config_to_dict(RunConfig())
    if path is not None:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh)
        except FileNotFoundError:
            raise InvalidInput(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise InvalidInput(f"unparseable config {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise InvalidInput(f"config root of {path} must be a mapping")
        _deep_merge(tree, loaded)
    apply_overrides(tree, overrides)
    return config_from_dict(RunConfig, tree)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)
