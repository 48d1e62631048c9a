"""
Reservoir Mask Workbench - Configuration
Experiment documents, environment overrides and logging setup
"""

import copy
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin, get_type_hints

from modules.bandit_env import BanditSpec
from modules.base import LOG_FORMAT, ConfigurationError, require, to_plain
from modules.masks import MaskSpec
from modules.agent import AgentSpec
from modules.reservoir import ReservoirSpec
from modules.trainer import RunConfig, TrainingOptions


ENV_PREFIX = "EPIC_WORKBENCH_"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
SECTIONS = ("bandit", "reservoir", "mask", "agent", "training")
RESOLVED_CONFIG_NAME = "resolved_config.json"


@dataclass
class SuiteOptions:
    """Suite-level settings"""
    out_dir: str = "results"
    workers: int = 1
    log_level: str = "INFO"
    plot_window: int = 100
    plot_title: Optional[str] = None

    def validate(self):
        require(self.workers >= 1, "suite.workers", "workers >= 1")
        require(self.log_level.upper() in LOG_LEVELS, "suite.log_level",
                f"log_level must be one of {', '.join(LOG_LEVELS)}")
        require(self.plot_window >= 1, "suite.plot_window", "plot_window >= 1")


def _coerce(tp, value: Any, key: str):
    """Check value against the annotation tp, converting enums and ints-for-floats"""
    origin = get_origin(tp)
    if origin is Union:
        options = [a for a in get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(options[0], value, key)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, key)
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(value)
        except ValueError:
            choices = ", ".join(str(m.value) for m in tp)
            raise ConfigurationError(f"Invalid value {value!r} for '{key}': expected one of {choices}",
                                     key=key, constraint=f"one of {choices}")
    if origin in (list, List):
        if not isinstance(value, list):
            raise _mismatch(key, "list", value)
        (item_type,) = get_args(tp) or (Any,)
        return [_coerce(item_type, v, f"{key}[{i}]") for i, v in enumerate(value)]
    if origin in (dict, Dict) or tp is dict:
        if not isinstance(value, dict):
            raise _mismatch(key, "object", value)
        return copy.deepcopy(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise _mismatch(key, "bool", value)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise _mismatch(key, "int", value)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _mismatch(key, "float", value)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise _mismatch(key, "string", value)
        return value
    return value


def _mismatch(key: str, expected: str, value: Any) -> ConfigurationError:
    return ConfigurationError(f"Type mismatch for '{key}': expected {expected}, got {type(value).__name__}",
                              key=key, constraint=f"type {expected}")


def _build(cls, data: Any, prefix: str):
    """Instantiate a dataclass from a JSON object, rejecting unknown keys"""
    if not isinstance(data, dict):
        raise _mismatch(prefix or cls.__name__, "object", data)
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        key = f"{prefix}.{unknown[0]}" if prefix else unknown[0]
        raise ConfigurationError(f"Unknown key '{key}'", key=key, constraint="known keys: " + ", ".join(sorted(names)))
    kwargs = {}
    for name, value in data.items():
        key = f"{prefix}.{name}" if prefix else name
        kwargs[name] = _coerce(hints[name], value, key)
    return cls(**kwargs)


def _merge(base: dict, overrides: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass
class ExperimentConfig:
    """
    One experiment document: shared run sections, suite options and an
    optional list of named variants overriding those sections
    """
    name: str = "bandit"
    bandit: BanditSpec = field(default_factory=BanditSpec)
    reservoir: ReservoirSpec = field(default_factory=ReservoirSpec)
    mask: MaskSpec = field(default_factory=MaskSpec)
    agent: AgentSpec = field(default_factory=AgentSpec)
    training: TrainingOptions = field(default_factory=TrainingOptions)
    suite: SuiteOptions = field(default_factory=SuiteOptions)
    variants: List[Dict[str, Any]] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        """
        Build and validate a config from a parsed document

        Raises:
            ConfigurationError: naming the offending key and constraint
        """
        config = _build(cls, data, "")
        config.validate()
        return config

    @classmethod
    def from_file(cls, config_path: Union[str, Path]) -> 'ExperimentConfig':
        """
        Load configuration from a JSON file; an empty file means all defaults

        Args:
            config_path: Path to configuration file

        Returns:
            ExperimentConfig instance
        """
        path = Path(config_path)
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {path}", key="path")
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            return cls.from_dict({})
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}:{e.lineno}: invalid JSON ({e.msg})", key="path",
                                     constraint="well-formed JSON") from e
        return cls.from_dict(data)

    @classmethod
    def from_env(cls) -> 'ExperimentConfig':
        """
        Default configuration with suite options taken from the environment

        Returns:
            ExperimentConfig instance
        """
        return cls().apply_env()

    def apply_env(self) -> 'ExperimentConfig':
        """Override suite options from EPIC_WORKBENCH_OUT_DIR, _WORKERS and _LOG_LEVEL"""
        out_dir = os.getenv(ENV_PREFIX + "OUT_DIR")
        workers = os.getenv(ENV_PREFIX + "WORKERS")
        log_level = os.getenv(ENV_PREFIX + "LOG_LEVEL")
        if out_dir:
            self.suite.out_dir = out_dir
        if workers:
            try:
                self.suite.workers = int(workers)
            except ValueError:
                raise ConfigurationError(f"{ENV_PREFIX}WORKERS must be an integer, got {workers!r}",
                                         key="suite.workers", constraint="integer")
        if log_level:
            self.suite.log_level = log_level.upper()
        self.suite.validate()
        return self

    def to_dict(self) -> dict:
        return to_plain(dataclasses.asdict(self))

    def save_to_file(self, config_path: Union[str, Path]):
        """
        Save the resolved configuration to a JSON file

        Args:
            config_path: Path to save configuration
        """
        path = Path(config_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    def _base_sections(self) -> dict:
        data = self.to_dict()
        return {key: data[key] for key in SECTIONS}

    def run_configs(self, seeds: Optional[List[int]] = None) -> List[RunConfig]:
        """
        Expand the document into one RunConfig per variant

        Args:
            seeds: Replace every variant's seed list

        Returns:
            List of RunConfig (a single one when there are no variants)
        """
        if not self.variants:
            configs = [RunConfig(self.name, copy.deepcopy(self.bandit), copy.deepcopy(self.reservoir),
                                 copy.deepcopy(self.mask), copy.deepcopy(self.agent),
                                 copy.deepcopy(self.training))]
        else:
            configs = []
            base = self._base_sections()
            for i, variant in enumerate(self.variants):
                key = f"variants[{i}]"
                if not isinstance(variant.get("name"), str):
                    raise ConfigurationError(f"'{key}.name' must be a string", key=f"{key}.name",
                                             constraint="variant name required")
                overrides = {k: v for k, v in variant.items() if k != "name"}
                for section in overrides:
                    if section not in SECTIONS:
                        raise ConfigurationError(f"Unknown key '{key}.{section}'", key=f"{key}.{section}",
                                                 constraint="variant sections: " + ", ".join(SECTIONS))
                merged = _merge(base, overrides)
                merged["name"] = variant["name"]
                configs.append(_build(RunConfig, merged, key))

        if seeds is not None:
            for config in configs:
                config.training.seeds = list(seeds)
        for config in configs:
            config.validate()
        return configs

    def validate(self):
        self.suite.validate()
        names = [v.get("name") for v in self.variants]
        require(len(names) == len(set(names)), "variants", "variant names must be unique")
        self.run_configs()


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """Fully resolved experiment config with defaults applied"""
    return ExperimentConfig.from_file(path)


def setup_logging(log_level: str = "INFO", log_file: Union[str, Path, None] = None):
    """
    Setup logging configuration

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
        log_file: Optional log file (the CLI uses workbench.log in the output directory)
    """
    handlers = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True
    )
