"""Experiment configuration: a sectioned key = value file format.

A config file fully determines one experiment matrix: environment, feature
library, sparse-regression settings, the training loop, learner
hyperparameters, and the seed list.  Unknown sections or keys are rejected,
and parse(serialize(config)) round-trips exactly.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dyna import DynaConfig
from .environments import ENVIRONMENT_NAMES
from .features import FeatureLibrary, library_from_name, parse_custom_features
from .model import DifferentiationConfig
from .regression import StlsqConfig
from .sac import SacConfig

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "save_config",
           "apply_overrides"]


class ConfigError(ValueError):
    """Invalid, unknown, or missing configuration content."""


@dataclass(frozen=True)
class ExperimentConfig:
    environment: str
    env_constants: tuple[tuple[str, float], ...] = ()
    library_builtin: str | None = None
    library_custom: tuple[str, ...] = ()
    stlsq: StlsqConfig = field(default_factory=StlsqConfig)
    differentiation: DifferentiationConfig = field(default_factory=DifferentiationConfig)
    dyna: DynaConfig = field(default_factory=DynaConfig)
    learner: SacConfig = field(default_factory=SacConfig)
    seeds: tuple[int, ...] = (0,)
    eval_episodes: int = 10
    output_dir: str = "results"

    def __post_init__(self):
        if self.environment not in ENVIRONMENT_NAMES:
            raise ConfigError(f"unknown environment {self.environment!r}; "
                              f"choices: {ENVIRONMENT_NAMES}")
        if self.library_builtin is None and not self.library_custom:
            object.__setattr__(self, "library_builtin", self.environment)
        if self.library_builtin is not None and self.library_custom:
            raise ConfigError("library: choose either builtin or custom, not both")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be at least 1")

    def build_library(self, state_dim: int, action_dim: int) -> FeatureLibrary:
        if self.library_custom:
            return parse_custom_features(list(self.library_custom), state_dim, action_dim)
        return library_from_name(self.library_builtin)


#: Spelling of a None value per optional key.
_NONE_TOKENS = {"model_epochs": "unbounded", "target_entropy": "auto"}


def _format_value(value, key: str = "") -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return _NONE_TOKENS.get(key, "none")
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_typed(text: str, annotation, key: str):
    text = text.strip()
    try:
        if annotation is bool:
            return _parse_bool(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if annotation is str:
            return text
        if annotation == "int | None":
            return None if text in ("unbounded", "none") else int(text)
        if annotation == "float | None":
            return None if text in ("auto", "none") else float(text)
        if annotation in ("tuple[int, ...]", "tuple[int, ...]"):
            return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    raise ConfigError(f"{key}: unsupported value type {annotation!r}")


#: (section, dataclass attribute on ExperimentConfig) pairs whose keys map
#: one-to-one onto the nested config dataclass fields.
_NESTED_SECTIONS = {
    "sindy": "stlsq",
    "differentiation": "differentiation",
    "dyna": "dyna",
    "learner": "learner",
}

_ANNOTATIONS = {
    "threshold": float, "ridge_alpha": float, "max_iterations": int,
    "normalize_columns": bool,
    "window": int, "poly_order": int, "include_boundary": bool,
    "n_seed_rollouts": int, "rollout_length": int, "model_epochs": "int | None",
    "exploration": str, "exploration_random_prob": float,
    "exploration_period": float, "exploration_amplitude": float,
    "target_return": float, "consecutive_passes": int, "eval_episodes": int,
    "max_real_episodes": int, "model_horizon": int,
    "model_episodes_per_epoch": int, "model_epoch_budget": int,
    "model_start": str, "warmup_steps": int, "update_every": int,
    "buffer_capacity": int, "refit_period": int,
    "hidden_sizes": "tuple[int, ...]", "learning_rate": float, "batch_size": int,
    "gamma": float, "tau": float, "init_temperature": float,
    "target_entropy": "float | None",
}


def save_config(config: ExperimentConfig, path: str | Path | None = None) -> str:
    """Serialize to the config file format; optionally write it to disk."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["environment"] = {"name": config.environment}
    if config.env_constants:
        parser["environment.constants"] = {
            k: _format_value(v) for k, v in config.env_constants}
    library: dict[str, str] = {}
    if config.library_custom:
        library["custom"] = "; ".join(config.library_custom)
    else:
        library["builtin"] = config.library_builtin
    parser["library"] = library
    for section, attribute in _NESTED_SECTIONS.items():
        nested = getattr(config, attribute)
        parser[section] = {f.name: _format_value(getattr(nested, f.name), f.name)
                           for f in fields(nested)}
    parser["run"] = {"seeds": _format_value(config.seeds),
                     "eval_episodes": str(config.eval_episodes),
                     "output_dir": config.output_dir}
    out = io.StringIO()
    parser.write(out)
    text = out.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _build_nested(cls, section: configparser.SectionProxy, section_name: str):
    known = {f.name: f for f in fields(cls)}
    values = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
        values[key] = _parse_typed(raw, _ANNOTATIONS[key], f"[{section_name}] {key}")
    try:
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(f"[{section_name}]: {exc}") from None


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from None

    known_sections = {"environment", "environment.constants", "library", "run",
                      *_NESTED_SECTIONS}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")

    if "environment" not in parser or "name" not in parser["environment"]:
        raise ConfigError("missing [environment] name")
    for key in parser["environment"]:
        if key != "name":
            raise ConfigError(f"unknown key {key!r} in section [environment] "
                              "(constants go in [environment.constants])")
    values: dict = {"environment": parser["environment"]["name"].strip()}

    if parser.has_section("environment.constants"):
        values["env_constants"] = tuple(
            (k, float(v)) for k, v in parser["environment.constants"].items())

    if parser.has_section("library"):
        section = parser["library"]
        for key in section:
            if key not in ("builtin", "custom"):
                raise ConfigError(f"unknown key {key!r} in section [library]")
        if "custom" in section:
            values["library_custom"] = tuple(
                expr.strip() for expr in section["custom"].split(";") if expr.strip())
            values["library_builtin"] = None
        elif "builtin" in section:
            values["library_builtin"] = section["builtin"].strip()

    classes = {"sindy": StlsqConfig, "differentiation": DifferentiationConfig,
               "dyna": DynaConfig, "learner": SacConfig}
    for section_name, attribute in _NESTED_SECTIONS.items():
        if parser.has_section(section_name):
            values[attribute] = _build_nested(
                classes[section_name], parser[section_name], section_name)

    if parser.has_section("run"):
        section = parser["run"]
        for key in section:
            if key not in ("seeds", "eval_episodes", "output_dir"):
                raise ConfigError(f"unknown key {key!r} in section [run]")
        if "seeds" in section:
            values["seeds"] = _parse_typed(section["seeds"], "tuple[int, ...]",
                                           "[run] seeds")
        if "eval_episodes" in section:
            values["eval_episodes"] = int(section["eval_episodes"])
        if "output_dir" in section:
            values["output_dir"] = section["output_dir"].strip()

    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def apply_overrides(config: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply command-line `section.key=value` overrides to a parsed config."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = dotted.rsplit(".", 1)
        if section in _NESTED_SECTIONS:
            attribute = _NESTED_SECTIONS[section]
            nested = getattr(config, attribute)
            if key not in {f.name for f in fields(nested)}:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            value = _parse_typed(raw, _ANNOTATIONS[key], dotted)
            try:
                config = replace(config, **{attribute: replace(nested, **{key: value})})
            except ValueError as exc:
                raise ConfigError(f"{dotted}: {exc}") from None
        elif section == "run" and key == "seeds":
            config = replace(config, seeds=_parse_typed(raw, "tuple[int, ...]", dotted))
        elif section == "run" and key == "eval_episodes":
            config = replace(config, eval_episodes=int(raw))
        elif section == "run" and key == "output_dir":
            config = replace(config, output_dir=raw.strip())
        elif section == "environment" and key == "name":
            config = replace(config, environment=raw.strip())
        elif section == "environment.constants":
            constants = dict(config.env_constants)
            constants[key] = float(raw)
            config = replace(config, env_constants=tuple(constants.items()))
        else:
            raise ConfigError(f"unknown override target {dotted!r}")
    return config
