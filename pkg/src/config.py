"""
Run configuration loading
---------
Config files are flat `key = value` text with sectioned keys::

    seed = 0
    model.C = 16
    train.lr = 0.001
    data.dataset = ./bench

Files are parsed with `dotenv_values` (no interpolation, so no environment
lookups). Overrides of the form `key=value` are applied in order after the
file, the last one winning. A top-level `seed` feeds every section that does
not set its own.
"""
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from .errors import ConfigurationError, DatasetIOError
from .schemas import DataConfig, ModelConfig, RunConfig, TrainConfig

SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}
TOP_LEVEL_KEYS = ("output_dir", "threads", "seed")
NULL_VALUES = ("", "none", "null")


def parse_override(override: str) -> tuple:
    """`model.C=16` -> ("model.C", "16")"""
    if "=" not in override:
        raise ConfigurationError(f"Override {override!r} is not of the form key=value.")
    key, value = override.split("=", 1)
    return key.strip(), value.strip()


def read_config_file(path: Union[str, Path]) -> "OrderedDict[str, Optional[str]]":
    path = Path(path)
    if not path.is_file():
        raise DatasetIOError(f"Config file {path} not found.")
    return OrderedDict(dotenv_values(path, interpolate=False))


def _coerce(value: Optional[str]) -> Optional[str]:
    if value is None or value.strip().lower() in NULL_VALUES:
        return None
    return value.strip()


def merge_entries(entries: Dict[str, Optional[str]]) -> Dict[str, dict]:
    """
    Split flat entries into the nested mapping `RunConfig` expects.

    Args:
        entries (dict): flat `section.field` -> raw string value, in order.

    Returns:
        dict: {"model": {...}, "train": {...}, "data": {...}, top-level keys}.
    """
    merged: Dict[str, dict] = {name: {} for name in SECTIONS}
    for key, raw in entries.items():
        value = _coerce(raw)
        if key in TOP_LEVEL_KEYS:
            if value is None:
                raise ConfigurationError(f"{key} needs a value.")
            merged[key] = value
            continue
        section, _, field_name = key.partition(".")
        if section not in SECTIONS or not field_name:
            raise ConfigurationError(
                f"Unknown config key {key!r}. Keys are {', '.join(TOP_LEVEL_KEYS)} or model.*, train.*, data.*."
            )
        if field_name not in SECTIONS[section].__fields__:
            raise ConfigurationError(f"Unknown config key {key!r}.")
        if value is None:
            merged[section].pop(field_name, None)
        else:
            merged[section][field_name] = value

    if "seed" in merged:
        for name in SECTIONS:
            merged[name].setdefault("seed", merged["seed"])
    return merged


def build_run_config(entries: Dict[str, Optional[str]]) -> RunConfig:
    merged = merge_entries(entries)
    try:
        return RunConfig(**merged)
    except ValidationError as validation_error:
        raise ConfigurationError(f"Invalid configuration: {validation_error}") from validation_error


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Config file (optional) plus `key=value` overrides -> validated `RunConfig`.

    Raises:
        ConfigurationError: unknown key, malformed override or invalid value.
        DatasetIOError: the config file does not exist.
    """
    entries: "OrderedDict[str, Optional[str]]" = OrderedDict()
    if path is not None:
        entries.update(read_config_file(path))
    for override in overrides:
        key, value = parse_override(override)
        entries.pop(key, None)
        entries[key] = value
    return build_run_config(entries)


def dump_run_config(config: RunConfig) -> str:
    """Flat `key = value` text that `load_run_config` reads back to an equal config"""
    lines = [f"{key} = {getattr(config, key)}" for key in TOP_LEVEL_KEYS]
    for name in SECTIONS:
        for field_name, value in getattr(config, name).dict().items():
            lines.append(f"{name}.{field_name} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
