"""TOML run configuration with strict keys and ``key=value`` overrides."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


def load_file(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_value(text: str):
    """Parse an override value as a TOML literal, falling back to a bare string.

    Comma-separated values without brackets become lists: ``0.5,1.0``.
    """
    text = text.strip()
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        pass
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    return text


def parse_override(item: str) -> tuple:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, value = item.split("=", 1)
    key = key.strip().replace("-", "_")
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    return key, parse_value(value)


def merge(defaults: Mapping, file_values: Mapping, overrides: Iterable[tuple]) -> dict:
    """Defaults <- config file <- overrides, rejecting keys not in ``defaults``."""
    out = dict(defaults)
    for source, items in (("config file", file_values.items()), ("override", overrides)):
        for key, value in items:
            if key not in defaults:
                raise ConfigError(f"unknown key {key!r} in {source}")
            out[key] = _coerce(key, value, defaults[key])
    return out


def _coerce(key, value, default):
    if isinstance(default, (list, tuple)) and not isinstance(value, (list, tuple)):
        value = [value]
    if isinstance(default, bool):
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        if not isinstance(value, bool):
            raise ConfigError(f"{key!r} expects a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key!r} expects an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key!r} expects a number")
        return float(value)
    return value
