"""Typed INI-style config loading for the CLI.

A config file holds one section per subcommand (dashes and underscores are
interchangeable); keys map 1:1 onto the experiment config dataclass fields
and are parsed according to the field's annotated type. Lists are
comma-separated. Unknown keys are errors so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from pathlib import Path

__all__ = ["ConfigError", "load_config"]


class ConfigError(Exception):
    """Bad config file: missing, unparsable, wrong section, or wrong types."""


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_scalar(ftype, raw: str, key: str):
    raw = raw.strip()
    if ftype is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if ftype is str:
        return raw
    raise ConfigError(f"{key}: unsupported config field type {ftype!r}")


def _parse_value(ftype, raw: str, key: str):
    origin = typing.get_origin(ftype)
    if origin is tuple:
        elem = typing.get_args(ftype)[0] if typing.get_args(ftype) else str
        if elem is Ellipsis:
            elem = str
        items = [s for s in (part.strip() for part in raw.split(",")) if s]
        return tuple(_parse_scalar(elem, s, key) for s in items)
    return _parse_scalar(ftype, raw, key)


def load_config(path, section: str, config_cls):
    """Build config_cls from the file's [section], defaulting missing fields."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(p, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"{p}: {exc}") from None

    names = {section, section.replace("-", "_"), section.replace("_", "-")}
    found = next((s for s in parser.sections() if s in names), None)
    if found is None:
        raise ConfigError(f"{p}: missing section [{section}] "
                          f"(have {parser.sections() or 'none'})")

    hints = typing.get_type_hints(config_cls)
    fields = {f.name: hints[f.name] for f in dataclasses.fields(config_cls)}
    overrides = {}
    for key, raw in parser.items(found):
        if key not in fields:
            raise ConfigError(f"{p}: unknown key {key!r} in [{found}] "
                              f"(valid: {sorted(fields)})")
        overrides[key] = _parse_value(fields[key], raw, key)
    try:
        return config_cls(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: {exc}") from None
