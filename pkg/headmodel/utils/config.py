"""
Configuration documents.

Every tunable lives in a dataclass owned by the module that consumes it.
This module turns JSON documents into those dataclasses and back, rejecting
keys the dataclass does not declare.
"""

import dataclasses
import json
import typing
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

from ..errors import ConfigError

T = TypeVar("T")


def _coerce(value: Any, annotation: Any, section: str, key: str) -> Any:
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if dataclasses.is_dataclass(annotation) and isinstance(value, dict):
        return config_from_dict(annotation, value, section=f"{section}.{key}")
    if origin is Union and type(None) in args:
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], section, key)
    if origin in (list, typing.List) and isinstance(value, (list, tuple)):
        inner = args[0] if args else Any
        return [_coerce(v, inner, section, key) for v in value]
    if origin in (tuple, typing.Tuple) and isinstance(value, (list, tuple)):
        if args and args[-1] is not Ellipsis and len(args) == len(value):
            return tuple(_coerce(v, a, section, key) for v, a in zip(value, args))
        return tuple(value)
    if annotation is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if annotation is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if annotation in (int, float, str, bool) and not isinstance(value, annotation):
        raise ConfigError(f"[{section}] '{key}' must be {annotation.__name__}, got {value!r}")
    return value


def config_from_dict(cls: Type[T], data: Dict[str, Any], section: str = "") -> T:
    """
    Build a config dataclass from a mapping.

    Args:
        cls: The dataclass type
        data: Mapping of field name to value; missing fields keep their defaults
        section: Name used in error messages

    Returns:
        An instance of ``cls``

    Raises:
        ConfigError: On an unknown key or a value of the wrong type
    """
    section = section or cls.__name__
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    kwargs = {key: _coerce(value, hints[key], section, key) for key, value in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def config_to_dict(config: Any) -> Dict[str, Any]:
    """Plain-JSON view of a config dataclass (tuples become lists)."""

    def plain(value):
        if isinstance(value, (list, tuple)):
            return [plain(v) for v in value]
        if isinstance(value, dict):
            return {k: plain(v) for k, v in value.items()}
        return value

    return plain(dataclasses.asdict(config))


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Config file {path} is not valid JSON: {exc}") from exc
