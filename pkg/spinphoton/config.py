"""
Unit-bearing YAML documents.

Every physical quantity in a config is written as ``"<number> <unit>"``. Frequencies are
linear (``GHz``, ``MHz``, ``kHz``, ``Hz``) and converted to angular frequency in rad/ns;
times are in ``ns`` (``ps`` and ``us`` accepted); angles in ``rad`` or ``deg``. A bare
number is read in the field's default unit.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping
from typing import Any, Literal

import yaml

from spinphoton.errors import ConfigError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

Kind = Literal["frequency", "time", "angle"]

FREQUENCY_UNITS = {"Hz": 1e-9, "kHz": 1e-6, "MHz": 1e-3, "GHz": 1.0}
TIME_UNITS = {"ps": 1e-3, "ns": 1.0, "us": 1e3}
ANGLE_UNITS = {"rad": 1.0, "deg": math.pi / 180.0}

_UNITS: dict[str, dict[str, float]] = {
    "frequency": FREQUENCY_UNITS,
    "time": TIME_UNITS,
    "angle": ANGLE_UNITS,
}


def _scale(kind: Kind, unit: str) -> float:
    factor = _UNITS[kind][unit]
    if kind == "frequency":
        return 2.0 * math.pi * factor
    return factor


def parse_quantity(value: Any, kind: Kind, default_unit: str, path: str) -> float:
    """
    Convert a config quantity to internal units.

    :param value: A number, or a string ``"<number> <unit>"``.
    :param kind: The physical kind of the field.
    :param default_unit: Unit applied to bare numbers.
    :param path: Dotted field path, used in error messages.
    :returns: The value in rad/ns, ns or rad.
    """
    if isinstance(value, bool):
        msg = f"{path}: expected a {kind}, got a boolean"
        raise ConfigError(msg)
    if isinstance(value, (int, float)):
        number, unit = float(value), default_unit
    elif isinstance(value, str):
        parts = value.split()
        if len(parts) == 1:
            number_text, unit = parts[0], default_unit
        elif len(parts) == 2:  # noqa: PLR2004
            number_text, unit = parts
        else:
            msg = f"{path}: cannot parse {kind} {value!r}"
            raise ConfigError(msg)
        try:
            number = float(number_text)
        except ValueError:
            msg = f"{path}: cannot parse {kind} {value!r}"
            raise ConfigError(msg) from None
    else:
        msg = f"{path}: expected a {kind}, got {type(value).__name__}"
        raise ConfigError(msg)

    if unit not in _UNITS[kind]:
        allowed = ", ".join(_UNITS[kind])
        msg = f"{path}: unknown {kind} unit {unit!r} (allowed: {allowed})"
        raise ConfigError(msg)
    if not math.isfinite(number):
        msg = f"{path}: {kind} must be finite"
        raise ConfigError(msg)
    return number * _scale(kind, unit)


def format_quantity(value: float, kind: Kind, unit: str) -> str:
    """
    Inverse of :func:`parse_quantity`, using the shortest round-tripping float repr.
    """
    return f"{value / _scale(kind, unit)!r} {unit}"


def parse_document(text: str, source: str = "<config>") -> dict[str, Any]:
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        msg = f"{source}: {e}"
        raise ConfigError(msg) from e
    if document is None:
        document = {}
    if not isinstance(document, dict):
        msg = f"{source}: expected a mapping at the top level"
        raise ConfigError(msg)
    version = document.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        msg = f"{source}: unsupported format_version {version!r}"
        raise ConfigError(msg)
    return document


def dump_document(document: Mapping[str, Any]) -> str:
    return yaml.safe_dump(
        {"format_version": FORMAT_VERSION, **document}, sort_keys=False, allow_unicode=True
    )


def check_keys(
    table: Any, path: str, *, required: Iterable[str] = (), optional: Iterable[str] = ()
) -> Mapping[str, Any]:
    """
    Reject non-tables, missing keys and unknown keys.

    :returns: The table itself, for chaining.
    """
    if not isinstance(table, Mapping):
        msg = f"{path}: expected a mapping"
        raise ConfigError(msg)
    required = tuple(required)
    allowed = set(required) | set(optional)
    for key in required:
        if key not in table:
            msg = f"{path}.{key}: missing required field"
            raise ConfigError(msg)
    unknown = sorted(set(table) - allowed)
    if unknown:
        msg = f"{path}: unknown key(s) {', '.join(unknown)}"
        raise ConfigError(msg)
    return table


def require_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        msg = f"{path}: expected a string"
        raise ConfigError(msg)
    return value


def require_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        msg = f"{path}: expected an integer"
        raise ConfigError(msg)
    return value


def require_number(value: Any, path: str) -> float:
    # YAML 1.1 resolves exponents without a dot or sign (1e-10) to strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        msg = f"{path}: expected a number"
        raise ConfigError(msg)
    return float(value)


def _unit_of(value: str) -> str | None:
    parts = value.split()
    if len(parts) == 2:  # noqa: PLR2004
        try:
            float(parts[0])
        except ValueError:
            return None
        return parts[1]
    return None


def _coerce(existing: Any, raw: str, path: str) -> Any:
    raw = raw.strip()
    if isinstance(existing, bool):
        if raw.lower() not in ("true", "false"):
            msg = f"{path}: expected true or false, got {raw!r}"
            raise ConfigError(msg)
        return raw.lower() == "true"
    if isinstance(existing, int):
        try:
            return int(raw)
        except ValueError:
            msg = f"{path}: expected an integer, got {raw!r}"
            raise ConfigError(msg) from None
    if isinstance(existing, float):
        try:
            return float(raw)
        except ValueError:
            msg = f"{path}: expected a number, got {raw!r}"
            raise ConfigError(msg) from None
    if isinstance(existing, list):
        return [item.strip() for item in raw.split(",") if item.strip()]
    if isinstance(existing, str):
        unit = _unit_of(existing)
        if unit is not None and len(raw.split()) == 1:
            try:
                float(raw)
            except ValueError:
                msg = f"{path}: expected a number with optional unit, got {raw!r}"
                raise ConfigError(msg) from None
            return f"{raw} {unit}"
        return raw
    msg = f"{path}: cannot override a {type(existing).__name__}"
    raise ConfigError(msg)


def locate(document: Any, path: str) -> tuple[dict[str, Any] | list[Any], str | int]:
    """
    Container and key of the existing value addressed by a dotted path.

    :raises ConfigError: If any part of the path does not exist.
    """
    keys = path.split(".")
    node: Any = document
    for depth, key in enumerate(keys):
        here = ".".join(keys[: depth + 1])
        last = depth == len(keys) - 1
        if isinstance(node, list):
            try:
                index = int(key)
                node[index]  # noqa: B018
            except (ValueError, IndexError):
                msg = f"{here}: no such list entry"
                raise ConfigError(msg) from None
            if last:
                return node, index
            node = node[index]
        elif isinstance(node, dict):
            if key not in node:
                msg = f"{here}: no such config key"
                raise ConfigError(msg)
            if last:
                return node, key
            node = node[key]
        else:
            msg = f"{here}: cannot descend into a {type(node).__name__}"
            raise ConfigError(msg)
    msg = f"{path}: empty config path"
    raise ConfigError(msg)


def apply_overrides(document: dict[str, Any], overrides: Mapping[str, str]) -> dict[str, Any]:
    """
    Set values addressed by dotted paths, e.g. ``spins.A.Gbar`` or ``hops.0.kappa``.

    Paths must reference keys that already exist in the document. Unit-bearing strings
    keep their unit when the override is a bare number.

    :param document: Parsed document; modified in place.
    :param overrides: Mapping of dotted path to raw value text.
    :returns: The modified document.
    """
    for path, raw in overrides.items():
        node, key = locate(document, path)
        node[key] = _coerce(node[key], raw, path)  # type: ignore[index]
        log.info("Override %s = %s", path, raw)
    return document


def parse_override(text: str) -> tuple[str, str]:
    """
    Split a ``key=value`` command-line override.
    """
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        msg = f"override {text!r} is not of the form key=value"
        raise ConfigError(msg)
    return key.strip(), value.strip()


def require_mapping(value: Any, path: str) -> Mapping[str, Any]:
    """
    Accept a table whose keys are free-form labels.
    """
    if not isinstance(value, Mapping):
        msg = f"{path}: expected a mapping"
        raise ConfigError(msg)
    return value
