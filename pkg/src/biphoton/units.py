"""Parsing of unit-suffixed quantities such as ``"15 mm"`` or ``"1.4e8 m/s"`` into SI floats."""
import re

from .errors import ConfigError

_LENGTH = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9, "pm": 1e-12, "cm": 1e-2}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12, "fs": 1e-15}

UNITS = {
    "length": _LENGTH,
    "time": _TIME,
    "wavenumber": {"rad/m": 1.0, "1/m": 1.0, "rad/mm": 1e3, "1/mm": 1e3, "rad/um": 1e6, "1/um": 1e6},
    "velocity": {"m/s": 1.0, "mm/ps": 1e9, "um/ps": 1e6},
    "gvd": {"s^2/m": 1.0, "s2/m": 1.0, "fs^2/mm": 1e-27, "fs^2/m": 1e-30, "ps^2/m": 1e-24},
    "angular_frequency": {"rad/s": 1.0, "1/s": 1.0, "rad/ps": 1e12},
    "dimensionless": {"": 1.0},
}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PATTERN = re.compile(rf"^\s*({_NUMBER})\s*(\S*)\s*$")


def parse_quantity(value, kind, line=None, name="value"):
    """SI value of ``value`` of physical ``kind``.

    Strings must carry a unit listed in :data:`UNITS` for the kind. Bare
    numbers are accepted only for dimensionless quantities.

    Raises
    ------
    ConfigError
        Unknown unit, wrong kind, or a missing unit.
    """
    table = UNITS[kind]
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a {kind} quantity, got {value!r}", line)
    if isinstance(value, (int, float)):
        if kind == "dimensionless":
            return float(value)
        raise ConfigError(f"{name}: {kind} needs a unit, e.g. '{value} {next(iter(table))}'", line)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a {kind} quantity, got {value!r}", line)
    m = _PATTERN.match(value)
    if not m:
        raise ConfigError(f"{name}: cannot parse quantity {value!r}", line)
    number, unit = float(m.group(1)), m.group(2)
    if unit not in table:
        allowed = ", ".join(u for u in table if u) or "none"
        raise ConfigError(f"{name}: unit {unit!r} is not a {kind} unit (allowed: {allowed})", line)
    return number * table[unit]
