"""YAML run configuration with unit-suffixed quantities and line-anchored errors.

Every mapping is loaded as :class:`Block`, which remembers the source line
of each key so validation errors point into the file.
"""
import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .amplitude import PumpSpec, Truncation
from .dispersion import BeamGeometry, CrystalSpec, SellmeierSet, crystal_from_sellmeier
from .errors import BiphotonError, ConfigError
from .lgmodes import ModeIndex
from .units import parse_quantity


class Block(dict):
    """dict with ``line`` (1-based) of the mapping and ``lines[key]``."""

    line = None
    lines = None

    def line_of(self, key):
        return (self.lines or {}).get(key, self.line)


class _Loader(yaml.SafeLoader):
    pass


def _construct_block(loader, node):
    loader.flatten_mapping(node)
    out = Block()
    out.line = node.start_mark.line + 1
    out.lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_block)


SCHEMA = {
    "crystal": {"length", "pump_wavelength", "signal_wavelength", "temperature", "poling_period",
                "phase_matching_tolerance", "sellmeier", "dispersion"},
    "crystal.sellmeier": {"pump", "signal", "idler"},
    "crystal.sellmeier.*": {"name", "A", "terms", "pole_terms", "D", "valid_range", "dn_dT",
                            "reference_temperature"},
    "crystal.dispersion": {"k_p", "k_s", "k_i", "ug_p", "ug_s", "ug_i", "G_p", "G_s", "G_i"},
    "geometry": {"w_p", "w_s", "w_i"},
    "pump": {"components", "pulse_duration", "normalize", "wavelength"},
    "pump.components.*": {"p", "l", "coefficient"},
    "truncation": {"p_max", "l_max"},
    "spectral": {"center", "half_span", "nodes", "engine_nodes", "filter"},
    "spectral.filter": {"bandwidth", "shape"},
    "amplitude": {"tuples", "signal_wavelengths", "detunings", "budget"},
    "spiral_bandwidth": {"p_s", "p_i", "l_max"},
    "schmidt": {"subspace", "convergence", "spectral"},
    "schmidt.convergence": {"p_max", "nodes"},
    "purity_sweep": {"bandwidths", "nodes", "shape"},
    "engineer": {"target", "target_csv", "oam_start", "threshold", "p_s", "p_i"},
    "oracle": {"tuples", "signal_wavelengths", "detunings", "radial_nodes", "angular_nodes", "family",
               "rtol", "max_refinements", "tolerance"},
    "gouy": {"triplets", "signal_wavelengths", "half_span", "nodes", "tolerance", "distinct"},
}
TOP_LEVEL = {"crystal", "geometry", "pump", "truncation", "spectral", "amplitude", "spiral_bandwidth",
             "schmidt", "purity_sweep", "engineer", "oracle", "gouy"}


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping", getattr(block, "line", None))
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where or 'top level'} "
                              f"(allowed: {', '.join(sorted(allowed))})", block.line_of(key))


def _require(block, key, where):
    if key not in block:
        raise ConfigError(f"{where}: missing required key {key!r}", block.line)
    return block[key]


def _int(block, key, where, default=None, minimum=None):
    if key not in block:
        if default is None:
            raise ConfigError(f"{where}: missing required key {key!r}", block.line)
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}", block.line_of(key))
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}.{key}: must be >= {minimum}", block.line_of(key))
    return v


def _qty(block, key, kind, where, default=None):
    if key not in block:
        if default is None:
            raise ConfigError(f"{where}: missing required key {key!r}", block.line)
        return default
    return parse_quantity(block[key], kind, block.line_of(key), f"{where}.{key}")


def _qty_list(block, key, kind, where):
    v = block.get(key)
    if not isinstance(v, list):
        raise ConfigError(f"{where}.{key}: expected a list", block.line_of(key))
    return [parse_quantity(x, kind, block.line_of(key), f"{where}.{key}") for x in v]


def _sellmeier(block, where):
    _check_keys(block, SCHEMA["crystal.sellmeier.*"], where)

    def pairs(key):
        v = block.get(key, [])
        if not isinstance(v, list) or any(not isinstance(p, list) or len(p) != 2 for p in v):
            raise ConfigError(f"{where}.{key}: expected a list of [coefficient, pole] pairs", block.line_of(key))
        return tuple((float(a), float(b)) for a, b in v)

    valid = (0.0, math.inf)
    if "valid_range" in block:
        vr = block["valid_range"]
        if not isinstance(vr, list) or len(vr) != 2:
            raise ConfigError(f"{where}.valid_range: expected [low, high]", block.line_of("valid_range"))
        valid = tuple(parse_quantity(x, "length", block.line_of("valid_range"), f"{where}.valid_range") * 1e6
                      for x in vr)
    try:
        return SellmeierSet(A=float(_require(block, "A", where)), terms=pairs("terms"),
                            pole_terms=pairs("pole_terms"), D=float(block.get("D", 0.0)),
                            valid_range_um=valid, dn_dT=float(block.get("dn_dT", 0.0)),
                            reference_temperature=float(block.get("reference_temperature", 25.0)),
                            name=str(block.get("name", "")))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", block.line) from None


def parse_crystal(block):
    _check_keys(block, SCHEMA["crystal"], "crystal")
    length = _qty(block, "length", "length", "crystal")
    lam_p = _qty(block, "pump_wavelength", "length", "crystal")
    tol = float(block.get("phase_matching_tolerance", 1.0))
    has_s, has_d = "sellmeier" in block, "dispersion" in block
    if has_s == has_d:
        raise ConfigError("crystal: give exactly one of 'sellmeier' or 'dispersion'", block.line)
    poling = block.get("poling_period", "auto" if has_s else None)
    if poling not in ("auto", None):
        poling = _qty(block, "poling_period", "length", "crystal")
    try:
        if has_s:
            sb = block["sellmeier"]
            _check_keys(sb, SCHEMA["crystal.sellmeier"], "crystal.sellmeier")
            models = [_sellmeier(_require(sb, k, "crystal.sellmeier"), f"crystal.sellmeier.{k}")
                      for k in ("pump", "signal", "idler")]
            lam_s = _qty(block, "signal_wavelength", "length", "crystal", default=2 * lam_p)
            temp = block.get("temperature")
            return crystal_from_sellmeier(length, lam_p, *models, signal_wavelength=lam_s,
                                          temperature=None if temp is None else float(temp),
                                          poling_period=poling, phase_matching_tolerance=tol)
        db = block["dispersion"]
        _check_keys(db, SCHEMA["crystal.dispersion"], "crystal.dispersion")
        w = "crystal.dispersion"
        return CrystalSpec(
            length=length,
            k_p=_qty(db, "k_p", "wavenumber", w), k_s=_qty(db, "k_s", "wavenumber", w),
            k_i=_qty(db, "k_i", "wavenumber", w),
            ug_p=_qty(db, "ug_p", "velocity", w), ug_s=_qty(db, "ug_s", "velocity", w),
            ug_i=_qty(db, "ug_i", "velocity", w),
            G_p=_qty(db, "G_p", "gvd", w, 0.0), G_s=_qty(db, "G_s", "gvd", w, 0.0),
            G_i=_qty(db, "G_i", "gvd", w, 0.0),
            poling_period=poling, phase_matching_tolerance=tol,
            omega_p=2 * math.pi * 299_792_458.0 / lam_p)
    except ConfigError:
        raise
    except BiphotonError as exc:
        raise ConfigError(f"crystal: {exc}", block.line) from None


def parse_geometry(block):
    _check_keys(block, SCHEMA["geometry"], "geometry")
    try:
        return BeamGeometry(*(_qty(block, k, "length", "geometry") for k in ("w_p", "w_s", "w_i")))
    except ConfigError:
        raise
    except BiphotonError as exc:
        raise ConfigError(f"geometry: {exc}", block.line) from None


def _coefficient(value, line):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, list) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", "").replace("i", "j"))
        except ValueError:
            pass
    raise ConfigError(f"pump coefficient {value!r}: use a number, [re, im] or '0.5+0.2j'", line)


def parse_pump(block, default_wavelength=None):
    _check_keys(block, SCHEMA["pump"], "pump")
    comps = _require(block, "components", "pump")
    if not isinstance(comps, list) or not comps:
        raise ConfigError("pump.components: expected a non-empty list", block.line_of("components"))
    parsed = []
    for c in comps:
        _check_keys(c, SCHEMA["pump.components.*"], "pump.components[]")
        mode = ModeIndex(_int(c, "p", "pump.components[]", 0, minimum=0), _int(c, "l", "pump.components[]"))
        parsed.append((mode, _coefficient(c.get("coefficient", 1.0), c.line_of("coefficient"))))
    t0 = _qty(block, "pulse_duration", "time", "pump") if "pulse_duration" in block else None
    lam = _qty(block, "wavelength", "length", "pump") if "wavelength" in block else default_wavelength
    try:
        if block.get("normalize", True):
            return PumpSpec.normalized(parsed, pulse_duration=t0, wavelength=lam)
        return PumpSpec(tuple(parsed), pulse_duration=t0, wavelength=lam)
    except BiphotonError as exc:
        raise ConfigError(f"pump: {exc}", block.line) from None


def dump_pump(pump):
    """Pump block in the config schema (YAML text)."""
    comps = [{"p": m.p, "l": m.l, "coefficient": [float(a.real), float(a.imag)]} for m, a in pump.components]
    block = {"components": comps, "normalize": False}
    if pump.pulse_duration is not None:
        block["pulse_duration"] = f"{pump.pulse_duration!r} s"
    if pump.wavelength is not None:
        block["wavelength"] = f"{pump.wavelength * 1e9!r} nm"
    return yaml.safe_dump({"pump": block}, sort_keys=False)


@dataclass
class RunConfig:
    """Validated run configuration; command blocks stay as raw :class:`Block`."""

    crystal: CrystalSpec
    geometry: BeamGeometry
    pump: Optional[PumpSpec]
    truncation: Truncation
    spectral: dict
    raw: Block
    sha256: str
    path: Optional[str] = None
    sections: dict = field(default_factory=dict)

    def section(self, name):
        b = self.raw.get(name)
        if b is None:
            b = Block()
            b.line, b.lines = self.raw.line, {}
        elif not isinstance(b, dict):
            raise ConfigError(f"{name}: expected a mapping", self.raw.line_of(name))
        _check_keys(b, SCHEMA[name], name)
        return b


def parse_spectral(block):
    _check_keys(block, SCHEMA["spectral"], "spectral")
    out = {
        "center": _qty(block, "center", "length", "spectral", 810e-9),
        "half_span": _qty(block, "half_span", "length", "spectral", 10e-9),
        "nodes": _int(block, "nodes", "spectral", 201, minimum=1),
        "engine_nodes": _int(block, "engine_nodes", "spectral", 48, minimum=8),
        "filter": None,
    }
    if "filter" in block:
        fb = block["filter"]
        _check_keys(fb, SCHEMA["spectral.filter"], "spectral.filter")
        shape = fb.get("shape", "rectangular")
        if shape not in ("rectangular", "gaussian"):
            raise ConfigError(f"spectral.filter.shape: unknown shape {shape!r}", fb.line_of("shape"))
        out["filter"] = (_qty(fb, "bandwidth", "length", "spectral.filter"), shape)
    return out


def loads(text, path=None):
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
    """
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"YAML syntax: {exc.problem}", line) from None
    if not isinstance(raw, Block):
        raise ConfigError("configuration must be a mapping", 1)
    _check_keys(raw, TOP_LEVEL, "")
    crystal = parse_crystal(_require(raw, "crystal", "top level"))
    geometry = parse_geometry(_require(raw, "geometry", "top level"))
    lam_p = parse_quantity(raw["crystal"]["pump_wavelength"], "length")
    pump = parse_pump(raw["pump"], lam_p) if "pump" in raw else None
    tb = raw.get("truncation", Block())
    if not isinstance(tb, Block):
        raise ConfigError("truncation: expected a mapping", raw.line_of("truncation"))
    _check_keys(tb, SCHEMA["truncation"], "truncation")
    truncation = Truncation(_int(tb, "p_max", "truncation", 10, minimum=0),
                            _int(tb, "l_max", "truncation", 10, minimum=0))
    sb = raw.get("spectral", Block())
    if not isinstance(sb, Block):
        raise ConfigError("spectral: expected a mapping", raw.line_of("spectral"))
    spectral = parse_spectral(sb)
    digest = hashlib.sha256(text.encode()).hexdigest()
    return RunConfig(crystal, geometry, pump, truncation, spectral, raw, digest, path)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, path)
