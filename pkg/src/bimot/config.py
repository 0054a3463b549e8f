"""Run configuration: JSON document schema, unit handling and presets.

A document describes one run or, through ``cases``, several runs sharing a
base. Each case is deep-merged over the base (mappings merge, everything
else is replaced). Laboratory units are accepted and normalized:

* detunings in units of the target line's Gamma (``-1``, ``"-1.0 Gamma"``,
  ``"-2 MHz"``, ``"3e6 rad/s"``)
* gradients in G/cm (``10``, ``"10 G/cm"``, ``"0.1 T/m"``)
* intensity in mW/cm^2, converted to saturation with
  ``I_s = pi h c Gamma / (3 lambda^3)``
* mass in atomic mass units; grid positions in mm (or Zeeman shifts in
  Gamma), velocities in m/s (or Doppler shifts in Gamma)

``normalize`` returns the fully explicit form; it is idempotent, and its
SHA-256 (without ``output`` and ``jobs``) is the provenance hash.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT, h as PLANCK

from .fields import (BeamComponent, LaserBeam, MagneticFieldMap, Schedule, mot_beams_1d,
                     mot_beams_3d, parse_polarization, restoring_handedness, GAUSS_PER_CM)
from .kmc import switched_system
from .scheme import PRESETS, LevelScheme, SchemeError, build_preset, scheme_from_dict, validate
from .sweep import AXES, doppler_velocity, zeeman_length
from .system import ATOMIC_MASS_UNIT, MOTSystem

__all__ = ["ConfigError", "RunConfig", "MODES", "normalize", "parse_config", "parse_cases",
           "serialize", "config_hash", "saturation_intensity", "load_document", "BUILTIN_CONFIGS",
           "builtin_config", "DEFAULT_MASS_U"]

MODES = ("steady-1d", "steady-3d-point", "kmc-1d", "kmc-3d", "sweep", "switched")
DEFAULT_MASS_U = 24.022
_HASH_EXCLUDE = ("output", "jobs")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def saturation_intensity(gamma: float, wavelength: float) -> float:
    """Two-level saturation intensity ``pi h c Gamma / (3 lambda^3)`` in W/m^2."""
    return math.pi * PLANCK * SPEED_OF_LIGHT * gamma / (3.0 * wavelength ** 3)


# -- quantities -----------------------------------------------------------

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


def _quantity(value, units: dict, default_unit: str, path: str) -> float:
    """Number in the canonical unit; ``units`` maps unit names to factors."""
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number")
    if isinstance(value, (int, float)):
        x, unit = float(value), default_unit
    elif isinstance(value, str):
        m = _QTY.match(value)
        if not m:
            raise ConfigError(path, f"cannot parse quantity {value!r}")
        x, unit = float(m.group(1)), m.group(2) or default_unit
    else:
        raise ConfigError(path, f"expected a number or a quantity string, got {type(value).__name__}")
    key = unit.replace(" ", "").lower()
    if key not in units:
        raise ConfigError(path, f"unknown unit {unit!r}; expected one of {sorted(units)}")
    out = x * units[key]
    if not math.isfinite(out):
        raise ConfigError(path, "value must be finite")
    return out


def _get(doc: dict, key: str, path: str, kind=None, default=...):
    if key not in doc:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
        return default
    val = doc[key]
    if kind is not None and not isinstance(val, kind) or isinstance(val, bool) and kind in (int, float, (int, float)):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return val


def _check_keys(doc: dict, allowed, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected a mapping")
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")


# -- normalization --------------------------------------------------------

def _merge(base, over):
    if isinstance(base, dict) and isinstance(over, dict):
        out = dict(base)
        for k, v in over.items():
            out[k] = _merge(base[k], v) if k in base else copy.deepcopy(v)
        return out
    return copy.deepcopy(over)


def _norm_scheme(doc, path):
    if isinstance(doc, str):
        doc = {"preset": doc}
    _check_keys(doc, ("preset", "custom", "g", "stimulated"), path)
    out = {"stimulated": _get(doc, "stimulated", path, str, "decay")}
    if out["stimulated"] not in ("decay", "clebsch"):
        raise ConfigError(f"{path}.stimulated", "must be 'decay' or 'clebsch'")
    if ("preset" in doc) == ("custom" in doc):
        raise ConfigError(path, "give exactly one of 'preset' or 'custom'")
    if "preset" in doc:
        name = _get(doc, "preset", path, str)
        if name not in PRESETS:
            raise ConfigError(f"{path}.preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        out["preset"] = name
    else:
        out["custom"] = copy.deepcopy(_get(doc, "custom", path, dict))
    g = _get(doc, "g", path, dict, {})
    out["g"] = {str(k): float(_quantity(v, {"": 1.0}, "", f"{path}.g.{k}")) for k, v in sorted(g.items())}
    return out


def _build_scheme(ns, path="scheme") -> LevelScheme:
    try:
        if "preset" in ns:
            return build_preset(ns["preset"], g_overrides=ns["g"] or None, stimulated=ns["stimulated"])
        doc = dict(ns["custom"])
        doc["stimulated"] = ns["stimulated"]
        scheme = scheme_from_dict(doc)
        if ns["g"]:
            scheme = scheme.with_g(**ns["g"])
    except SchemeError as exc:
        raise ConfigError(path, str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.custom", f"malformed custom scheme: {exc}") from exc
    problems = validate(scheme)
    if problems:
        raise ConfigError(path, "scheme is invalid: " + "; ".join(problems))
    return scheme


_GRAD_UNITS = {"g/cm": 1.0, "t/m": 100.0, "": 1.0}
_INTENSITY_UNITS = {"mw/cm2": 1.0, "mw/cm^2": 1.0, "w/m2": 0.1, "w/m^2": 0.1, "": 1.0}
_MASS_UNITS = {"u": 1.0, "amu": 1.0, "kg": 1.0 / ATOMIC_MASS_UNIT, "": 1.0}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "": 1.0}


def _detuning_gamma(value, gamma, path):
    units = {"gamma": 1.0, "": 1.0, "mhz": 2 * math.pi * 1e6 / gamma, "rad/s": 1.0 / gamma}
    return _quantity(value, units, "", path)


def _norm_light(d, scheme, path):
    """Shared fields of a layout component or an explicit beam."""
    link_name = _get(d, "link", path, str)
    try:
        link = scheme.link(link_name)
    except (KeyError, SchemeError, ValueError) as exc:
        raise ConfigError(f"{path}.link", f"unknown link {link_name!r}") from exc
    out = {"link": link_name}
    if "detuning_gamma" in d and "detuning" in d:
        raise ConfigError(path, "give either 'detuning' or 'detuning_gamma'")
    raw = d.get("detuning_gamma", d.get("detuning", 0.0))
    out["detuning_gamma"] = _detuning_gamma(raw, link.gamma_total, f"{path}.detuning")
    has_s, has_i = "saturation" in d, ("intensity_mW_cm2" in d or "intensity" in d)
    if has_s == has_i:
        raise ConfigError(path, "give exactly one of 'saturation' or 'intensity'")
    if has_s:
        s = _quantity(d["saturation"], {"": 1.0}, "", f"{path}.saturation")
        if s < 0:
            raise ConfigError(f"{path}.saturation", "must be >= 0")
        out["saturation"] = s
    else:
        raw = d.get("intensity_mW_cm2", d.get("intensity"))
        i = _quantity(raw, _INTENSITY_UNITS, "", f"{path}.intensity")
        if i < 0:
            raise ConfigError(f"{path}.intensity", "must be >= 0")
        out["intensity_mW_cm2"] = i
    if "schedule" in d:
        out["schedule"] = _norm_schedule(d["schedule"], link.gamma_total, f"{path}.schedule")
    if "name" in d:
        out["name"] = _get(d, "name", path, str)
    return out


def _saturation(light, scheme) -> float:
    if "saturation" in light:
        return light["saturation"]
    link = scheme.link(light["link"])
    return light["intensity_mW_cm2"] * 10.0 / saturation_intensity(link.gamma_total, link.wavelength)


def _norm_schedule(d, gamma, path):
    _check_keys(d, ("period", "period_gamma_inv", "start", "stop"), path)
    if "period_gamma_inv" in d:
        period = _quantity(d["period_gamma_inv"], {"": 1.0}, "", f"{path}.period_gamma_inv")
    else:
        period = _quantity(_get(d, "period", path), _TIME_UNITS, "s", f"{path}.period") * gamma
    out = {"period_gamma_inv": period, "start": float(d.get("start", 0.0)), "stop": float(d.get("stop", 0.5))}
    try:
        Schedule(period, out["start"], out["stop"])
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    return out


def _norm_handedness(value, path):
    if value in ("mot", "anti-mot"):
        return value
    if value in (1, -1) and not isinstance(value, bool):
        return int(value)
    raise ConfigError(path, "handedness must be 'mot', 'anti-mot', +1 or -1")


_DIRS = {"+x": (1, 0, 0), "-x": (-1, 0, 0), "+y": (0, 1, 0), "-y": (0, -1, 0),
         "+z": (0, 0, 1), "-z": (0, 0, -1)}


def _norm_direction(value, path):
    if isinstance(value, str):
        if value not in _DIRS:
            raise ConfigError(path, f"unknown direction {value!r}")
        return value
    if isinstance(value, dict):
        _check_keys(value, ("theta_deg", "phi_deg"), path)
        th = math.radians(float(_get(value, "theta_deg", path, (int, float))))
        ph = math.radians(float(value.get("phi_deg", 0.0)))
        vec = [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
    else:
        try:
            vec = [float(x) for x in value]
        except (TypeError, ValueError) as exc:
            raise ConfigError(path, "direction must be '+z'-style, angles or a 3-vector") from exc
    if len(vec) != 3 or not math.isclose(math.fsum(x * x for x in vec), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ConfigError(path, "direction must be a unit 3-vector")
    return vec


def _norm_grid_axis(value, units, default_unit, path):
    if isinstance(value, (list, tuple)):
        if len(value) != 3:
            raise ConfigError(path, "expected [min, max, n]")
        value = {"min": value[0], "max": value[1], "n": value[2]}
    _check_keys(value, ("min", "max", "n", "unit"), path)
    unit = _get(value, "unit", path, str, default_unit)
    if unit not in units:
        raise ConfigError(f"{path}.unit", f"expected one of {units}")
    lo, hi = float(_get(value, "min", path, (int, float))), float(_get(value, "max", path, (int, float)))
    n = _get(value, "n", path, int)
    if n < 1 or not hi > lo and n > 1:
        raise ConfigError(path, "grid needs n >= 1 and max > min")
    return {"min": lo, "max": hi, "n": n, "unit": unit}


def _default_grid_doc(molecular, which):
    if which == "z":
        return {"min": -10.0, "max": 10.0, "n": 81, "unit": "mm"} if molecular else \
            {"min": -3.0, "max": 3.0, "n": 81, "unit": "zeeman_gamma"}
    return {"min": -15.0, "max": 15.0, "n": 81, "unit": "m/s"} if molecular else \
        {"min": -3.0, "max": 3.0, "n": 81, "unit": "doppler_gamma"}


def normalize(doc: dict, path: str = "") -> dict:
    """Explicit, unit-normalized form of a single-case document."""
    _check_keys(doc, ("name", "description", "scheme", "mass_u", "mass", "field", "layout", "beams",
                      "mode", "method", "grid", "point", "kmc", "switched", "gravity", "output", "jobs"), path)
    out: dict[str, Any] = {"name": _get(doc, "name", path, str, "run")}
    if "description" in doc:
        out["description"] = _get(doc, "description", path, str)
    out["scheme"] = _norm_scheme(_get(doc, "scheme", path), "scheme")
    scheme = _build_scheme(out["scheme"])
    molecular = scheme.name.startswith("c2minus")

    if "mass_u" in doc and "mass" in doc:
        raise ConfigError("mass", "give either 'mass' or 'mass_u'")
    mass = _quantity(doc.get("mass_u", doc.get("mass", DEFAULT_MASS_U)), _MASS_UNITS, "u", "mass")
    if not mass > 0:
        raise ConfigError("mass", "must be positive")
    out["mass_u"] = mass

    fdoc = _get(doc, "field", path, dict)
    _check_keys(fdoc, ("kind", "gradient_G_per_cm", "gradient"), "field")
    kind = _get(fdoc, "kind", "field", str)
    if kind not in ("linear_1d", "quadrupole_3d"):
        raise ConfigError("field.kind", "must be 'linear_1d' or 'quadrupole_3d'")
    graw = fdoc.get("gradient_G_per_cm", fdoc.get("gradient"))
    if graw is None:
        raise ConfigError("field.gradient", "required field is missing")
    out["field"] = {"kind": kind, "gradient_G_per_cm": _quantity(graw, _GRAD_UNITS, "G/cm", "field.gradient")}

    if ("layout" in doc) == ("beams" in doc):
        raise ConfigError(path, "give exactly one of 'layout' or 'beams'")
    if "layout" in doc:
        ldoc = doc["layout"]
        _check_keys(ldoc, ("kind", "components"), "layout")
        lk = _get(ldoc, "kind", "layout", str)
        if lk not in ("mot_1d", "mot_3d"):
            raise ConfigError("layout.kind", "must be 'mot_1d' or 'mot_3d'")
        comps = []
        for n, cdoc in enumerate(_get(ldoc, "components", "layout", list)):
            p = f"layout.components[{n}]"
            _check_keys(cdoc, ("link", "detuning", "detuning_gamma", "saturation", "intensity",
                               "intensity_mW_cm2", "handedness", "schedule", "name"), p)
            comp = _norm_light(cdoc, scheme, p)
            comp["handedness"] = _norm_handedness(cdoc.get("handedness", "mot"), f"{p}.handedness")
            comps.append(comp)
        if not comps:
            raise ConfigError("layout.components", "at least one component is required")
        out["layout"] = {"kind": lk, "components": comps}
    else:
        beams = []
        for n, bdoc in enumerate(_get(doc, "beams", path, list)):
            p = f"beams[{n}]"
            _check_keys(bdoc, ("link", "detuning", "detuning_gamma", "saturation", "intensity",
                               "intensity_mW_cm2", "direction", "polarization", "schedule", "name"), p)
            beam = _norm_light(bdoc, scheme, p)
            beam["direction"] = _norm_direction(_get(bdoc, "direction", p), f"{p}.direction")
            pol = _get(bdoc, "polarization", p)
            try:
                parse_polarization(pol)
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{p}.polarization", str(exc)) from exc
            beam["polarization"] = copy.deepcopy(pol)
            beams.append(beam)
        out["beams"] = beams

    mode = _get(doc, "mode", path, str, "steady-1d")
    if mode not in MODES:
        raise ConfigError("mode", f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    out["mode"] = mode
    method = _get(doc, "method", path, str, "kmc" if mode.startswith("kmc") or mode == "switched" else "steady")
    if method not in ("steady", "kmc"):
        raise ConfigError("method", "must be 'steady' or 'kmc'")
    if mode != "sweep" and method != ("steady" if mode.startswith("steady") else "kmc"):
        raise ConfigError("method", f"mode {mode!r} fixes the method")
    out["method"] = method

    if mode == "steady-3d-point":
        pdoc = _get(doc, "point", path, dict, {})
        _check_keys(pdoc, ("r_mm", "v_m_s"), "point")
        out["point"] = {k: [float(x) for x in pdoc.get(k, [0.0, 0.0, 0.0])] for k in ("r_mm", "v_m_s")}
        if any(len(v) != 3 for v in out["point"].values()):
            raise ConfigError("point", "r_mm and v_m_s must be 3-vectors")
    else:
        gdoc = _get(doc, "grid", path, dict, {})
        _check_keys(gdoc, ("axis", "z", "v"), "grid")
        axis = _get(gdoc, "axis", "grid", str, "z_at_v0")
        if axis not in AXES:
            raise ConfigError("grid.axis", f"must be one of {AXES}")
        g = {"axis": axis}
        if axis in ("z_at_v0", "full_grid"):
            g["z"] = _norm_grid_axis(gdoc.get("z", _default_grid_doc(molecular, "z")),
                                     ("mm", "m", "zeeman_gamma"), "mm", "grid.z")
        if axis in ("v_at_z0", "full_grid"):
            g["v"] = _norm_grid_axis(gdoc.get("v", _default_grid_doc(molecular, "v")),
                                     ("m/s", "doppler_gamma"), "m/s", "grid.v")
        out["grid"] = g

    if method == "kmc":
        kdoc = _get(doc, "kmc", path, dict, {})
        _check_keys(kdoc, ("n_traj", "T", "seed", "relax"), "kmc")
        n_traj = _get(kdoc, "n_traj", "kmc", int, 1000)
        if n_traj < 1:
            raise ConfigError("kmc.n_traj", "must be >= 1")
        T = kdoc.get("T", "auto")
        if T != "auto":
            T = _quantity(T, _TIME_UNITS, "s", "kmc.T")
            if not T > 0:
                raise ConfigError("kmc.T", "must be positive")
        seed = _get(kdoc, "seed", "kmc", int, 0)
        if seed < 0:
            raise ConfigError("kmc.seed", "must be a non-negative integer")
        relax = _get(kdoc, "relax", "kmc", str, "propagate")
        if relax not in ("propagate", "simulate"):
            raise ConfigError("kmc.relax", "must be 'propagate' or 'simulate'")
        out["kmc"] = {"n_traj": n_traj, "T": T, "seed": seed, "relax": relax}

    if mode == "switched":
        sdoc = _get(doc, "switched", path, dict)
        _check_keys(sdoc, ("period_gamma_inv", "set_a", "set_b", "preserve_average"), "switched")
        period = _quantity(_get(sdoc, "period_gamma_inv", "switched"), {"": 1.0}, "", "switched.period_gamma_inv")
        if not period > 0:
            raise ConfigError("switched.period_gamma_inv", "must be positive")
        count = len(out["layout"]["components"]) if "layout" in out else len(out["beams"])
        sets = {}
        for key in ("set_a", "set_b"):
            idx = _get(sdoc, key, "switched", list)
            if not all(isinstance(i, int) and 0 <= i < count for i in idx):
                raise ConfigError(f"switched.{key}", f"indices must lie in [0, {count})")
            sets[key] = sorted(idx)
        if set(sets["set_a"]) & set(sets["set_b"]):
            raise ConfigError("switched", "set_a and set_b must be disjoint")
        out["switched"] = {"period_gamma_inv": period, **sets,
                           "preserve_average": bool(sdoc.get("preserve_average", True))}
    elif "switched" in doc:
        raise ConfigError("switched", "only valid in mode 'switched'")

    out["gravity"] = bool(_get(doc, "gravity", path, bool, False))
    out["output"] = _get(doc, "output", path, (str, type(None)), None)
    jobs = _get(doc, "jobs", path, int, 1)
    if jobs < 1:
        raise ConfigError("jobs", "must be >= 1")
    out["jobs"] = jobs
    if mode.endswith("-1d"):
        _require_axial(out)
    return out


def _require_axial(ndoc):
    if "layout" in ndoc:
        if ndoc["layout"]["kind"] != "mot_1d":
            raise ConfigError("layout.kind", f"mode {ndoc['mode']!r} needs a 'mot_1d' layout")
        return
    for n, b in enumerate(ndoc["beams"]):
        d = b["direction"]
        if isinstance(d, str) and d[1] == "z":
            continue
        if not isinstance(d, str) and abs(abs(d[2]) - 1.0) < 1e-12:
            continue
        raise ConfigError(f"beams[{n}].direction", f"mode {ndoc['mode']!r} needs beams along +/-z")


# -- resolved configuration -------------------------------------------------

@dataclass(frozen=True, eq=False)
class RunConfig:
    """A normalized single-case document and the objects built from it."""
    document: dict
    system: MOTSystem
    hash: str

    @property
    def name(self) -> str:
        return self.document["name"]

    @property
    def mode(self) -> str:
        return self.document["mode"]

    @property
    def method(self) -> str:
        return self.document["method"]

    @property
    def jobs(self) -> int:
        return self.document["jobs"]

    @property
    def output(self) -> Optional[str]:
        return self.document["output"]

    @property
    def kmc(self) -> dict:
        return self.document.get("kmc", {})

    @property
    def seed(self) -> Optional[int]:
        return self.kmc.get("seed")

    @property
    def axis(self) -> Optional[str]:
        return self.document.get("grid", {}).get("axis")

    def grid(self):
        """Grid coordinates in SI (m, m/s): one array or ``(z, v)``."""
        g = self.document["grid"]
        z = _grid_values(g["z"], self.system) if "z" in g else None
        v = _grid_values(g["v"], self.system) if "v" in g else None
        if g["axis"] == "full_grid":
            return z, v
        return z if g["axis"] == "z_at_v0" else v

    def point(self):
        p = self.document["point"]
        return np.array(p["r_mm"]) * 1e-3, np.array(p["v_m_s"], dtype=float)

    def with_overrides(self, **changes) -> "RunConfig":
        doc = copy.deepcopy(self.document)
        for key, value in changes.items():
            if value is None:
                continue
            if key == "seed":
                doc.setdefault("kmc", {})["seed"] = value
            else:
                doc[key] = value
        return parse_config(doc)


def _grid_values(g, system):
    x = np.linspace(g["min"], g["max"], g["n"])
    scale = {"mm": 1e-3, "m": 1.0, "m/s": 1.0}.get(g["unit"])
    if scale is None:
        scale = zeeman_length(system) if g["unit"] == "zeeman_gamma" else doppler_velocity(system)
    return x * scale


def _build_system(ndoc) -> MOTSystem:
    scheme = _build_scheme(ndoc["scheme"])
    k = scheme.links[0].wavenumber
    field = MagneticFieldMap(ndoc["field"]["kind"], ndoc["field"]["gradient_G_per_cm"] * GAUSS_PER_CM)

    def schedule(light):
        sd = light.get("schedule")
        if sd is None:
            return None
        gamma = scheme.link(light["link"]).gamma_total
        return Schedule(sd["period_gamma_inv"] / gamma, sd["start"], sd["stop"])

    groups = []  # beam indices per component (for switching)
    if "layout" in ndoc:
        lay = ndoc["layout"]
        comps = []
        for n, c in enumerate(lay["components"]):
            h = c["handedness"]
            if isinstance(h, str):
                h = restoring_handedness(scheme, c["link"]) * (1 if h == "mot" else -1)
            gamma = scheme.link(c["link"]).gamma_total
            comps.append(BeamComponent(c["link"], c["detuning_gamma"] * gamma, _saturation(c, scheme), h,
                                       schedule(c), c.get("name", f"c{n}")))
        maker = mot_beams_1d if lay["kind"] == "mot_1d" else mot_beams_3d
        beams = maker(comps, k)
        per = 2 if lay["kind"] == "mot_1d" else 6
        groups = [list(range(n * per, (n + 1) * per)) for n in range(len(comps))]
    else:
        beams = []
        for n, b in enumerate(ndoc["beams"]):
            d = b["direction"]
            direction = np.array(_DIRS[d] if isinstance(d, str) else d, dtype=float)
            link = scheme.link(b["link"])
            lk = link.wavenumber
            try:
                beams.append(LaserBeam(direction, lk, b["detuning_gamma"] * link.gamma_total,
                                       _saturation(b, scheme), parse_polarization(b["polarization"]),
                                       b["link"], schedule(b), b.get("name", f"b{n}")))
            except ValueError as exc:
                raise ConfigError(f"beams[{n}]", str(exc)) from exc
            groups.append([n])
    system = MOTSystem(scheme, beams, field, ndoc["mass_u"] * ATOMIC_MASS_UNIT, ndoc["gravity"])
    if ndoc["mode"] == "switched":
        sw = ndoc["switched"]
        set_a = [i for c in sw["set_a"] for i in groups[c]]
        set_b = [i for c in sw["set_b"] for i in groups[c]]
        system = switched_system(system, set_a, set_b, sw["period_gamma_inv"] / system.gamma,
                                 sw["preserve_average"])
    return system


def config_hash(ndoc: dict) -> str:
    body = {k: v for k, v in ndoc.items() if k not in _HASH_EXCLUDE}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def parse_config(doc: dict) -> RunConfig:
    """Resolve a single-case document. Raises :class:`ConfigError`."""
    if isinstance(doc, dict) and "cases" in doc:
        cases = parse_cases(doc)
        if len(cases) != 1:
            raise ConfigError("cases", f"document defines {len(cases)} cases; use parse_cases")
        return cases[0]
    ndoc = normalize(doc)
    return RunConfig(ndoc, _build_system(ndoc), config_hash(ndoc))


def parse_cases(doc: dict) -> list[RunConfig]:
    """All runs defined by a document (one per entry of ``cases``)."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config document must be a mapping")
    if "cases" not in doc:
        return [parse_config(doc)]
    base = {k: v for k, v in doc.items() if k != "cases"}
    cases = doc["cases"]
    if not isinstance(cases, list) or not cases:
        raise ConfigError("cases", "expected a nonempty list")
    out, names = [], set()
    for n, case in enumerate(cases):
        if not isinstance(case, dict) or "name" not in case:
            raise ConfigError(f"cases[{n}]", "each case needs a 'name'")
        merged = _merge(base, case)
        if "name" in base:
            merged["name"] = f"{base['name']}_{case['name']}"
        try:
            cfg = parse_config(merged)
        except ConfigError as exc:
            raise ConfigError(f"cases[{n}].{exc.path}" if exc.path else f"cases[{n}]",
                              str(exc).split(": ", 1)[-1]) from exc
        if cfg.name in names:
            raise ConfigError(f"cases[{n}].name", f"duplicate case name {cfg.name!r}")
        names.add(cfg.name)
        out.append(cfg)
    return out


def serialize(cfg: RunConfig) -> str:
    return json.dumps(cfg.document, sort_keys=True, indent=2, allow_nan=False)


def load_document(source: str) -> dict:
    """A config document from a built-in name, a JSON file, or a CSV file
    written by this package (its embedded config line)."""
    if source in BUILTIN_CONFIGS:
        return builtin_config(source)
    try:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {source!r}: {exc.strerror}") from exc
    if text.startswith("#"):
        for line in text.splitlines():
            if line.startswith("# config: "):
                return json.loads(line[len("# config: "):])
        raise ConfigError("", f"{source!r} has no embedded config line")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


# -- built-in documents -----------------------------------------------------

def _comp(link, det, hand, **light):
    d = {"link": link, "detuning_gamma": det, "handedness": hand}
    d.update(light or {"saturation": 1.0})
    return d


_TRAP = {"name": "trap", "grid": {"axis": "z_at_v0"}}
_COOL = {"name": "cool", "grid": {"axis": "v_at_z0"}}


def _lambda_base(name, comps, **extra):
    doc = {
        "name": name,
        "scheme": {"preset": "lambda_1to0"},
        "mass_u": DEFAULT_MASS_U,
        "field": {"kind": "linear_1d", "gradient_G_per_cm": 10.0},
        "layout": {"kind": "mot_1d", "components": comps},
        "mode": "steady-1d",
    }
    doc.update(extra)
    return doc


_BICHROMATIC = [_comp("main", -1.0, "mot"), _comp("main", 0.0, "anti-mot")]
_REFERENCE = {"scheme": {"preset": "type1_0to1"}, "layout": {"kind": "mot_1d", "components": [_comp("main", -1.0, "mot")]}}


def _fig3():
    cases = []
    for tag, d2 in (("d2_minus", -1.0), ("d2_zero", 0.0), ("d2_plus", 1.0)):
        comps = [_comp("main", -1.0, "mot"), _comp("main", d2, "anti-mot")]
        for axis in (_TRAP, _COOL):
            cases.append({"name": f"{axis['name']}_{tag}", "grid": axis["grid"],
                          "layout": {"kind": "mot_1d", "components": comps}})
    return _lambda_base("fig3", _BICHROMATIC, cases=cases)


def _fig6():
    light = {"intensity_mW_cm2": 1.8}
    resonant = [_comp("x12", 0.0, "anti-mot", **light), _comp("x32", 0.0, "anti-mot", **light)]
    red = {"i": [_comp("x12", -1.0, "mot", **light)], "ii": [_comp("x32", -1.0, "mot", **light)],
           "iii": [_comp("x12", -1.0, "mot", **light), _comp("x32", -1.0, "mot", **light)]}
    cases = []
    for tag in ("i", "ii", "iii"):
        for axis in (_TRAP, _COOL):
            cases.append({"name": f"{axis['name']}_{tag}", "grid": axis["grid"],
                          "scheme": {"preset": f"c2minus_{tag}"},
                          "layout": {"kind": "mot_1d", "components": resonant + red[tag]}})
    return {"name": "fig6", "scheme": {"preset": "c2minus_iii"}, "mass_u": DEFAULT_MASS_U,
            "field": {"kind": "linear_1d", "gradient_G_per_cm": 10.0},
            "layout": {"kind": "mot_1d", "components": resonant}, "mode": "steady-1d", "cases": cases}


def _kmc_grid(n=10):
    return {"axis": "z_at_v0", "z": {"min": -3.0, "max": 3.0, "n": n, "unit": "zeeman_gamma"}}


BUILTIN_CONFIGS = {
    "fig2": lambda: _lambda_base("fig2", _BICHROMATIC, cases=[
        {**_TRAP, "name": "trap_bichromatic"}, {**_COOL, "name": "cool_bichromatic"},
        {"name": "trap_reference", "grid": _TRAP["grid"], **_REFERENCE},
        {"name": "cool_reference", "grid": _COOL["grid"], **_REFERENCE}]),
    "fig3": _fig3,
    "fig4": lambda: _lambda_base("fig4", _BICHROMATIC, scheme={"preset": "j_half_to_half"}, cases=[
        {"name": f"{axis['name']}_{tag}", "grid": axis["grid"],
         "layout": {"kind": "mot_1d", "components": comps}}
        for tag, comps in (("monochromatic", _BICHROMATIC[:1]), ("bichromatic", _BICHROMATIC))
        for axis in (_TRAP, _COOL)]),
    "fig6": _fig6,
    "fig2_kmc": lambda: _lambda_base("fig2_kmc", _BICHROMATIC, mode="kmc-1d", grid=_kmc_grid(),
                                     kmc={"n_traj": 1000, "T": "auto", "seed": 1}),
    "fig2_kmc_3d": lambda: _lambda_base(
        "fig2_kmc_3d", _BICHROMATIC, mode="kmc-3d", scheme={"preset": "lambda_1to0_with_M0"},
        field={"kind": "quadrupole_3d", "gradient_G_per_cm": 10.0},
        layout={"kind": "mot_3d", "components": _BICHROMATIC}, grid=_kmc_grid(),
        kmc={"n_traj": 2000, "T": "auto", "seed": 1}),
    "switched": lambda: _lambda_base("switched", _BICHROMATIC, mode="switched", grid=_kmc_grid(),
                                     kmc={"n_traj": 1000, "T": "auto", "seed": 1},
                                     switched={"period_gamma_inv": 0.01, "set_a": [0], "set_b": [1]}),
}


def builtin_config(name: str) -> dict:
    try:
        return copy.deepcopy(BUILTIN_CONFIGS[name]())
    except KeyError:
        raise ConfigError("", f"unknown built-in config {name!r}; choose from {', '.join(BUILTIN_CONFIGS)}") from None
