"""Laser beams, switching schedules and magnetic field maps.

Polarizations are complex unit 3-vectors. The helicity basis about a unit
axis ``a`` is ``e_+1 = -(x' + i y')/sqrt(2)``, ``e_0 = a``,
``e_-1 = (x' - i y')/sqrt(2)`` with ``(x', y', a)`` right handed, and the
component ``c_p`` of a beam is ``|e_p^* . eps|^2``. A component ``p`` drives
transitions with ``M' = M'' + p`` when the sublevels are quantized along
``a``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.constants import physical_constants

__all__ = [
    "LaserBeam", "Schedule", "MagneticFieldMap", "helicity_vector", "polarization_components",
    "parse_polarization", "SIGMA_PLUS", "SIGMA_MINUS", "PI_LINEAR", "quantization_axis",
    "mot_beams_1d", "mot_beams_3d", "restoring_handedness", "BeamComponent", "GAUSS_PER_CM",
]

MU_B = physical_constants["Bohr magneton"][0]
GAUSS_PER_CM = 1e-4 / 1e-2  # T/m
LAB_Z = np.array([0.0, 0.0, 1.0])


def _transverse_basis(axis):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    # pick the lab vector least aligned with the axis
    ref = np.eye(3)[np.argmin(np.abs(axis))]
    x = ref - axis * np.dot(ref, axis)
    x /= np.linalg.norm(x)
    y = np.cross(axis, x)
    return x, y, axis


def helicity_vector(p: int, axis=LAB_Z) -> np.ndarray:
    """Spherical unit vector ``e_p`` about ``axis``."""
    x, y, a = _transverse_basis(axis)
    if p == 1:
        return -(x + 1j * y) / math.sqrt(2)
    if p == -1:
        return (x - 1j * y) / math.sqrt(2)
    if p == 0:
        return a.astype(complex)
    raise ValueError(f"helicity must be -1, 0 or +1, got {p!r}")


SIGMA_PLUS = helicity_vector(+1)
SIGMA_MINUS = helicity_vector(-1)
PI_LINEAR = helicity_vector(0)

_AXES = {"x": 0, "y": 1, "z": 2}
_POL_RE = re.compile(r"^(sigma\+|sigma-|sigma_plus|sigma_minus|pi|pi_linear)(?:_along_([+-]?)([xyz]))?$")


def parse_polarization(spec) -> np.ndarray:
    """Polarization vector from a name or an explicit vector.

    Names are ``sigma+``, ``sigma-``, ``pi`` (relative to lab +z) or
    ``sigma+_along_-z``, ``pi_along_+x``... relative to a signed lab axis.
    Explicit vectors may be a 3-sequence of numbers/complex or a mapping
    ``{"re": [...], "im": [...]}``.
    """
    if isinstance(spec, str):
        m = _POL_RE.match(spec.strip().lower())
        if not m:
            raise ValueError(f"unknown polarization {spec!r}")
        kind, sign, ax = m.groups()
        axis = LAB_Z.copy()
        if ax:
            axis = np.zeros(3)
            axis[_AXES[ax]] = -1.0 if sign == "-" else 1.0
        p = {"sigma+": 1, "sigma_plus": 1, "sigma-": -1, "sigma_minus": -1, "pi": 0, "pi_linear": 0}[kind]
        return helicity_vector(p, axis)
    if isinstance(spec, dict):
        vec = np.asarray(spec["re"], dtype=float) + 1j * np.asarray(spec.get("im", [0, 0, 0]), dtype=float)
    else:
        vec = np.asarray(spec, dtype=complex)
    if vec.shape != (3,):
        raise ValueError("polarization vector must have 3 components")
    return vec


@dataclass(frozen=True)
class Schedule:
    """Square-wave gate: the beam is on while ``(t/period) mod 1`` lies in
    ``[start, stop)``."""
    period: float
    start: float = 0.0
    stop: float = 0.5

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("schedule period must be positive")
        if not 0.0 <= self.start < self.stop <= 1.0:
            raise ValueError("schedule window must satisfy 0 <= start < stop <= 1")

    @property
    def duty(self) -> float:
        return self.stop - self.start

    def active(self, t):
        phase = np.mod(np.asarray(t, dtype=float) / self.period, 1.0)
        return (phase >= self.start) & (phase < self.stop)


@dataclass(frozen=True, eq=False)
class LaserBeam:
    """One monochromatic travelling wave.

    ``detuning`` (rad/s) is relative to the ``target_link`` resonance at zero
    field and velocity.
    """
    direction: np.ndarray
    wavenumber: float
    detuning: float
    saturation: float
    polarization: np.ndarray
    target_link: str
    schedule: Optional[Schedule] = None
    name: str = ""

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(d)
        if not np.isfinite(norm) or abs(norm - 1) > 1e-9:
            raise ValueError(f"beam direction must be a unit vector, got {d}")
        eps = np.asarray(self.polarization, dtype=complex)
        if abs(np.linalg.norm(eps) - 1) > 1e-9:
            raise ValueError("polarization must be unit norm")
        if abs(np.vdot(d, eps)) > 1e-9:
            raise ValueError("polarization must be transverse to the beam direction")
        if self.saturation < 0:
            raise ValueError("saturation must be >= 0")
        d = d / norm
        eps = eps / np.linalg.norm(eps)
        d.setflags(write=False)
        eps.setflags(write=False)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "polarization", eps)

    @property
    def k_vector(self) -> np.ndarray:
        return self.wavenumber * self.direction

    def active(self, t) -> bool:
        return True if self.schedule is None else bool(self.schedule.active(t))

    def replace(self, **changes) -> "LaserBeam":
        kw = dict(direction=self.direction, wavenumber=self.wavenumber, detuning=self.detuning,
                  saturation=self.saturation, polarization=self.polarization,
                  target_link=self.target_link, schedule=self.schedule, name=self.name)
        kw.update(changes)
        return LaserBeam(**kw)


def polarization_components(beam, axis) -> tuple[float, float, float]:
    """Weights ``(c_-1, c_0, c_+1)`` of a beam's polarization about ``axis``."""
    eps = beam.polarization if isinstance(beam, LaserBeam) else np.asarray(beam, dtype=complex)
    out = []
    for p in (-1, 0, 1):
        out.append(float(abs(np.vdot(helicity_vector(p, axis), eps)) ** 2))
    return tuple(out)


@dataclass(frozen=True)
class MagneticFieldMap:
    """Linear 1D field ``(0, 0, b' z)`` or quadrupole ``b' (-x/2, -y/2, z)``;
    ``gradient`` is the axial gradient in T/m."""
    kind: str
    gradient: float

    def __post_init__(self):
        if self.kind not in ("linear_1d", "quadrupole_3d"):
            raise ValueError(f"unknown field kind {self.kind!r}")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        B = np.zeros_like(r)
        if self.kind == "linear_1d":
            B[..., 2] = self.gradient * r[..., 2]
        else:
            B[..., 0] = -0.5 * self.gradient * r[..., 0]
            B[..., 1] = -0.5 * self.gradient * r[..., 1]
            B[..., 2] = self.gradient * r[..., 2]
        return B


def quantization_axis(B) -> np.ndarray:
    """Unit vector along ``B``; lab +z where the field vanishes."""
    B = np.asarray(B, dtype=float)
    mag = np.sqrt(B[..., 0] ** 2 + B[..., 1] ** 2 + B[..., 2] ** 2)
    safe = np.where(mag > 0, mag, 1.0)
    axis = B / safe[..., None]
    return np.where((mag > 0)[..., None], axis, LAB_Z)


# -- standard MOT layouts -------------------------------------------------

@dataclass(frozen=True)
class BeamComponent:
    """One frequency component of a MOT layout, applied to every arm.

    ``handedness`` is the helicity of each beam about its own propagation
    direction on the axial (z) arms; radial arms get the opposite value.
    """
    target_link: str
    detuning: float
    saturation: float
    handedness: int
    schedule: Optional[Schedule] = None
    name: str = ""


def restoring_handedness(scheme, link_name: str) -> int:
    """Axial handedness that makes a single-frequency MOT on this link push
    towards the field zero (for red detuning).

    Decided by the sign of the Zeeman coefficient ``g'M' - g''M''`` on the
    link's sigma+ lines.
    """
    f = scheme.strengths[link_name]
    mask = (scheme.helicity == 1) & (f > 0)
    coeff = float(np.sum(scheme.zeeman[mask] * f[mask]))
    return -1 if coeff > 0 else 1


def _arm(direction, h, wavenumber, comp, name):
    direction = np.asarray(direction, dtype=float)
    return LaserBeam(direction, wavenumber, comp.detuning, comp.saturation,
                     helicity_vector(h, direction), comp.target_link, comp.schedule, name)


def mot_beams_1d(components: Sequence[BeamComponent], wavenumber: float) -> list[LaserBeam]:
    """Counter-propagating pair along z for every component."""
    beams = []
    for n, c in enumerate(components):
        tag = c.name or f"c{n}"
        beams.append(_arm([0, 0, 1], c.handedness, wavenumber, c, f"{tag}+z"))
        beams.append(_arm([0, 0, -1], c.handedness, wavenumber, c, f"{tag}-z"))
    return beams


def mot_beams_3d(components: Sequence[BeamComponent], wavenumber: float) -> list[LaserBeam]:
    """Six-beam layout; radial arms carry the opposite helicity because the
    quadrupole gradient is reversed (and halved) along x and y."""
    beams = []
    for n, c in enumerate(components):
        tag = c.name or f"c{n}"
        for axis, label in ((0, "x"), (1, "y"), (2, "z")):
            h = c.handedness if axis == 2 else -c.handedness
            for sign in (1, -1):
                d = np.zeros(3)
                d[axis] = sign
                beams.append(_arm(d, h, wavenumber, c, f"{tag}{'+' if sign > 0 else '-'}{label}"))
    return beams
