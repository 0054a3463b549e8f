"""A level scheme together with its light field, magnetic field and mass."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.constants import hbar, physical_constants, atomic_mass

from .fields import LaserBeam, MagneticFieldMap
from .scheme import LevelScheme

__all__ = ["MOTSystem", "ATOMIC_MASS_UNIT"]

MU_B = physical_constants["Bohr magneton"][0]
ATOMIC_MASS_UNIT = atomic_mass


@dataclass(frozen=True, eq=False)
class MOTSystem:
    scheme: LevelScheme
    beams: tuple
    field: MagneticFieldMap
    mass: float
    gravity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "beams", tuple(self.beams))
        if not self.mass > 0:
            raise ValueError("particle mass must be positive")
        for b in self.beams:
            if not isinstance(b, LaserBeam):
                raise TypeError("beams must be LaserBeam instances")
            self.scheme.link(b.target_link)  # raises on unknown link

    @cached_property
    def gamma(self) -> float:
        """Reference linewidth: the largest link decay rate."""
        return max(l.gamma_total for l in self.scheme.links)

    @cached_property
    def wavenumber(self) -> float:
        """Reference wavenumber (of the first link)."""
        return self.scheme.links[0].wavenumber

    @cached_property
    def arrays(self) -> "_Compiled":
        return _Compiled(self)

    def recoil_velocity(self) -> float:
        return hbar * self.wavenumber / self.mass

    def with_beams(self, beams) -> "MOTSystem":
        return MOTSystem(self.scheme, tuple(beams), self.field, self.mass, self.gravity)


class _Compiled:
    """Flat arrays for vectorized rate evaluation."""

    def __init__(self, system: MOTSystem):
        scheme = system.scheme
        beams = system.beams
        nb = len(beams)
        nu, nl = len(scheme.upper_index), len(scheme.lower_index)
        self.nb, self.nu, self.nl = nb, nu, nl
        self.kvec = np.array([b.k_vector for b in beams], dtype=float).reshape(nb, 3)
        self.delta0 = np.array([b.detuning for b in beams], dtype=float)
        self.sat = np.array([b.saturation for b in beams], dtype=float)
        self.eps = np.array([b.polarization for b in beams], dtype=complex).reshape(nb, 3)
        # c_{+1} - c_{-1} = axis . h for a unit polarization
        self.hel = np.real(1j * np.cross(self.eps, self.eps.conj())).reshape(nb, 3)
        self.gamma_b = np.array([scheme.link(b.target_link).gamma_total for b in beams], dtype=float)
        self.f = np.array([scheme.strengths[b.target_link] for b in beams], dtype=float).reshape(nb, nu, nl)
        hel = scheme.helicity
        self.hidx = np.where(np.abs(hel) <= 1, hel + 1, 0)
        self.f = np.where((np.abs(hel) <= 1)[None], self.f, 0.0)
        self.zeeman = scheme.zeeman * MU_B / hbar  # rad/s per tesla
        self.schedules = [b.schedule for b in beams]
        self.decay = np.array(scheme.decay, dtype=float)
        # rate ceiling per beam: (Gamma/2) s
        self.beam_ceiling = 0.5 * self.gamma_b * self.sat
