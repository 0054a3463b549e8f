"""Stimulated and spontaneous rates at a phase-space point.

For a beam L driving upper sublevel i and lower sublevel j::

    delta = delta0 - k.v + mu_B |B| (g' M' - g'' M'') / hbar
    gamma = (Gamma/2) s c_p f_ij / (1 + 4 delta^2 / Gamma^2)

where ``c_p`` is the beam's helicity weight for ``p = M' - M''`` about the
local field direction and ``f_ij`` the line strength. Sublevels are
quantized along B (lab +z at field zeros) and relabelled adiabatically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

from .fields import LaserBeam, polarization_components, quantization_axis
from .scheme import LevelScheme
from .system import MU_B, MOTSystem

__all__ = ["RateMatrix", "detuning", "excitation_rate", "lorentzian_rate", "rate_matrix",
           "stimulated_rates", "active_mask"]


def lorentzian_rate(gamma: float, s: float, c_p: float, f: float, delta: float) -> float:
    """``(Gamma/2) s c_p f / (1 + 4 delta^2/Gamma^2)``."""
    return 0.5 * gamma * s * c_p * f / (1.0 + 4.0 * delta ** 2 / gamma ** 2)


def _pair(scheme: LevelScheme, beam: LaserBeam, i: int, j: int):
    link = scheme.link(beam.target_link)
    si, sj = scheme.sublevels[i], scheme.sublevels[j]
    if not (si.upper and si.level_id == link.upper and not sj.upper and sj.level_id == link.lower):
        raise ValueError(f"beam targets link {link.name!r}, which does not contain "
                         f"{si.label} -> {sj.label}")
    a = int(np.flatnonzero(scheme.upper_index == i)[0])
    b = int(np.flatnonzero(scheme.lower_index == j)[0])
    return link, si, sj, a, b


def detuning(beam: LaserBeam, scheme: LevelScheme, i: int, j: int, v, B) -> float:
    """Detuning (rad/s) of ``beam`` from the ``i <-> j`` line; ``i`` is the
    upper and ``j`` the lower sublevel (indices into ``scheme.sublevels``)."""
    _, si, sj, _, _ = _pair(scheme, beam, i, j)
    Bmag = float(np.linalg.norm(B))
    shift = MU_B * Bmag * (si.g * float(si.M) - sj.g * float(sj.M)) / hbar
    return beam.detuning - float(np.dot(beam.k_vector, v)) + shift


def excitation_rate(beam: LaserBeam, scheme: LevelScheme, i: int, j: int, v, B) -> float:
    """Rate of excitation (and of stimulated emission) on ``i <-> j``."""
    link, si, sj, a, b = _pair(scheme, beam, i, j)
    p = int((si.M - sj.M).twice // 2)
    if abs(p) > 1 or not (si.M - sj.M).is_integer:
        return 0.0
    c = polarization_components(beam, quantization_axis(B))[p + 1]
    f = scheme.strengths[link.name][a, b]
    return lorentzian_rate(link.gamma_total, beam.saturation, c, f,
                           detuning(beam, scheme, i, j, v, B))


def active_mask(system: MOTSystem, t) -> np.ndarray:
    """Boolean ``(..., n_beams)`` array of beams that are on at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    cols = [np.ones(t.shape, dtype=bool) if s is None else s.active(t) for s in system.arrays.schedules]
    if not cols:
        return np.zeros(t.shape + (0,), dtype=bool)
    return np.stack(cols, axis=-1)


def stimulated_rates(system: MOTSystem, r, v, t=0.0) -> np.ndarray:
    """Vectorized stimulated rates, shape ``(N, n_beams, n_upper, n_lower)``.

    ``r`` and ``v`` are ``(N, 3)``; ``t`` is a scalar or ``(N,)``. Dot
    products are written out component-wise so each row's result does not
    depend on the batch it is evaluated in.
    """
    c = system.arrays
    r = np.atleast_2d(np.asarray(r, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    N = r.shape[0]
    B = system.field(r)
    Bmag = np.sqrt(B[:, 0] * B[:, 0] + B[:, 1] * B[:, 1] + B[:, 2] * B[:, 2])
    ax = quantization_axis(B)

    eps = c.eps
    proj = ax[:, None, 0] * eps[None, :, 0] + ax[:, None, 1] * eps[None, :, 1] + ax[:, None, 2] * eps[None, :, 2]
    c0 = proj.real * proj.real + proj.imag * proj.imag
    ah = ax[:, None, 0] * c.hel[None, :, 0] + ax[:, None, 1] * c.hel[None, :, 1] + ax[:, None, 2] * c.hel[None, :, 2]
    cm = np.maximum(0.5 * (1.0 - c0 - ah), 0.0)
    cplus = np.maximum(0.5 * (1.0 - c0 + ah), 0.0)
    comps = np.stack([cm, c0, cplus], axis=-1)            # (N, nb, 3)
    cp = comps[:, :, c.hidx]                               # (N, nb, nu, nl)

    kv = v[:, None, 0] * c.kvec[None, :, 0] + v[:, None, 1] * c.kvec[None, :, 1] + v[:, None, 2] * c.kvec[None, :, 2]
    delta = (c.delta0[None, :, None, None] - kv[:, :, None, None]
             + Bmag[:, None, None, None] * c.zeeman[None, None, :, :])
    g = c.gamma_b[None, :, None, None]
    rates = 0.5 * g * c.sat[None, :, None, None] * cp * c.f[None] / (1.0 + 4.0 * delta * delta / (g * g))

    if any(s is not None for s in c.schedules):
        t = np.broadcast_to(np.asarray(t, dtype=float), (N,))
        on = active_mask(system, t)
        rates = rates * on[:, :, None, None]
    return rates


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Rates at one phase-space point.

    ``stim[L, a, b]`` couples upper sublevel ``scheme.upper_index[a]`` and
    lower sublevel ``scheme.lower_index[b]`` through beam ``L``;
    ``spont[a, b]`` is the matching spontaneous rate.
    """
    system: MOTSystem
    stim: np.ndarray
    spont: np.ndarray
    r: np.ndarray
    v: np.ndarray
    t: float

    @property
    def scheme(self) -> LevelScheme:
        return self.system.scheme

    @property
    def gamma(self) -> float:
        return self.system.gamma

    def total_stim(self) -> np.ndarray:
        return self.stim.sum(axis=0)


def rate_matrix(system: MOTSystem, r, v, t: float = 0.0) -> RateMatrix:
    """Assemble the rate matrix for the beams that are on at time ``t``."""
    r = np.asarray(r, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    stim = stimulated_rates(system, r[None], v[None], t)[0]
    return RateMatrix(system, stim, system.arrays.decay, r, v, float(t))
