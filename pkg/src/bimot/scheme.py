"""Level schemes: sublevels, radiative links and the presets used for the
bichromatic MOT calculations.

A :class:`LevelScheme` is built from :class:`Level` and :class:`RadiativeLink`
records. Spontaneous rates ``decay[i, j]`` and stimulated line strengths are
derived from Clebsch-Gordan coefficients; nothing is entered by hand.
Construction never raises on physically inconsistent input, so that
:func:`validate` can report what is wrong. :func:`build_preset` returns only
validated schemes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .angular import HalfInt, clebsch_gordan, line_strength

__all__ = [
    "Level", "Sublevel", "RadiativeLink", "LevelScheme", "SchemeError",
    "PRESETS", "build_preset", "validate", "hund_b_g_factor", "hund_b_branching",
    "C2MINUS_LIFETIME", "C2MINUS_WAVELENGTH", "C2MINUS_MASS_U",
]

C2MINUS_LIFETIME = 75e-9
C2MINUS_WAVELENGTH = 541e-9
C2MINUS_MASS_U = 24.022

# rotational splitting between the two C2- ground manifolds; any value >> Gamma
# works because every laser is detuned relative to its own target link
C2MINUS_GROUND_SPLITTING = 1.0e4 / C2MINUS_LIFETIME


class SchemeError(ValueError):
    pass


@dataclass(frozen=True)
class Level:
    """A fine-structure level with all (or a subset of) its Zeeman sublevels.

    ``projections`` restricts the sublevels that are kept, e.g. to drop the
    uncoupled M''=0 state of a 1D J''=1 -> J'=0 system.
    """
    name: str
    J: HalfInt
    g: Optional[float]
    upper: bool
    energy_offset: float = 0.0
    projections: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "J", HalfInt(self.J))
        if self.projections is not None:
            object.__setattr__(self, "projections", tuple(HalfInt(m) for m in self.projections))

    def magnetic_numbers(self) -> list[HalfInt]:
        if self.projections is not None:
            return list(self.projections)
        tj = self.J.twice
        return [HalfInt.from_twice(tm) for tm in range(-tj, tj + 1, 2)]


@dataclass(frozen=True)
class Sublevel:
    level_id: str
    J: HalfInt
    M: HalfInt
    g: Optional[float]
    energy_offset: float
    upper: bool

    @property
    def label(self) -> str:
        return f"{self.level_id}(M={self.M})"


@dataclass(frozen=True)
class RadiativeLink:
    """Dipole transition between an upper and a lower level.

    ``gamma_total`` is the total decay rate of the upper level (rad/s) and
    ``branching`` the fraction of it that ends in this lower level.
    """
    name: str
    upper: str
    lower: str
    gamma_total: float
    wavelength: float
    branching: float = 1.0

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength


@dataclass(frozen=True, eq=False)
class LevelScheme:
    name: str
    levels: tuple
    links: tuple
    decay: Optional[np.ndarray] = None
    strengths: dict = field(default=None, repr=False)
    stimulated: str = "decay"

    def __post_init__(self):
        if self.stimulated not in ("decay", "clebsch"):
            raise SchemeError("stimulated must be 'decay' or 'clebsch'")
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "links", tuple(self.links))
        subs = []
        for lev in self.levels:
            for M in lev.magnetic_numbers():
                subs.append(Sublevel(lev.name, lev.J, M, lev.g, lev.energy_offset, lev.upper))
        object.__setattr__(self, "sublevels", tuple(subs))
        object.__setattr__(self, "upper_index", np.array([k for k, s in enumerate(subs) if s.upper], dtype=int))
        object.__setattr__(self, "lower_index", np.array([k for k, s in enumerate(subs) if not s.upper], dtype=int))
        ups = [subs[k] for k in self.upper_index]
        lows = [subs[k] for k in self.lower_index]

        helicity = np.array([[int((u.M - l.M).twice // 2) if (u.M - l.M).is_integer else 99
                              for l in lows] for u in ups], dtype=int).reshape(len(ups), len(lows))
        gu = np.array([np.nan if u.g is None else u.g for u in ups])
        gl = np.array([np.nan if l.g is None else l.g for l in lows])
        mu = np.array([float(u.M) for u in ups])
        ml = np.array([float(l.M) for l in lows])
        zeeman = (gu * mu)[:, None] - (gl * ml)[None, :]
        object.__setattr__(self, "helicity", helicity)
        object.__setattr__(self, "zeeman", zeeman)

        strengths, decay = self._derive(ups, lows)
        if self.strengths is None:
            object.__setattr__(self, "strengths", strengths)
        if self.decay is None:
            object.__setattr__(self, "decay", decay)
        for arr in (self.decay, self.helicity, self.zeeman, *self.strengths.values()):
            arr.setflags(write=False)

    def _derive(self, ups, lows):
        names = {lev.name for lev in self.levels}
        decay = np.zeros((len(ups), len(lows)))
        strengths = {}
        for link in self.links:
            f = np.zeros((len(ups), len(lows)))
            if link.upper not in names or link.lower not in names:
                strengths[link.name] = f
                continue
            for a, u in enumerate(ups):
                if u.level_id != link.upper:
                    continue
                for b, l in enumerate(lows):
                    if l.level_id != link.lower:
                        continue
                    d = u.M - l.M
                    if not d.is_integer or abs(d.twice) > 2:
                        continue
                    f[a, b] = line_strength(l.J, l.M, d.twice // 2, u.J, u.M)
            norm = f.sum(axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                spont = np.where(norm > 0, f / norm, 0.0)
            decay += link.gamma_total * link.branching * spont
            # f_ij = Gamma_ij / Gamma keeps absorption and emission of a line
            # consistent when sublevels are dropped from a manifold
            if self.stimulated == "decay":
                strengths[link.name] = link.branching * spont
            else:
                strengths[link.name] = link.branching * f
        return strengths, decay

    # -- lookups -------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.sublevels)

    @property
    def uppers(self) -> list[Sublevel]:
        return [self.sublevels[k] for k in self.upper_index]

    @property
    def lowers(self) -> list[Sublevel]:
        return [self.sublevels[k] for k in self.lower_index]

    def level(self, name: str) -> Level:
        for lev in self.levels:
            if lev.name == name:
                return lev
        raise KeyError(name)

    def link(self, name: str) -> RadiativeLink:
        for link in self.links:
            if link.name == name:
                return link
        raise KeyError(f"no link named {name!r} in scheme {self.name!r}")

    def index(self, level_id: str, M) -> int:
        M = HalfInt(M)
        for k, s in enumerate(self.sublevels):
            if s.level_id == level_id and s.M == M:
                return k
        raise KeyError(f"{level_id}(M={M})")

    def upper_gamma(self) -> np.ndarray:
        """Total decay rate of each upper sublevel (from its links)."""
        out = np.zeros(len(self.upper_index))
        for a, u in enumerate(self.uppers):
            for link in self.links:
                if link.upper == u.level_id:
                    out[a] = max(out[a], link.gamma_total)
        return out

    def with_g(self, **g_by_level) -> "LevelScheme":
        """Copy of the scheme with some Lande factors replaced."""
        levels = [replace(lev, g=g_by_level.get(lev.name, lev.g)) for lev in self.levels]
        unknown = set(g_by_level) - {lev.name for lev in self.levels}
        if unknown:
            raise SchemeError(f"unknown level(s) {sorted(unknown)}")
        return LevelScheme(self.name, levels, self.links, stimulated=self.stimulated)


def validate(scheme: LevelScheme) -> list[str]:
    """Human-readable list of violated invariants; empty when the scheme is sound."""
    out = []
    names = [lev.name for lev in scheme.levels]
    if len(set(names)) != len(names):
        out.append("duplicate level names")
    for lev in scheme.levels:
        if lev.g is None or not np.isfinite(lev.g):
            out.append(f"level {lev.name}: missing g-factor")
        if lev.J.twice < 0:
            out.append(f"level {lev.name}: negative J")
        for M in lev.magnetic_numbers():
            if abs(M.twice) > lev.J.twice or (lev.J.twice - M.twice) % 2:
                out.append(f"level {lev.name}: invalid projection M={M} for J={lev.J}")
    by_name = {lev.name: lev for lev in scheme.levels}
    for link in scheme.links:
        up, lo = by_name.get(link.upper), by_name.get(link.lower)
        if up is None:
            out.append(f"link {link.name}: upper level {link.upper!r} is not in the scheme")
        elif not up.upper:
            out.append(f"link {link.name}: level {link.upper!r} is not an upper level")
        if lo is None:
            out.append(f"link {link.name}: decay is not closed, lower level {link.lower!r} is absent")
        elif lo.upper:
            out.append(f"link {link.name}: level {link.lower!r} is not a lower level")
        if up is not None and lo is not None:
            dj = abs(up.J.twice - lo.J.twice)
            if dj > 2 or up.J.twice + lo.J.twice < 2:
                out.append(f"link {link.name}: J={lo.J} -> J'={up.J} is not dipole allowed; "
                           "decay is not closed")
        if not (link.gamma_total > 0):
            out.append(f"link {link.name}: gamma_total must be positive")
        if not (link.wavelength > 0):
            out.append(f"link {link.name}: wavelength must be positive")
        if link.branching < 0:
            out.append(f"link {link.name}: negative branching")

    for lev in scheme.levels:
        if not lev.upper:
            continue
        mine = [l for l in scheme.links if l.upper == lev.name]
        if not mine:
            out.append(f"upper level {lev.name}: not reached by any link")
            continue
        gammas = {l.gamma_total for l in mine}
        if len(gammas) > 1:
            out.append(f"upper level {lev.name}: links disagree on gamma_total")
        total_b = sum(l.branching for l in mine)
        if abs(total_b - 1) > 1e-12:
            out.append(f"upper level {lev.name}: decay is not closed, link branchings sum to {total_b:.6g}")

    if np.any(scheme.decay < 0):
        out.append("negative spontaneous rate")
    gamma_up = scheme.upper_gamma()
    sums = scheme.decay.sum(axis=1)
    for a, u in enumerate(scheme.uppers):
        if gamma_up[a] <= 0:
            continue
        ratio = sums[a] / gamma_up[a]
        if abs(ratio - 1) > 1e-12:
            out.append(f"upper sublevel {u.label}: branching sum {ratio:.6g} != 1")
    return out


# -- molecular helpers ----------------------------------------------------

def hund_b_g_factor(J, N, S=HalfInt("1/2"), g_s: float = 2.0) -> float:
    """Lande factor of a Hund's case (b) level with spin-only magnetism."""
    J, N, S = (float(HalfInt(x)) for x in (J, N, S))
    if J == 0:
        return 0.0
    return g_s * (J * (J + 1) + S * (S + 1) - N * (N + 1)) / (2 * J * (J + 1))


def hund_b_branching(N_up, J_up, N_low, J_low, S=HalfInt("1/2")) -> float:
    """Fraction of the decay of |N' S J'> that ends in |N'' S J''> for a
    Sigma-Sigma transition, with the dipole acting on the rotation only.

    Evaluated by uncoupling the spin with Clebsch-Gordan coefficients and
    summing the emission probability over all final sublevels.
    """
    N_up, J_up, N_low, J_low, S = (HalfInt(x) for x in (N_up, J_up, N_low, J_low, S))
    rot = clebsch_gordan(N_low, 0, 1, 0, N_up, 0) * math.sqrt((N_low.twice + 1) / (N_up.twice + 1))
    if rot == 0.0:
        return 0.0
    M_up = J_up  # any projection gives the same total
    total = 0.0
    for tml in range(-J_low.twice, J_low.twice + 1, 2):
        M_low = HalfInt.from_twice(tml)
        for p in (-1, 0, 1):
            amp = 0.0
            for tms in range(-S.twice, S.twice + 1, 2):
                MS = HalfInt.from_twice(tms)
                MN_up = M_up - MS
                MN_low = M_low - MS
                if abs(MN_up.twice) > N_up.twice or abs(MN_low.twice) > N_low.twice:
                    continue
                if (MN_up - MN_low).twice != 2 * p:
                    continue
                amp += (clebsch_gordan(N_up, MN_up, S, MS, J_up, M_up)
                        * clebsch_gordan(N_low, MN_low, S, MS, J_low, M_low)
                        * clebsch_gordan(N_low, MN_low, 1, p, N_up, MN_up))
            total += (rot * amp) ** 2
    return total


# -- presets -------------------------------------------------------------

def _two_level_scheme(name, J_low, g_low, J_up, g_up, gamma, wavelength, projections=None):
    levels = [
        Level("X", J_low, g_low, upper=False, projections=projections),
        Level("A", J_up, g_up, upper=True),
    ]
    return LevelScheme(name, levels, [RadiativeLink("main", "A", "X", gamma, wavelength)])


def _c2minus(name, gamma, wavelength, g_overrides):
    g12 = hund_b_g_factor("1/2", 0)
    g32 = hund_b_g_factor("3/2", 2)
    g_up = 0.0
    g = {"X12": g12, "X32": g32, "B": g_up}
    g.update(g_overrides or {})
    levels = [
        Level("X12", "1/2", g["X12"], upper=False),
        Level("X32", "3/2", g["X32"], upper=False, energy_offset=C2MINUS_GROUND_SPLITTING),
        Level("B", "1/2", g["B"], upper=True),
    ]
    links = [
        RadiativeLink("x12", "B", "X12", gamma, wavelength, hund_b_branching(1, "1/2", 0, "1/2")),
        RadiativeLink("x32", "B", "X32", gamma, wavelength, hund_b_branching(1, "1/2", 2, "3/2")),
    ]
    return LevelScheme(name, levels, links)


PRESETS = (
    "type1_0to1", "lambda_1to0", "lambda_1to0_with_M0", "j_half_to_half",
    "c2minus_i", "c2minus_ii", "c2minus_iii",
)


def build_preset(name: str, *, gamma: float | None = None, wavelength: float | None = None,
                 g_overrides: dict | None = None, stimulated: str = "decay") -> LevelScheme:
    """Build and validate one of the named level schemes.

    The atomic presets default to the C2- line (541 nm, 75 ns lifetime) so
    that all presets share physical units. ``g_overrides`` maps level names
    (``"X"``/``"A"`` for the two-level presets, ``"X12"``, ``"X32"``, ``"B"``
    for C2-) to replacement Lande factors. ``stimulated="clebsch"`` uses the
    bare squared Clebsch-Gordan coefficient for stimulated rates even when
    sublevels are dropped (it only differs for ``lambda_1to0``).
    """
    gamma = 1.0 / C2MINUS_LIFETIME if gamma is None else gamma
    wavelength = C2MINUS_WAVELENGTH if wavelength is None else wavelength
    if name == "type1_0to1":
        scheme = _two_level_scheme(name, 0, 0.0, 1, -1.0, gamma, wavelength)
    elif name == "lambda_1to0":
        scheme = _two_level_scheme(name, 1, -1.0, 0, 0.0, gamma, wavelength, projections=(-1, 1))
    elif name == "lambda_1to0_with_M0":
        scheme = _two_level_scheme(name, 1, -1.0, 0, 0.0, gamma, wavelength)
    elif name == "j_half_to_half":
        scheme = _two_level_scheme(name, "1/2", 1.0, "1/2", 0.0, gamma, wavelength)
    elif name in ("c2minus_i", "c2minus_ii", "c2minus_iii"):
        scheme = _c2minus(name, gamma, wavelength, g_overrides)
        g_overrides = None
    else:
        raise SchemeError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if g_overrides:
        scheme = scheme.with_g(**g_overrides)
    if stimulated != scheme.stimulated:
        scheme = LevelScheme(scheme.name, scheme.levels, scheme.links, stimulated=stimulated)
    return _checked(scheme)


def _checked(scheme: LevelScheme) -> LevelScheme:
    problems = validate(scheme)
    if problems:
        raise SchemeError(f"scheme {scheme.name!r} is invalid: " + "; ".join(problems))
    return scheme


def scheme_from_dict(doc: dict) -> LevelScheme:
    """Custom scheme from a config mapping with ``levels`` and ``links`` lists.

    Level entries: ``name, J, g, upper`` and optional ``energy_offset``,
    ``projections``. Link entries: ``name, upper, lower, lifetime_ns`` or
    ``gamma`` (rad/s), ``wavelength_nm``, optional ``branching``.
    """
    levels = []
    for d in doc["levels"]:
        proj = d.get("projections")
        levels.append(Level(str(d["name"]), HalfInt(d["J"]), None if d.get("g") is None else float(d["g"]),
                            bool(d["upper"]), float(d.get("energy_offset", 0.0)),
                            None if proj is None else tuple(proj)))
    links = []
    for d in doc["links"]:
        if "gamma" in d:
            gamma = float(d["gamma"])
        else:
            gamma = 1.0 / (float(d["lifetime_ns"]) * 1e-9)
        links.append(RadiativeLink(str(d["name"]), str(d["upper"]), str(d["lower"]), gamma,
                                   float(d["wavelength_nm"]) * 1e-9, float(d.get("branching", 1.0))))
    return LevelScheme(str(doc.get("name", "custom")), levels, links,
                       stimulated=str(doc.get("stimulated", "decay")))


def scheme_to_dict(scheme: LevelScheme) -> dict:
    return {
        "name": scheme.name,
        "levels": [{"name": lev.name, "J": str(lev.J), "g": lev.g, "upper": lev.upper,
                    "energy_offset": lev.energy_offset,
                    "projections": None if lev.projections is None else [str(m) for m in lev.projections]}
                   for lev in scheme.levels],
        "links": [{"name": l.name, "upper": l.upper, "lower": l.lower, "gamma": l.gamma_total,
                   "wavelength_nm": l.wavelength * 1e9, "branching": l.branching}
                  for l in scheme.links],
        "stimulated": scheme.stimulated,
    }
