import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.constants import hbar

sys.path.insert(0, str(Path(__file__).parent))

from bimot.fields import (BeamComponent, LaserBeam, MagneticFieldMap, SIGMA_PLUS, mot_beams_1d,
                          mot_beams_3d, restoring_handedness)
from bimot.scheme import build_preset, scheme_from_dict
from bimot.system import ATOMIC_MASS_UNIT, MU_B, MOTSystem

MASS = 24.022 * ATOMIC_MASS_UNIT


def layout(preset, comps, s=1.0, gradient=0.1, dim=1, mass=MASS, scheme=None, link="main"):
    """MOT along z (or six beams) from (detuning/Gamma, +/-1 relative handedness) pairs."""
    sc = scheme or build_preset(preset)
    lk = sc.link(link)
    h = restoring_handedness(sc, link)
    cs = [BeamComponent(link, d * lk.gamma_total, s, h * hs) for d, hs in comps]
    beams = (mot_beams_1d if dim == 1 else mot_beams_3d)(cs, lk.wavenumber)
    field = MagneticFieldMap("linear_1d" if dim == 1 else "quadrupole_3d", gradient)
    return MOTSystem(sc, beams, field, mass)


def two_level_scheme():
    """Closed two-level system: J=0 -> J'=1 keeping only M'=+1."""
    return scheme_from_dict({
        "name": "two_level",
        "levels": [{"name": "g", "J": 0, "g": 0.0, "upper": False},
                   {"name": "e", "J": 1, "g": 0.0, "upper": True, "projections": ["1"]}],
        "links": [{"name": "main", "upper": "e", "lower": "g", "lifetime_ns": 75, "wavelength_nm": 541}],
    })


def two_level_system(s=1.0, detuning=0.0, mass=MASS):
    sc = two_level_scheme()
    lk = sc.link("main")
    beam = LaserBeam([0, 0, 1], lk.wavenumber, detuning * lk.gamma_total, s, SIGMA_PLUS, "main")
    return MOTSystem(sc, [beam], MagneticFieldMap("linear_1d", 0.0), mass)


def zeeman_unit(system):
    """Position (m) whose Zeeman shift of a |g M| = 1 line equals Gamma."""
    return system.gamma * hbar / (MU_B * system.field.gradient)


def unit_force(system):
    return hbar * system.wavenumber * system.gamma


BICHROMATIC = [(-1, 1), (0, -1)]
MONOCHROMATIC = [(-1, 1)]


@pytest.fixture
def fig2_system():
    return layout("lambda_1to0", BICHROMATIC)


ACCEPTANCE = []  # (criterion, passed, detail) lines collected by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
