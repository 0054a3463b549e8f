import numpy as np
import pytest
from scipy.constants import hbar

from bimot.rates import rate_matrix
from bimot.scheme import build_preset
from bimot.steady import (DarkManifoldError, force, force_low_sat, generator, steady_force,
                          steady_populations)
from conftest import BICHROMATIC, MONOCHROMATIC, layout, two_level_system, unit_force, zeeman_unit
from oracles import two_level_excited


def test_two_level_resonant_population():
    system = two_level_system(s=1.0)
    rho = steady_populations(rate_matrix(system, np.zeros(3), np.zeros(3)))
    up = system.scheme.upper_index[0]
    assert rho[up] == pytest.approx(0.25, abs=1e-14)
    assert rho[up] == pytest.approx(two_level_excited(1.0), abs=1e-14)


@pytest.mark.parametrize("s,d", [(0.1, 0.0), (3.0, -1.0), (10.0, 0.7)])
def test_two_level_against_closed_form(s, d):
    system = two_level_system(s=s, detuning=d)
    rho = steady_populations(rate_matrix(system, np.zeros(3), np.zeros(3)))
    assert rho[system.scheme.upper_index[0]] == pytest.approx(two_level_excited(s, d), abs=1e-13)


def test_two_level_force():
    system = two_level_system(s=1.0)
    rm = rate_matrix(system, np.zeros(3), np.zeros(3))
    F = force(rm, steady_populations(rm))
    np.testing.assert_allclose(F.F, [0, 0, unit_force(system) / 4], rtol=1e-13, atol=1e-40)
    np.testing.assert_allclose(F.per_beam.sum(axis=0), F.F)


def test_residual_and_normalization(fig2_system):
    rm = rate_matrix(fig2_system, [0, 0, 1e-3], [0, 0, 0.5])
    rho = steady_populations(rm)
    assert rho.rho.sum() == pytest.approx(1.0, abs=1e-15)
    assert rho.rho.min() >= 0
    assert np.max(np.abs(generator(rm) @ rho.rho)) <= 1e-10 * fig2_system.gamma
    assert rho.residual <= 1e-10 * fig2_system.gamma


def test_monochromatic_lambda_compensation():
    system = layout("lambda_1to0", MONOCHROMATIC)
    sc = system.scheme
    for z, v in [(1e-3, 0.0), (-2e-3, 1.0), (0.5e-3, -3.0)]:
        rm = rate_matrix(system, [0, 0, z], [0, 0, v])
        rho = steady_populations(rm).rho
        g = rm.total_stim()[0]                     # one upper sublevel
        lo = rho[sc.lower_index]
        up = rho[sc.upper_index[0]]
        # net absorption from each lower sublevel is the same
        assert g[0] * (lo[0] - up) == pytest.approx(g[1] * (lo[1] - up), rel=1e-12)
        assert g[0] != pytest.approx(g[1], rel=1e-3)


def test_monochromatic_lambda_compensation_low_saturation():
    system = layout("lambda_1to0", MONOCHROMATIC, s=1e-6)
    sc = system.scheme
    rm = rate_matrix(system, [0, 0, 1e-3], [0, 0, 0.5])
    rho = steady_populations(rm).rho
    g = rm.total_stim()[0]
    lo = rho[sc.lower_index]
    assert lo[0] * g[0] == pytest.approx(lo[1] * g[1], rel=1e-5)


def test_lasers_off_is_dark():
    system = layout("lambda_1to0", MONOCHROMATIC, s=0.0)
    with pytest.raises(DarkManifoldError) as err:
        steady_populations(rate_matrix(system, np.zeros(3), np.zeros(3)))
    assert err.value.sublevels


def test_dark_m0_in_1d():
    system = layout("lambda_1to0_with_M0", MONOCHROMATIC)
    with pytest.raises(DarkManifoldError) as err:
        steady_populations(rate_matrix(system, [0, 0, 1e-3], np.zeros(3)))
    assert [str(s.M) for s in err.value.sublevels] == ["0"]
    assert "X(M=0)" in str(err.value)


@pytest.mark.parametrize("gradient", [0.02, 0.1, 0.5])
@pytest.mark.parametrize("d0", [-2.0, -1.0, 0.5])
def test_null_force_monochromatic(gradient, d0):
    system = layout("lambda_1to0", [(d0, 1)], gradient=gradient)
    unit = unit_force(system)
    zu, vu = zeeman_unit(system), system.gamma / system.wavenumber
    for z in np.linspace(-3, 3, 7) * zu:
        for v in np.linspace(-3, 3, 7) * vu:
            assert abs(steady_force(system, [0, 0, z], [0, 0, v])[2]) <= 1e-10 * unit


def test_null_force_polychromatic_single_polarization_per_side():
    system = layout("lambda_1to0", [(-1, 1), (0, 1), (0.7, 1), (-2.5, 1)])
    unit = unit_force(system)
    for z in np.linspace(-3, 3, 5) * zeeman_unit(system):
        for v in (-5.0, 0.3, 2.0):
            assert np.all(np.abs(steady_force(system, [0, 0, z], [0, 0, v])) <= 1e-10 * unit)


def test_type1_symmetric_origin():
    system = layout("type1_0to1", MONOCHROMATIC)
    assert np.all(np.abs(steady_force(system, np.zeros(3), np.zeros(3))) <= 1e-12 * unit_force(system))


def test_antisymmetry(fig2_system):
    unit = unit_force(fig2_system)
    for z, v in [(1e-3, 0.4), (2.5e-3, -1.0), (0.3e-3, 3.0)]:
        a = steady_force(fig2_system, [0, 0, z], [0, 0, v])[2]
        b = steady_force(fig2_system, [0, 0, -z], [0, 0, -v])[2]
        assert a == pytest.approx(-b, rel=1e-12, abs=1e-14 * unit)


def test_g_sum_scaling_j_half():
    base = build_preset("j_half_to_half")
    split = build_preset("j_half_to_half", g_overrides={"X": 0.5, "A": 0.5})
    a = layout(None, BICHROMATIC, scheme=base)
    b = layout(None, BICHROMATIC, scheme=split)
    for z in np.linspace(-4e-3, 4e-3, 9):
        for v in (-2.0, 0.0, 1.5):
            fa = steady_force(a, [0, 0, z], [0, 0, v])[2]
            fb = steady_force(b, [0, 0, z], [0, 0, v])[2]
            assert fa == pytest.approx(fb, rel=1e-10, abs=1e-25)


def test_low_sat_monochromatic_zero():
    system = layout("lambda_1to0", MONOCHROMATIC)
    for z in (-1e-3, 0.0, 2e-3):
        res = force_low_sat(system, z, 0.7)
        assert abs(res.force) <= 1e-10 * unit_force(system)


def test_low_sat_symmetric_origin(fig2_system):
    assert abs(force_low_sat(fig2_system, 0.0, 0.0).force) <= 1e-12 * unit_force(fig2_system)


def test_low_sat_requires_axial_beams():
    system = layout("lambda_1to0_with_M0", BICHROMATIC, dim=3)
    with pytest.raises(ValueError):
        force_low_sat(system, 0.0, 0.0)


def test_low_sat_agrees_at_small_saturation():
    system = layout("lambda_1to0", BICHROMATIC, s=0.01)
    unit = unit_force(system)
    checked = 0
    for z in np.linspace(-3, 3, 13) * zeeman_unit(system):
        exact = steady_force(system, [0, 0, z], [0, 0, 0])[2]
        if abs(exact) > 1e-3 * unit * 0.01:
            assert force_low_sat(system, z, 0.0).force == pytest.approx(exact, rel=0.05)
            checked += 1
    assert checked >= 6


def test_low_sat_error_scales_with_saturation():
    # several upper sublevels share each lower one, so the weighted form is
    # only a low-intensity approximation here; its error grows linearly in s
    errors = []
    for s in (0.01, 0.1, 1.0):
        system = layout("type1_0to1", MONOCHROMATIC, s=s)
        z = 1.5 * zeeman_unit(system)
        exact = steady_force(system, [0, 0, z], [0, 0, 0])[2]
        errors.append(abs(force_low_sat(system, z, 0.0).force / exact - 1))
    assert errors[0] < 1e-3 < errors[2]
    assert errors[1] / errors[0] == pytest.approx(10, rel=0.1)


def test_low_sat_exact_with_single_upper_sublevel():
    # each lower sublevel of the J'=0 scheme couples to one upper state, so
    # the net stimulated flux splits between the beams exactly as gamma_j^+/-
    system = layout("lambda_1to0", BICHROMATIC, s=1.0)
    z = 0.8 * zeeman_unit(system)
    exact = steady_force(system, [0, 0, z], [0, 0, 0.4])[2]
    assert force_low_sat(system, z, 0.4).force == pytest.approx(exact, rel=1e-12)
