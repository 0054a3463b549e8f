import math
from fractions import Fraction

import pytest

from bimot.angular import AngularMomentumError, HalfInt, clebsch_gordan, clebsch_gordan_squared, line_strength
from oracles import cg_oracle


def test_halfint_arithmetic_and_parsing():
    assert HalfInt("3/2").twice == 3
    assert HalfInt(1).twice == 2
    assert HalfInt(0.5) == HalfInt("1/2")
    assert float(HalfInt("1/2") + HalfInt("1/2")) == 1.0
    assert (-HalfInt("3/2")).twice == -3
    with pytest.raises(AngularMomentumError):
        HalfInt("1/3")
    with pytest.raises(AttributeError):
        HalfInt(1).twice = 4


def test_cg_singlet_coupling_sign_and_square():
    # Condon-Shortley value (the lowering-operator oracle fixes the sign)
    value = clebsch_gordan(1, -1, 1, 1, 0, 0)
    assert value == pytest.approx(cg_oracle(1, -1, 1, 1, 0, 0), abs=1e-14)
    assert value == pytest.approx(1 / math.sqrt(3), abs=1e-14)
    assert clebsch_gordan_squared(1, -1, 1, 1, 0, 0) == Fraction(1, 3)


def test_cg_unique_state():
    assert clebsch_gordan(0, 0, 1, 0, 1, 0) == 1.0


def test_cg_half_integer_example():
    assert clebsch_gordan("1/2", "-1/2", 1, 1, "1/2", "1/2") ** 2 == pytest.approx(2 / 3, abs=1e-14)
    assert clebsch_gordan_squared("1/2", "-1/2", 1, 1, "1/2", "1/2") == Fraction(2, 3)


def test_selection_rule_zero_versus_invalid():
    assert clebsch_gordan(1, 1, 1, 1, 1, 1) == 0.0      # M != m1 + m2
    assert clebsch_gordan(1, 0, 1, 0, 3, 0) == 0.0      # triangle violated
    with pytest.raises(AngularMomentumError):
        clebsch_gordan(1, 2, 1, 0, 1, 2)                 # |m1| > j1
    with pytest.raises(AngularMomentumError):
        clebsch_gordan("1/2", 0, 1, 0, "1/2", 0)         # m not matching j parity


@pytest.mark.parametrize("j1,j2", [(Fraction(1, 2), 1), (1, 1), (Fraction(3, 2), 1), (2, 1), (Fraction(5, 2), Fraction(3, 2))])
def test_cg_matches_lowering_operator_oracle(j1, j2):
    twice = lambda j: int(2 * j)
    J = abs(Fraction(j1) - Fraction(j2))
    while J <= j1 + j2:
        for a in range(-twice(j1), twice(j1) + 1, 2):
            for b in range(-twice(j2), twice(j2) + 1, 2):
                m1, m2 = Fraction(a, 2), Fraction(b, 2)
                if abs(m1 + m2) > J:
                    continue
                got = clebsch_gordan(j1, m1, j2, m2, J, m1 + m2)
                assert got == pytest.approx(cg_oracle(j1, m1, j2, m2, J, m1 + m2), abs=1e-12)
        J += 1


def test_line_strength_examples():
    assert line_strength(1, 1, -1, 0, 0) == pytest.approx(1 / 3, abs=1e-15)
    assert line_strength("1/2", "1/2", 0, "1/2", "1/2") == pytest.approx(1 / 3, abs=1e-15)
    total = sum(line_strength(1, m, p, 0, 0) for m in (-1, 0, 1) for p in (-1, 0, 1))
    assert total == pytest.approx(1.0, abs=1e-15)
    assert line_strength(1, 1, 1, 0, 0) == 0.0           # Mup != Mlow + p


@pytest.mark.parametrize("Jl,Ju", [(0, 1), (1, 0), (1, 1), (1, 2), ("1/2", "1/2"), ("3/2", "1/2"), ("1/2", "3/2")])
def test_branching_sum_rule(Jl, Ju):
    Jl, Ju = HalfInt(Jl), HalfInt(Ju)
    for tu in range(-Ju.twice, Ju.twice + 1, 2):
        Mu = HalfInt.from_twice(tu)
        total = sum(line_strength(Jl, HalfInt.from_twice(tl), p, Ju, Mu)
                    for tl in range(-Jl.twice, Jl.twice + 1, 2) for p in (-1, 0, 1))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_matches_sympy_reference():
    from sympy import Rational as R
    from sympy.physics.quantum.cg import CG

    cases = [(1, -1, 1, 1, 0, 0), (R(1, 2), R(1, 2), 1, 0, R(3, 2), R(1, 2)),
             (R(3, 2), R(-1, 2), 1, 1, R(1, 2), R(1, 2)), (2, 1, 1, -1, 1, 0), (1, 0, 1, 0, 2, 0)]
    for j1, m1, j2, m2, J, M in cases:
        ref = float(CG(j1, m1, j2, m2, J, M).doit())
        got = clebsch_gordan(str(j1), str(m1), str(j2), str(m2), str(J), str(M))
        assert got == pytest.approx(ref, abs=1e-14)
