"""Angular-momentum algebra for electric-dipole transitions.

Quantum numbers are handled as doubled integers (:class:`HalfInt`) so that
selection rules are checked exactly. Clebsch-Gordan coefficients use Racah's
closed-form sum with integer factorials; the squared coefficient is built as
an exact :class:`fractions.Fraction` and only the final square root is taken
in floating point.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial, sqrt
from numbers import Rational

__all__ = ["HalfInt", "AngularMomentumError", "clebsch_gordan", "clebsch_gordan_squared",
           "line_strength"]


class AngularMomentumError(ValueError):
    """Invalid quantum numbers (as opposed to a selection-rule zero)."""


class HalfInt:
    """Integer or half-integer number stored as ``2*value``."""

    __slots__ = ("twice",)

    def __init__(self, value):
        if isinstance(value, HalfInt):
            twice = value.twice
        elif isinstance(value, str):
            twice = Fraction(value) * 2
        elif isinstance(value, (int, Rational)):
            twice = Fraction(value) * 2
        elif isinstance(value, float):
            twice = Fraction(value).limit_denominator(4) * 2
            if abs(float(twice) - 2 * value) > 1e-9:
                raise AngularMomentumError(f"{value!r} is not a multiple of 1/2")
        else:
            raise TypeError(f"cannot make a HalfInt from {type(value).__name__}")
        if Fraction(twice).denominator != 1:
            raise AngularMomentumError(f"{value!r} is not a multiple of 1/2")
        object.__setattr__(self, "twice", int(twice))

    @classmethod
    def from_twice(cls, twice: int) -> "HalfInt":
        obj = cls.__new__(cls)
        object.__setattr__(obj, "twice", int(twice))
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("HalfInt is immutable")

    def __reduce__(self):
        return (HalfInt.from_twice, (self.twice,))

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def __float__(self) -> float:
        return self.twice / 2

    def as_fraction(self) -> Fraction:
        return Fraction(self.twice, 2)

    def __neg__(self):
        return HalfInt.from_twice(-self.twice)

    def __add__(self, other):
        return HalfInt.from_twice(self.twice + HalfInt(other).twice)

    __radd__ = __add__

    def __sub__(self, other):
        return HalfInt.from_twice(self.twice - HalfInt(other).twice)

    def __rsub__(self, other):
        return HalfInt.from_twice(HalfInt(other).twice - self.twice)

    def __abs__(self):
        return HalfInt.from_twice(abs(self.twice))

    def __eq__(self, other):
        try:
            return self.twice == HalfInt(other).twice
        except (TypeError, AngularMomentumError):
            return NotImplemented

    def __lt__(self, other):
        return self.twice < HalfInt(other).twice

    def __le__(self, other):
        return self.twice <= HalfInt(other).twice

    def __hash__(self):
        return hash(("HalfInt", self.twice))

    def __repr__(self):
        return f"HalfInt({self})"

    def __str__(self):
        return str(self.twice // 2) if self.is_integer else f"{self.twice}/2"


def _twice(x) -> int:
    return HalfInt(x).twice


def _check_pair(tj: int, tm: int, name: str) -> None:
    if tj < 0:
        raise AngularMomentumError(f"{name}: negative angular momentum {tj}/2")
    if abs(tm) > tj or (tj - tm) % 2:
        raise AngularMomentumError(f"{name}: invalid projection {tm}/2 for J={tj}/2")


def _racah_squared(tj1, tm1, tj2, tm2, tJ, tM) -> tuple[int, Fraction]:
    """Sign and exact square of <j1 m1; j2 m2 | J M>; arguments are doubled."""
    # all factorial arguments below are integers once the triangle and
    # parity conditions hold
    a = (tJ + tj1 - tj2) // 2
    b = (tJ - tj1 + tj2) // 2
    c = (tj1 + tj2 - tJ) // 2
    d = (tj1 + tj2 + tJ) // 2 + 1
    pre = Fraction((tJ + 1) * factorial(a) * factorial(b) * factorial(c), factorial(d))
    pre *= (factorial((tJ + tM) // 2) * factorial((tJ - tM) // 2)
            * factorial((tj1 - tm1) // 2) * factorial((tj1 + tm1) // 2)
            * factorial((tj2 - tm2) // 2) * factorial((tj2 + tm2) // 2))
    s = Fraction(0)
    kmin = max(0, (tj2 - tJ - tm1) // 2, (tj1 - tJ + tm2) // 2)
    kmax = min(c, (tj1 - tm1) // 2, (tj2 + tm2) // 2)
    for k in range(kmin, kmax + 1):
        den = (factorial(k) * factorial(c - k) * factorial((tj1 - tm1) // 2 - k)
               * factorial((tj2 + tm2) // 2 - k) * factorial((tJ - tj2 + tm1) // 2 + k)
               * factorial((tJ - tj1 - tm2) // 2 + k))
        s += Fraction((-1) ** k, den)
    if s == 0:
        return 0, Fraction(0)
    return (1 if s > 0 else -1), pre * s * s


@lru_cache(maxsize=None)
def _cg_cached(tj1, tm1, tj2, tm2, tJ, tM) -> tuple[int, Fraction]:
    for tj, tm, name in ((tj1, tm1, "j1"), (tj2, tm2, "j2"), (tJ, tM, "J")):
        _check_pair(tj, tm, name)
    if tm1 + tm2 != tM:
        return 0, Fraction(0)
    if tJ < abs(tj1 - tj2) or tJ > tj1 + tj2 or (tj1 + tj2 + tJ) % 2:
        return 0, Fraction(0)
    return _racah_squared(tj1, tm1, tj2, tm2, tJ, tM)


def clebsch_gordan_squared(j1, m1, j2, m2, J, M) -> Fraction:
    """Exact value of ``<j1 m1; j2 m2 | J M>**2`` as a Fraction."""
    return _cg_cached(_twice(j1), _twice(m1), _twice(j2), _twice(m2), _twice(J), _twice(M))[1]


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient ``<j1 m1; j2 m2 | J M>`` (Condon-Shortley phase).

    Quantum numbers may be :class:`HalfInt`, int, Fraction, ``"1/2"`` style
    strings or floats that are exact halves. Violated selection rules
    (``M != m1 + m2``, triangle inequality) give 0; malformed pairs such as
    ``|m| > j`` raise :class:`AngularMomentumError`.
    """
    sign, sq = _cg_cached(_twice(j1), _twice(m1), _twice(j2), _twice(m2), _twice(J), _twice(M))
    if sign == 0:
        return 0.0
    return sign * sqrt(sq.numerator) / sqrt(sq.denominator)


def line_strength(J_low, M_low, p: int, J_up, M_up) -> float:
    """Normalized strength ``|<J'' M'', 1 p | J' M'>|**2`` of one sublevel transition.

    ``p`` is the photon helicity, so the transition is allowed only for
    ``M_up == M_low + p``. For a fixed upper sublevel the strengths summed
    over ``(M_low, p)`` equal 1.
    """
    if p not in (-1, 0, 1):
        raise AngularMomentumError(f"helicity must be -1, 0 or +1, got {p!r}")
    return float(clebsch_gordan_squared(J_low, M_low, 1, p, J_up, M_up))
