"""Reference implementations written independently of the package.

* Clebsch-Gordan coefficients by repeated application of the lowering
  operator in the uncoupled product basis, with Gram-Schmidt against the
  higher-J multiplets and the Condon-Shortley phase fixed by
  <j1 j1; j2 (J-j1) | J J> > 0.
* Spin-1 Wigner small-d matrix for the helicity weights of a rotated beam.
"""
from fractions import Fraction
import math

import numpy as np


def _mvals(j):
    return [j - k for k in range(int(round(2 * j)) + 1)]


def _lower(j, m):
    return math.sqrt(j * (j + 1) - m * (m - 1))


def coupled_states(j1, j2):
    """{(J, M): vector over the product basis [(m1, m2), ...]}."""
    basis = [(a, b) for a in _mvals(j1) for b in _mvals(j2)]
    index = {mm: n for n, mm in enumerate(basis)}

    def apply_lowering(vec):
        out = np.zeros(len(basis))
        for n, (a, b) in enumerate(basis):
            if vec[n] == 0:
                continue
            if a - 1 >= -j1 - 1e-9:
                out[index[(a - 1, b)]] += _lower(j1, a) * vec[n]
            if b - 1 >= -j2 - 1e-9:
                out[index[(a, b - 1)]] += _lower(j2, b) * vec[n]
        return out

    states = {}
    J = j1 + j2
    while J >= abs(j1 - j2) - 1e-9:
        # highest-weight state of this multiplet: M = J, orthogonal to higher J
        cand = np.array([1.0 if abs(a + b - J) < 1e-9 else 0.0 for a, b in basis])
        space = [n for n, (a, b) in enumerate(basis) if abs(a + b - J) < 1e-9]
        # Gram-Schmidt inside the M=J subspace
        vecs = [np.eye(len(basis))[n] for n in space]
        higher = [states[(Jh, J)] for Jh in _higher(J, j1 + j2)]
        ortho = []
        for v in higher + vecs:
            w = v.copy()
            for u in ortho:
                w -= (u @ w) * u
            if np.linalg.norm(w) > 1e-10:
                ortho.append(w / np.linalg.norm(w))
        top = ortho[len(higher)]
        # Condon-Shortley: coefficient of m1 = j1 is positive
        n1 = index[(j1, J - j1)]
        if top[n1] < 0:
            top = -top
        states[(J, J)] = top
        vec, M = top, J
        while M > -J + 1e-9:
            vec = apply_lowering(vec)
            vec /= np.linalg.norm(vec)
            M -= 1
            states[(J, M)] = vec
        J -= 1
    return basis, states


def _higher(J, Jmax):
    out = []
    x = J + 1
    while x <= Jmax + 1e-9:
        out.append(x)
        x += 1
    return out


def cg_oracle(j1, m1, j2, m2, J, M):
    j1, m1, j2, m2, J, M = (float(Fraction(x)) for x in (j1, m1, j2, m2, J, M))
    if abs(m1 + m2 - M) > 1e-9 or J > j1 + j2 + 1e-9 or J < abs(j1 - j2) - 1e-9:
        return 0.0
    basis, states = coupled_states(j1, j2)
    key = min(states, key=lambda k: abs(k[0] - J) + abs(k[1] - M))
    n = basis.index(min(basis, key=lambda b: abs(b[0] - m1) + abs(b[1] - m2)))
    return float(states[key][n])


def wigner_d1(beta):
    """Spin-1 small-d matrix d[m', m] with rows/cols ordered (+1, 0, -1)."""
    c, s = math.cos(beta), math.sin(beta)
    r = math.sqrt(2.0)
    return np.array([
        [(1 + c) / 2, -s / r, (1 - c) / 2],
        [s / r, c, -s / r],
        [(1 - c) / 2, s / r, (1 + c) / 2],
    ])


def two_level_excited(s, delta_over_gamma=0.0):
    """Stationary upper-state population of a closed two-level system."""
    x = s / (1 + 4 * delta_over_gamma ** 2)
    return 0.5 * x / (1 + x)
