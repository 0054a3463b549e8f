"""Stationary populations of the rate equations and the scattering force."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar
from scipy.sparse.csgraph import connected_components

from .rates import RateMatrix, rate_matrix
from .system import MOTSystem

__all__ = ["DarkManifoldError", "NumericalFailure", "PopulationVector", "ForceVector",
           "generator", "steady_populations", "force", "force_low_sat", "steady_force",
           "LowSatResult"]


class DarkManifoldError(RuntimeError):
    """The rate graph has no unique bright stationary state."""

    def __init__(self, message, sublevels=()):
        super().__init__(message)
        self.sublevels = tuple(sublevels)


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PopulationVector:
    rho: np.ndarray
    residual: float

    def __getitem__(self, k):
        return self.rho[k]

    def __len__(self):
        return len(self.rho)


@dataclass(frozen=True, eq=False)
class ForceVector:
    F: np.ndarray
    per_beam: np.ndarray

    def __getitem__(self, k):
        return self.F[k]


def generator(rm: RateMatrix) -> np.ndarray:
    """Matrix ``A`` with ``d rho/dt = A rho`` over all sublevels."""
    scheme = rm.scheme
    n = scheme.n
    up = scheme.upper_index
    lo = scheme.lower_index
    gam = rm.total_stim()
    G = rm.spont
    A = np.zeros((n, n))
    ii = np.repeat(up, len(lo))
    jj = np.tile(lo, len(up))
    g = gam.ravel()
    d = G.ravel()
    # upper i: -(Gamma_ij + gamma_ij) rho_i + gamma_ij rho_j
    np.add.at(A, (ii, ii), -(d + g))
    np.add.at(A, (ii, jj), g)
    # lower j: (Gamma_ij + gamma_ij) rho_i - gamma_ij rho_j
    np.add.at(A, (jj, ii), d + g)
    np.add.at(A, (jj, jj), -g)
    return A


def _closed_classes(A: np.ndarray, rel_tol: float = 1e-13):
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    scale = off.max() if off.size else 0.0
    adj = (off.T > rel_tol * scale).astype(int) if scale > 0 else np.zeros_like(off, dtype=int)
    # adj[i, j] = 1 when population flows i -> j
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(len(A)), members)
        if not adj[np.ix_(members, outside)].any():
            closed.append(members)
    return closed, adj


def steady_populations(rm: RateMatrix) -> PopulationVector:
    """Solve ``A rho = 0`` with ``sum(rho) = 1``.

    Raises :class:`DarkManifoldError` when population can be trapped in
    sublevels that no laser couples, or when the stationary state is not
    unique.
    """
    A = generator(rm)
    scheme = rm.scheme
    closed, adj = _closed_classes(A)
    dark = [c for c in closed if len(c) == 1 and not adj[c[0]].any()]
    if dark or len(closed) != 1:
        trapped = sorted({int(k) for c in (dark or closed) for k in c})
        names = ", ".join(scheme.sublevels[k].label for k in trapped)
        raise DarkManifoldError(f"dark manifold: population is trapped in {names}",
                                [scheme.sublevels[k] for k in trapped])
    gamma = rm.gamma
    An = A / gamma
    row = int(closed[0][-1])
    M = An.copy()
    M[row, :] = 1.0
    rhs = np.zeros(len(A))
    rhs[row] = 1.0
    try:
        rho = np.linalg.solve(M, rhs)
        # one step of iterative refinement
        rho += np.linalg.solve(M, rhs - M @ rho)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"singular rate system: {exc}") from exc
    if rho.min() < -1e-12:
        raise NumericalFailure(f"negative population {rho.min():.3g} in stationary solution")
    rho = np.clip(rho, 0.0, None)
    rho /= rho.sum()
    residual = float(np.max(np.abs(A @ rho)))
    if not residual <= 1e-10 * gamma:
        raise NumericalFailure(f"stationary residual {residual:.3g} exceeds 1e-10 Gamma")
    return PopulationVector(rho, residual)


def force(rm: RateMatrix, rho) -> ForceVector:
    """Scattering force ``sum_L hbar k_L sum_ij gamma_ij^L (rho_j - rho_i)`` in newton."""
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    scheme = rm.scheme
    diff = rho[scheme.lower_index][None, :] - rho[scheme.upper_index][:, None]
    net = np.einsum("lab,ab->l", rm.stim, diff)  # net absorption rate per beam
    k = rm.system.arrays.kvec
    per_beam = hbar * k * net[:, None]
    F = per_beam.sum(axis=0) if len(per_beam) else np.zeros(3)
    return ForceVector(F, per_beam)


def steady_force(system: MOTSystem, r, v, t: float = 0.0) -> np.ndarray:
    rm = rate_matrix(system, r, v, t)
    return force(rm, steady_populations(rm)).F


@dataclass(frozen=True)
class LowSatResult:
    force: float
    diagnostics: tuple = field(default_factory=tuple)

    def __float__(self):
        return self.force


def force_low_sat(system: MOTSystem, z: float, v: float) -> LowSatResult:
    """Low-saturation 1D force along z, weighting each lower sublevel's
    spontaneous inflow by its imbalance between +z and -z beams::

        F = sum_j (P_j^+ - P_j^-)/(g_j^+ + g_j^-) * sum_i Gamma_ij rho_i

    with ``g_j^pm`` the summed stimulated rates of lower sublevel j from
    beams travelling along +/-z and ``P_j^pm`` the same sums weighted by
    ``hbar |k_L|``. Populations are the full stationary solution.
    """
    beams = system.beams
    kz = system.arrays.kvec[:, 2]
    if np.any(np.abs(system.arrays.kvec[:, :2]) > 1e-12 * np.abs(kz).max(initial=1.0)) or np.any(kz == 0):
        raise ValueError("force_low_sat needs a 1D layout with every beam along +/-z")
    rm = rate_matrix(system, [0.0, 0.0, z], [0.0, 0.0, v])
    rho = steady_populations(rm).rho
    scheme = system.scheme
    plus = kz > 0
    per_lower = rm.stim.sum(axis=1)                       # (nb, nl)
    g_plus = per_lower[plus].sum(axis=0)
    g_minus = per_lower[~plus].sum(axis=0)
    p_plus = (hbar * kz[plus, None] * per_lower[plus]).sum(axis=0)
    p_minus = (hbar * np.abs(kz[~plus])[:, None] * per_lower[~plus]).sum(axis=0)
    inflow = rm.spont.T @ rho[scheme.upper_index]         # sum_i Gamma_ij rho_i
    total = 0.0
    diags = []
    for b, j in enumerate(scheme.lower_index):
        den = g_plus[b] + g_minus[b]
        if den == 0.0:
            if inflow[b] > 0 or rho[j] > 0:
                diags.append(f"{scheme.sublevels[j].label}: no stimulated coupling, term dropped")
            continue
        total += (p_plus[b] - p_minus[b]) / den * inflow[b]
    return LowSatResult(float(total), tuple(diags))
