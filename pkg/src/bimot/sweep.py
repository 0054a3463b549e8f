"""Force maps over position/velocity grids and trap metrics.

Sign convention: a restoring force gives positive stiffness
``kappa = -dF/dz`` and positive damping ``alpha = -dF/dv`` at the origin.
Maps hold accelerations along z (m/s^2); positions run along the z axis
and velocities are along z.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.constants import hbar

from .kmc import estimate_force
from .steady import steady_force
from .system import MOTSystem

__all__ = ["ForceMap", "TrapMetrics", "GridPointError", "InsufficientCoverage", "sweep",
           "trap_metrics", "default_grid", "zeeman_length", "doppler_velocity", "AXES"]

AXES = ("z_at_v0", "v_at_z0", "full_grid")


class GridPointError(RuntimeError):
    """A solver error raised while evaluating one grid point."""

    def __init__(self, point, cause: BaseException):
        super().__init__(f"at grid point {point}: {type(cause).__name__}: {cause}")
        self.point = point
        self.cause = cause


class InsufficientCoverage(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ForceMap:
    """Accelerations sampled on a grid.

    For ``full_grid`` maps ``grid`` is ``(z, v)`` and ``values`` has shape
    ``(len(z), len(v))``; otherwise ``grid`` is one 1D array.
    """
    axis: str
    grid: object
    values: np.ndarray
    sigma: Optional[np.ndarray]
    method: str
    provenance: str = ""

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown map axis {self.axis!r}")
        axes = self.grid if self.axis == "full_grid" else (self.grid,)
        for g in axes:
            if len(g) == 0 or np.any(np.diff(g) <= 0):
                raise ValueError("grid must be nonempty and strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("force map contains non-finite values")

    def scaled(self, factor: float) -> "ForceMap":
        sig = None if self.sigma is None else self.sigma * abs(factor)
        return ForceMap(self.axis, self.grid, self.values * factor, sig, self.method, self.provenance)

    def cut(self, which: str) -> "ForceMap":
        """1D cut of a full grid through the origin of the other coordinate."""
        if self.axis != "full_grid":
            return self
        z, v = self.grid
        if which == "z_at_v0":
            j = _origin_index(v)
            vals, sig = self.values[:, j], None if self.sigma is None else self.sigma[:, j]
            return ForceMap("z_at_v0", z, vals, sig, self.method, self.provenance)
        i = _origin_index(z)
        vals, sig = self.values[i, :], None if self.sigma is None else self.sigma[i, :]
        return ForceMap("v_at_z0", v, vals, sig, self.method, self.provenance)


@dataclass(frozen=True)
class TrapMetrics:
    """``slope`` is kappa (position maps) or alpha (velocity maps).

    ``capture_range`` is the half-width of the largest symmetric interval
    around the origin on which every sampled force is restoring;
    ``extent`` gives the one-sided extents (negative side, positive side).
    """
    axis: str
    slope: float
    peak: float
    capture_range: float
    extent: tuple

    @property
    def kappa(self) -> float:
        if self.axis != "z_at_v0":
            raise AttributeError("stiffness is only defined for position maps")
        return self.slope

    @property
    def alpha(self) -> float:
        if self.axis != "v_at_z0":
            raise AttributeError("damping is only defined for velocity maps")
        return self.slope


def zeeman_length(system: MOTSystem) -> float:
    """Distance along z over which the largest Zeeman shift of a driven line
    reaches one linewidth (m)."""
    c = system.arrays
    coupled = np.any(c.f > 0, axis=0)
    zmax = float(np.max(np.abs(c.zeeman[coupled]))) if coupled.any() else 0.0
    b = abs(system.field.gradient)
    if zmax == 0 or b == 0:
        raise ValueError("no Zeeman-sensitive driven line: position scale undefined")
    return system.gamma / (zmax * b)


def doppler_velocity(system: MOTSystem) -> float:
    """Velocity whose Doppler shift is one linewidth (m/s)."""
    return system.gamma / system.wavenumber


def default_grid(system: MOTSystem, axis: str, n: int = 81) -> np.ndarray:
    """Molecular (C2-) schemes: +/-10 mm and +/-15 m/s. Other schemes:
    Zeeman or Doppler shifts spanning +/-3 Gamma."""
    molecular = system.scheme.name.startswith("c2minus")
    if axis == "z_at_v0":
        span = 10e-3 if molecular else 3 * zeeman_length(system)
    elif axis == "v_at_z0":
        span = 15.0 if molecular else 3 * doppler_velocity(system)
    else:
        raise ValueError("default_grid takes a single axis")
    return np.linspace(-span, span, n)


def _points(axis, grid):
    if axis == "z_at_v0":
        return [((0.0, 0.0, float(z)), (0.0, 0.0, 0.0)) for z in grid]
    if axis == "v_at_z0":
        return [((0.0, 0.0, 0.0), (0.0, 0.0, float(v))) for v in grid]
    z, v = grid
    return [((0.0, 0.0, float(a)), (0.0, 0.0, float(b))) for a in z for b in v]


def _eval_steady(args):
    system, idx, pts = args
    out = np.empty(len(pts))
    for n, (r, v) in enumerate(pts):
        try:
            out[n] = steady_force(system, r, v)[2] / system.mass
        except Exception as exc:  # annotate and re-raise with the coordinates
            raise GridPointError({"index": idx[n], "r": r, "v": v}, exc) from exc
    return out


def _eval_kmc(args):
    system, idx, pts, kw = args
    a = np.empty(len(pts))
    s = np.empty(len(pts))
    for n, (r, v) in enumerate(pts):
        try:
            est = estimate_force(system, r, v, stream=idx[n], **kw)
        except Exception as exc:
            raise GridPointError({"index": idx[n], "r": r, "v": v}, exc) from exc
        a[n], s[n] = est.a[2], est.sigma[2]
    return a, s


def sweep(system: MOTSystem, axis: str, grid, method: str = "steady", *, n_traj: int = 1000,
          T="auto", seed: int = 0, relax: str = "propagate", jobs: int = 1,
          provenance: str = "") -> ForceMap:
    """Evaluate the z acceleration at every grid point.

    KMC points use independent random streams keyed by the point's index, so
    a map does not depend on ``jobs`` or evaluation order.
    """
    if axis not in AXES:
        raise ValueError(f"unknown map axis {axis!r}; choose from {AXES}")
    if axis == "full_grid":
        grid = (np.asarray(grid[0], dtype=float), np.asarray(grid[1], dtype=float))
        shape = (len(grid[0]), len(grid[1]))
    else:
        grid = np.asarray(grid, dtype=float)
        shape = (len(grid),)
    pts = _points(axis, grid)
    if not pts:
        raise ValueError("grid is empty")
    idx = list(range(len(pts)))
    nchunk = max(1, min(jobs, len(pts)))
    bounds = np.linspace(0, len(pts), nchunk + 1).astype(int)
    parts = [(idx[a:b], pts[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if method == "steady":
        tasks = [(system, i, p) for i, p in parts]
        results = _dispatch(_eval_steady, tasks, jobs)
        values = np.concatenate(results).reshape(shape)
        sigma = None
    elif method == "kmc":
        kw = dict(T=T, n_traj=n_traj, rng_seed=seed, relax=relax)
        tasks = [(system, i, p, kw) for i, p in parts]
        results = _dispatch(_eval_kmc, tasks, jobs)
        values = np.concatenate([r[0] for r in results]).reshape(shape)
        sigma = np.concatenate([r[1] for r in results]).reshape(shape)
    else:
        raise ValueError(f"unknown method {method!r}; choose 'steady' or 'kmc'")
    return ForceMap(axis, grid, values, sigma, method, provenance)


def _dispatch(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _origin_index(x, rel_tol: float = 1e-9) -> int:
    x = np.asarray(x, dtype=float)
    span = float(x[-1] - x[0]) if len(x) > 1 else 1.0
    i = int(np.argmin(np.abs(x)))
    if abs(x[i]) > rel_tol * span:
        raise InsufficientCoverage("grid does not contain the origin")
    return i


def _derivative_weights(x, x0):
    """Finite-difference weights for the first derivative at ``x0``."""
    x = np.asarray(x, dtype=float) - x0
    n = len(x)
    V = np.vander(x, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


def trap_metrics(fmap: ForceMap, axis: Optional[str] = None) -> TrapMetrics:
    """Slope at the origin (5-point central difference), peak |a| and the
    sign-based capture range of a 1D map (or a cut of a full grid)."""
    if fmap.axis == "full_grid":
        if axis is None:
            raise ValueError("choose a cut ('z_at_v0' or 'v_at_z0') for a full grid")
        fmap = fmap.cut(axis)
    x = np.asarray(fmap.grid, dtype=float)
    F = np.asarray(fmap.values, dtype=float)
    if len(x) < 5:
        raise InsufficientCoverage(f"need at least 5 grid points around the origin, have {len(x)}")
    i0 = _origin_index(x)
    if i0 < 2 or i0 + 2 >= len(x):
        raise InsufficientCoverage("need two grid points on each side of the origin")
    sl = slice(i0 - 2, i0 + 3)
    slope = -float(_derivative_weights(x[sl], x[i0]) @ F[sl])
    peak = float(np.max(np.abs(F)))
    restoring = F * x < 0
    right = 0.0
    for j in range(i0 + 1, len(x)):
        if not restoring[j]:
            break
        right = x[j]
    left = 0.0
    for j in range(i0 - 1, -1, -1):
        if not restoring[j]:
            break
        left = -x[j]
    return TrapMetrics(fmap.axis, slope, peak, float(min(left, right)), (float(left), float(right)))
