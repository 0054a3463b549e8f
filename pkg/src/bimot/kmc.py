"""Kinetic Monte Carlo trajectories with photon recoil.

Internal jumps (absorption, stimulated and spontaneous emission) are drawn
with the thinning method: candidate events arrive at a constant ceiling
rate for the current sublevel and are accepted with probability
``rate(r, v, t) / ceiling``. Between events the particle flies ballistically.

Trajectories are simulated in lockstep inside fixed-size chunks so that
NumPy does the per-step work. Each trajectory owns a Philox stream keyed by
``(seed, stream, index)``; no state is shared between trajectories, so
results do not depend on how chunks are distributed over workers.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.constants import hbar, g as g_earth
from scipy.linalg import expm

from .fields import Schedule
from .rates import rate_matrix, stimulated_rates
from .steady import generator
from .system import MU_B, MOTSystem

__all__ = ["TrajectoryState", "Trajectory", "ForceEstimate", "simulate_trajectory",
           "simulate_batch", "BatchResult", "estimate_force", "simulate_switched", "switched_system",
           "auto_duration", "ABSORB", "STIMULATED", "SPONTANEOUS", "CHUNK"]

log = logging.getLogger(__name__)

ABSORB, STIMULATED, SPONTANEOUS, NULL = 0, 1, 2, 3
CHUNK = 256          # trajectories per lockstep batch; fixed so output is independent of --jobs
_BLOCK = 128         # random rows drawn per refill
_GRAVITY = np.array([0.0, 0.0, -g_earth])


@dataclass
class TrajectoryState:
    r: np.ndarray
    v: np.ndarray
    sublevel: int
    t: float = 0.0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.r)) and np.all(np.isfinite(self.v))):
            raise ValueError("trajectory state must be finite")


@dataclass
class Trajectory:
    """Samples of one trajectory.

    ``t, r, v, sublevel`` hold the initial state, every accepted event (or
    every ``sample_dt`` when striding) and the final state. ``events`` lists
    ``(time, kind, channel)`` for each accepted jump and ``kicks`` the
    matching momentum transfers.
    """
    t: np.ndarray
    r: np.ndarray
    v: np.ndarray
    sublevel: np.ndarray
    event_time: np.ndarray
    event_kind: np.ndarray
    event_channel: np.ndarray
    kicks: np.ndarray
    occupancy: np.ndarray  # time spent in each sublevel
    momentum_change: np.ndarray

    @property
    def final(self) -> TrajectoryState:
        return TrajectoryState(self.r[-1], self.v[-1], int(self.sublevel[-1]), float(self.t[-1]))


@dataclass
class ForceEstimate:
    a: np.ndarray
    sigma: np.ndarray
    n_traj: int
    T: float
    diagnostics: tuple = ()


class _Channels:
    """Per-sublevel padded tables of outgoing jumps."""

    def __init__(self, system: MOTSystem):
        c = system.arrays
        scheme = system.scheme
        nb, nu, nl = c.nb, c.nu, c.nl
        n_stim = nb * nu * nl
        self.n_stim = n_stim
        self.zero_col = n_stim + nu * nl
        tables = [[] for _ in range(scheme.n)]
        for a, i in enumerate(scheme.upper_index):
            for b, j in enumerate(scheme.lower_index):
                for L in range(nb):
                    f = c.f[L, a, b]
                    if f <= 0:
                        continue
                    col = L * nu * nl + a * nl + b
                    ceiling = c.beam_ceiling[L] * f
                    tables[j].append((ABSORB, i, col, L, ceiling))
                    tables[i].append((STIMULATED, j, col, L, ceiling))
                if c.decay[a, b] > 0:
                    tables[i].append((SPONTANEOUS, j, n_stim + a * nl + b, -1, c.decay[a, b]))
        width = max(1, max(len(t) for t in tables))
        self.width = width
        self.kind = np.full((scheme.n, width), NULL, dtype=np.int8)
        self.dest = np.zeros((scheme.n, width), dtype=np.int64)
        self.col = np.full((scheme.n, width), self.zero_col, dtype=np.int64)
        self.beam = np.full((scheme.n, width), -1, dtype=np.int64)
        for s, tab in enumerate(tables):
            self.dest[s, :] = s
            for k, (kind, dest, col, L, _) in enumerate(tab):
                self.kind[s, k] = kind
                self.dest[s, k] = dest
                self.col[s, k] = col
                self.beam[s, k] = L
        self.bound = np.array([sum(x[4] for x in tab) for tab in tables])
        self.spont = np.concatenate([c.decay.ravel(), [0.0]])
        # recoil momentum of spontaneous photons per upper->lower pair
        kmag = np.zeros(nu * nl)
        for a, u in enumerate(scheme.uppers):
            for b, l in enumerate(scheme.lowers):
                for link in scheme.links:
                    if link.upper == u.level_id and link.lower == l.level_id:
                        kmag[a * nl + b] = link.wavenumber
        self.spont_k = kmag
        self.beam_k = c.kvec


def _streams(seed: int, stream: int, first: int, count: int):
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError(f"rng seed must be a non-negative integer, got {seed!r}")
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(stream), first + k))))
            for k in range(count)]


class _Uniforms:
    def __init__(self, gens):
        self.gens = gens
        self.buf = np.empty((len(gens), _BLOCK, 4))
        self.ptr = np.full(len(gens), _BLOCK, dtype=np.int64)

    def take(self, idx):
        need = idx[self.ptr[idx] >= _BLOCK]
        for k in need:
            self.buf[k] = self.gens[k].random((_BLOCK, 4))
            self.ptr[k] = 0
        rows = self.buf[idx, self.ptr[idx]]
        self.ptr[idx] += 1
        return rows

    def one(self, idx):
        """Single extra uniform per trajectory (initial-state sampling)."""
        return np.array([self.gens[k].random() for k in idx])


def _lz_speed(system: MOTSystem):
    """Zeeman shift per metre (rad/s/m) of the most field-sensitive line."""
    c = system.arrays
    coupled = np.any(c.f > 0, axis=0)
    if not coupled.any() or system.field.gradient == 0:
        return 0.0
    return float(np.max(np.abs(c.zeeman[coupled]))) * abs(system.field.gradient)


def auto_duration(system: MOTSystem, v0) -> float:
    """Measurement time keeping the Zeeman and Doppler drift to a tenth of
    a linewidth: ``dv <= 0.1 Gamma/k`` and ``dz <= 0.1 Gamma/(zeeman slope)``."""
    gamma, k, m = system.gamma, system.wavenumber, system.mass
    a_max = hbar * k * gamma / (2 * m)
    t_v = 0.1 * (gamma / k) / a_max
    slope = _lz_speed(system)
    if slope == 0:
        return t_v
    dz = 0.1 * gamma / slope
    speed = float(np.linalg.norm(v0))
    # speed*T + a_max*T^2/2 = dz
    t_z = (-speed + math.sqrt(speed * speed + 2 * a_max * dz)) / a_max
    return min(t_v, t_z)


def _drift_check(system, v0, T) -> tuple:
    gamma, k, m = system.gamma, system.wavenumber, system.mass
    a_max = hbar * k * gamma / (2 * m)
    out = []
    if a_max * T > gamma / k:
        out.append(f"T={T:.3g}s: velocity may drift by {a_max * T:.3g} m/s > Gamma/k")
    slope = _lz_speed(system)
    if slope:
        dz = float(np.linalg.norm(v0)) * T + 0.5 * a_max * T * T
        if dz > gamma / slope:
            out.append(f"T={T:.3g}s: position may drift by {dz:.3g} m > Zeeman length")
    return tuple(out)


@dataclass
class _ChunkResult:
    r: np.ndarray
    v: np.ndarray
    sublevel: np.ndarray
    t: np.ndarray
    momentum_change: np.ndarray
    occupancy: np.ndarray
    counts: np.ndarray
    events: Optional[list]


@dataclass
class BatchResult:
    """Final states of independent trajectories.

    ``occupancy[n, k]`` is the time trajectory ``n`` spent in sublevel
    ``k``; ``counts[n]`` holds its (absorption, stimulated emission,
    spontaneous emission) event numbers.
    """
    r: np.ndarray
    v: np.ndarray
    sublevel: np.ndarray
    momentum_change: np.ndarray
    occupancy: np.ndarray
    counts: np.ndarray


def _run_chunk(system: MOTSystem, r0, v0, s0, t0, T, gens, *, frozen=False, record=False,
               max_flight=None, uniforms=None):
    """Advance a chunk of trajectories from ``t0`` to ``t0 + T``.

    Returns final arrays, accumulated recoil momentum and (if ``record``)
    per-trajectory event lists.
    """
    ch = _channels(system)
    n = len(s0)
    # position is evaluated from the last event so free flight adds no
    # round-off: r(t) = r_base + v_base (t - t_base) + g (t - t_base)^2 / 2
    r_base = np.array(r0, dtype=float).reshape(n, 3)
    vstart = np.array(v0, dtype=float).reshape(n, 3)
    s = np.array(s0, dtype=np.int64)
    t = np.full(n, float(t0))
    t_base = t.copy()
    p = np.zeros((n, 3))
    occ = np.zeros((n, system.scheme.n))
    counts = np.zeros((n, 3), dtype=np.int64)  # absorb, stimulated, spontaneous
    t_end = t0 + T
    m = system.mass
    gvec = _GRAVITY if system.gravity and not frozen else np.zeros(3)
    gamma = system.gamma
    cap = 0.1 / gamma if max_flight is None else max_flight
    slope = _lz_speed(system)
    U = uniforms if uniforms is not None else _Uniforms(gens)
    rec = [[] for _ in range(n)] if record else None

    def velocity(idx, when):
        return vstart[idx] + p[idx] / m + gvec * (when - t0)[:, None]

    def position(idx):
        if frozen:
            return r_base[idx]
        tau = (t[idx] - t_base[idx])[:, None]
        return r_base[idx] + velocity(idx, t_base[idx]) * tau + 0.5 * gvec * tau * tau

    active = np.flatnonzero(t < t_end)
    while active.size:
        u = U.take(active)
        st = s[active]
        bound = ch.bound[st]
        with np.errstate(divide="ignore"):
            dt = np.where(bound > 0, -np.log1p(-u[:, 0]) / bound, np.inf)
        remaining = t_end - t[active]
        limit = np.minimum(cap, remaining)
        if slope and not frozen:
            v_now = velocity(active, t[active])
            speed = np.sqrt(np.sum(v_now * v_now, axis=1))
            with np.errstate(divide="ignore"):
                limit = np.minimum(limit, np.where(speed > 0, 0.1 * gamma / (slope * speed), np.inf))
        # a state without outgoing channels can never jump: fly to the end
        limit = np.where(bound > 0, limit, remaining)
        cand = dt < limit
        dt = np.where(cand, dt, limit)
        occ[active, st] += dt
        t[active] += dt
        fin = ~cand & (limit >= remaining)
        t[active[fin]] = t_end

        ci = active[cand]
        if ci.size:
            uc = u[cand]
            rc = position(ci)
            vc = vstart[ci] if frozen else velocity(ci, t[ci])
            stim = stimulated_rates(system, rc, vc, t[ci]).reshape(ci.size, -1)
            spont = np.broadcast_to(ch.spont, (ci.size, ch.spont.size))
            allr = np.concatenate([stim, spont], axis=1)
            cols = ch.col[s[ci]]
            rates = np.take_along_axis(allr, cols, axis=1)
            csum = np.cumsum(rates, axis=1)
            thresh = uc[:, 1] * ch.bound[s[ci]]
            hit = csum > thresh[:, None]
            any_hit = hit.any(axis=1)
            pick = np.argmax(hit, axis=1)
            ev = ci[any_hit]
            if ev.size:
                kpick = pick[any_hit]
                src = s[ev]
                kind = ch.kind[src, kpick]
                beam = ch.beam[src, kpick]
                kick = np.zeros((ev.size, 3))
                absorb = kind == ABSORB
                stimk = kind == STIMULATED
                spk = kind == SPONTANEOUS
                kick[absorb] = hbar * ch.beam_k[beam[absorb]]
                kick[stimk] = -hbar * ch.beam_k[beam[stimk]]
                if spk.any():
                    us = uc[any_hit][spk]
                    cos_t = 2.0 * us[:, 2] - 1.0
                    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
                    phi = 2.0 * math.pi * us[:, 3]
                    kmag = ch.spont_k[ch.col[src[spk], kpick[spk]] - ch.n_stim]
                    # recoil opposite to the emitted photon
                    kick[spk] = -(hbar * kmag)[:, None] * np.stack(
                        [sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
                s[ev] = ch.dest[src, kpick]
                np.add.at(counts, (ev, kind.astype(np.int64)), 1)
                if not frozen:
                    r_base[ev] = rc[any_hit]
                    t_base[ev] = t[ev]
                    p[ev] += kick
                if record:
                    for q, e in enumerate(ev):
                        rec[e].append((t[e], int(kind[q]), int(kpick[q]), kick[q].copy(), r_base[e].copy(),
                                       velocity(np.array([e]), t[[e]])[0], int(s[e])))
        active = active[~fin]
    r = position(np.arange(n))
    vfinal = vstart + p / m + gvec * (t - t0)[:, None]
    return _ChunkResult(r, vfinal, s, t, p, occ, counts, rec)


_channel_cache: dict = {}


def _channels(system: MOTSystem) -> _Channels:
    key = id(system)
    hit = _channel_cache.get(key)
    if hit is None or hit[0] is not system:
        hit = (system, _Channels(system))
        _channel_cache.clear()
        _channel_cache[key] = hit
    return hit[1]


def simulate_batch(system: MOTSystem, states: Sequence[TrajectoryState], T: float, rng_seed: int,
                   *, stream: int = 0, first_index: int = 0, max_flight=None) -> BatchResult:
    """Evolve independent trajectories in lockstep.

    Trajectory ``n`` uses the same random stream as
    ``simulate_trajectory(..., stream=stream)`` would use for index
    ``first_index + n``.
    """
    if not T > 0:
        raise ValueError("duration must be positive")
    if len({st.t for st in states}) > 1:
        raise ValueError("all states of a batch must share the start time")
    gens = _streams(rng_seed, stream, first_index, len(states))
    r0 = np.array([st.r for st in states])
    v0 = np.array([st.v for st in states])
    s0 = np.array([st.sublevel for st in states])
    if np.any((s0 < 0) | (s0 >= system.scheme.n)):
        raise ValueError("sublevel index out of range")
    t0 = states[0].t if states else 0.0
    res = _run_chunk(system, r0, v0, s0, t0, T, gens, max_flight=max_flight)
    return BatchResult(res.r, res.v, res.sublevel, res.momentum_change, res.occupancy, res.counts)


def simulate_trajectory(state0: TrajectoryState, system: MOTSystem, T: float, rng_seed: int,
                        *, stream: int = 0, max_flight=None) -> Trajectory:
    """Event-driven evolution of one particle for a time ``T``.

    The same ``(state0, system, T, rng_seed, stream)`` always produces the
    same trajectory, bit for bit.
    """
    if not T > 0:
        raise ValueError("duration must be positive")
    if not 0 <= state0.sublevel < system.scheme.n:
        raise ValueError(f"sublevel index {state0.sublevel} out of range")
    gens = _streams(rng_seed, stream, 0, 1)
    res = _run_chunk(system, state0.r[None], state0.v[None], [state0.sublevel],
                     state0.t, T, gens, record=True, max_flight=max_flight)
    events = res.events[0]
    ts = [state0.t] + [e[0] for e in events] + [res.t[0]]
    rs = [state0.r] + [e[4] for e in events] + [res.r[0]]
    vs = [state0.v] + [e[5] for e in events] + [res.v[0]]
    ss = [state0.sublevel] + [e[6] for e in events] + [int(res.sublevel[0])]
    kicks = np.array([e[3] for e in events]).reshape(-1, 3)
    return Trajectory(
        t=np.array(ts), r=np.array(rs), v=np.array(vs), sublevel=np.array(ss, dtype=int),
        event_time=np.array([e[0] for e in events]), event_kind=np.array([e[1] for e in events], dtype=int),
        event_channel=np.array([e[2] for e in events], dtype=int), kicks=kicks,
        occupancy=res.occupancy[0], momentum_change=res.momentum_change[0],
    )


def switched_system(system: MOTSystem, set_a: Sequence[int], set_b: Sequence[int], period: float,
                    preserve_average: bool = True) -> MOTSystem:
    """Gate two beam sets with a square wave: ``set_a`` in the first half
    period, ``set_b`` in the second.

    With ``preserve_average`` the on-phase saturation is divided by the duty
    cycle so that each beam keeps its time-averaged intensity.
    """
    beams = list(system.beams)
    if set(set_a) & set(set_b):
        raise ValueError("beam sets must be disjoint")
    out = []
    for n, b in enumerate(beams):
        if n in set_a:
            sched = Schedule(period, 0.0, 0.5)
        elif n in set_b:
            sched = Schedule(period, 0.5, 1.0)
        else:
            out.append(b)
            continue
        s = b.saturation / sched.duty if preserve_average else b.saturation
        out.append(b.replace(schedule=sched, saturation=s))
    return system.with_beams(out)


def simulate_switched(state0: TrajectoryState, system: MOTSystem, T: float, rng_seed: int, **kw) -> Trajectory:
    """Trajectory in a time-gated light field (see :func:`switched_system`).

    This is the ordinary engine; schedules enter through the rates and the
    thinning ceilings already cover the on-phase intensities.
    """
    return simulate_trajectory(state0, system, T, rng_seed, **kw)


def _relaxed_distribution(system: MOTSystem, r0, v0, t_relax):
    rm = rate_matrix(system, r0, v0)
    A = generator(rm)
    p0 = np.zeros(system.scheme.n)
    p0[system.scheme.lower_index] = 1.0 / len(system.scheme.lower_index)
    if t_relax == "auto":
        ev = np.linalg.eigvals(A)
        rates = np.sort(np.abs(ev.real))
        nz = rates[rates > 1e-12 * system.gamma]
        gap = nz[0] if nz.size else system.gamma
        t_relax = min(40.0 / gap, 1e6 / system.gamma)
    p = expm(A * t_relax) @ p0
    p = np.clip(p, 0.0, None)
    return p / p.sum(), t_relax


def _force_chunk(args):
    system, r0, v0, T, seed, stream, first, count, relax, pdist = args
    gens = _streams(seed, stream, first, count)
    U = _Uniforms(gens)
    n = count
    rr = np.tile(r0, (n, 1))
    vv = np.tile(v0, (n, 1))
    if relax == "simulate":
        s0 = np.full(n, int(system.scheme.lower_index[0]))
        s_start = _run_chunk(system, rr, vv, s0, 0.0, pdist, gens, frozen=True, uniforms=U).sublevel
    else:
        u = U.one(np.arange(n))
        cdf = np.cumsum(pdist)
        s_start = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(pdist) - 1)
    res = _run_chunk(system, rr, vv, s_start, 0.0, T, gens, uniforms=U)
    return res.v - vv


def estimate_force(system: MOTSystem, r0, v0, T="auto", n_traj: int = 1000, rng_seed: int = 0, *,
                   stream: int = 0, relax="propagate", relax_time="auto", jobs: int = 1) -> ForceEstimate:
    """Monte Carlo acceleration at ``(r0, v0)``: mean velocity change over a
    short window divided by its length.

    Before the window each trajectory's internal state is relaxed at the
    frozen phase-space point. ``relax="propagate"`` samples it from the
    exact transient propagator ``expm(A t) p0`` (uniform lower-state start);
    ``relax="simulate"`` runs the jump process with motion frozen for
    ``relax_time``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    r0 = np.asarray(r0, dtype=float).reshape(3)
    v0 = np.asarray(v0, dtype=float).reshape(3)
    diags = []
    if T == "auto":
        T = auto_duration(system, v0)
    else:
        T = float(T)
        if not T > 0:
            raise ValueError("duration must be positive")
        diags.extend(_drift_check(system, v0, T))
        for d in diags:
            warnings.warn(d, RuntimeWarning, stacklevel=2)
    if relax == "propagate":
        pdist, _ = _relaxed_distribution(system, r0, v0, relax_time)
    elif relax == "simulate":
        pdist = 200.0 / system.gamma if relax_time == "auto" else float(relax_time)
    else:
        raise ValueError(f"unknown relax mode {relax!r}")
    tasks = []
    for first in range(0, n_traj, CHUNK):
        count = min(CHUNK, n_traj - first)
        tasks.append((system, r0, v0, T, rng_seed, stream, first, count, relax, pdist))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_force_chunk, tasks))
    else:
        parts = [_force_chunk(t) for t in tasks]
    dv = np.concatenate(parts, axis=0)
    a = dv.mean(axis=0) / T
    sigma = (dv.std(axis=0, ddof=1) / math.sqrt(n_traj) / T) if n_traj > 1 else np.zeros(3)
    return ForceEstimate(a, sigma, n_traj, T, tuple(diags))
