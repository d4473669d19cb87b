"""Suspension flow over the billiard map: heights, orbits, horn occupation, tails.

The roof function is h = tau + sojourn, the free flight time plus the time
2*tmax spent inside a horn (zero at scatterers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numba import njit
from scipy.optimize import brentq

from . import _kernels as K
from .errors import DomainError, RangeError
from .profile_horn import HornProfile, asymptotic_constants, tmax
from .quadrature import DEFAULT_QUADRATURE, QuadratureSettings, geometric_edges, integrate
from .table import CollisionCoord, TableConfig, billiard_map, flight, sojourn

HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class HeightSample:
    tau: float
    sojourn: float

    @property
    def h(self) -> float:
        return self.tau + self.sojourn


@dataclass(frozen=True)
class OrbitRecord:
    obstacle: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    tau: np.ndarray  # tau[k], sojourn[k]: the step that produced point k
    sojourn: np.ndarray
    time: np.ndarray  # cumulative flow time at each collision
    termination: Literal["completed", "trapped", "horizon_error"]

    def __len__(self):
        return len(self.obstacle)


def sample_mu_arrays(config: TableConfig, rng: np.random.Generator, n: int):
    """n draws from the invariant measure: (obstacle, theta, phi) arrays."""
    r = config.radii
    idx = rng.choice(len(r), size=n, p=r / r.sum()).astype(np.int64)
    th = rng.random(n) * (2.0 * math.pi)
    ph = np.arcsin(2.0 * rng.random(n) - 1.0)
    return idx, th, ph


def sample_mu(config: TableConfig, rng: np.random.Generator) -> CollisionCoord:
    i, th, ph = sample_mu_arrays(config, rng, 1)
    return CollisionCoord(int(i[0]), float(th[0]), float(ph[0]))


def height(config: TableConfig, x: CollisionCoord, q: QuadratureSettings = DEFAULT_QUADRATURE) -> HeightSample:
    fr = flight(config, x)
    return HeightSample(fr.tau, sojourn(config.obstacles[fr.hit.obstacle], fr.hit, q))


def pushforward(config: TableConfig, idx, th, ph):
    """Apply the map to arrays of outgoing points; returns (obstacle, theta, phi, tau, sojourn, status)."""
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    return K.map_batch(cx, cy, rad, beta, kind, w, h, cap,
                       np.ascontiguousarray(idx, dtype=np.int64), np.ascontiguousarray(th, dtype=float),
                       np.ascontiguousarray(ph, dtype=float))


_TERMINATION = {K.OK: "completed", K.TRAPPED: "trapped", K.UNDERFLOW: "trapped", K.HORIZON: "horizon_error"}


def orbit(config: TableConfig, x0: CollisionCoord, n_collisions: int | None = None,
          flow_time: float | None = None) -> OrbitRecord:
    """Iterate the map from x0 until n_collisions or until the flow time is reached."""
    if n_collisions is None and flow_time is None:
        raise DomainError("give n_collisions and/or flow_time")
    if n_collisions is None:
        # a flow time needs at most flow_time / tau_min collisions; grow if short
        n_collisions = 1024
        grow = True
    else:
        grow = False
    limit = math.inf if flow_time is None else float(flow_time)
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    while True:
        oi, oth, oph, otau, osoj, st = K.orbit_run(cx, cy, rad, beta, kind, w, h, cap,
                                                  x0.obstacle, x0.theta, x0.phi, int(n_collisions), limit)
        t = np.cumsum(otau + osoj)
        if grow and st == K.OK and t[-1] < limit:
            n_collisions *= 4
            continue
        return OrbitRecord(oi, oth, oph, otau, osoj, t, _TERMINATION[st])


def horn_occupation(config: TableConfig, x0: CollisionCoord, T, horn: int) -> np.ndarray | float:
    """Flow time spent inside obstacle ``horn`` during [0, T] (T scalar or sorted array).

    The excursion straddling T is counted linearly up to T.  Returns NaN
    for an orbit that gets trapped.
    """
    ob = config.obstacles[horn]
    if ob.is_horn and ob.beta <= 1.0:
        raise DomainError("occupation needs beta > 1 (finite mean sojourn)")
    times = np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(np.diff(times) < 0):
        raise DomainError("times must be sorted")
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    out, st = K.occupation_run(cx, cy, rad, beta, kind, w, h, cap, x0.obstacle, x0.theta, x0.phi, horn, times)
    if st != K.OK:
        out = np.full_like(times, np.nan)
    return float(out[0]) if np.ndim(T) == 0 else out


# ------------------------------------------------------------------- means

@njit(cache=True)
def _tmax_vec(beta, r0, phis):
    out = np.empty(phis.shape)
    flat = phis.ravel()
    o = out.ravel()
    for k in range(flat.shape[0]):
        o[k] = K.excursion_fast(beta, r0, flat[k])[1]
    return out


def mean_excursion(profile: HornProfile, q: QuadratureSettings = DEFAULT_QUADRATURE,
                   cut: float = 1e-14) -> float:
    """E[2 tmax] for an incoming angle with density cos(phi)/2 on [-pi/2, pi/2].

    Finite only for beta > 1; the piece below ``cut`` uses the leading-order
    tmax ~ i0 phi^(-1/beta).
    """
    if profile.beta <= 1.0:
        return math.inf
    f = lambda p: 2.0 * _tmax_vec(profile.beta, profile.r0, p) * np.cos(p)
    body, _, _ = integrate(f, geometric_edges(cut, HALF_PI), q)
    e = 1.0 - 1.0 / profile.beta
    tail = 2.0 * asymptotic_constants(profile).i0 * cut ** e / e
    return body + tail


def mean_flight(config: TableConfig) -> float:
    """E[tau] = pi |free area| / |boundary length|."""
    return math.pi * config.free_area() / config.perimeter()


def mean_sojourn(config: TableConfig, horn: int, q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """E[sojourn in obstacle ``horn`` per collision]."""
    ob = config.obstacles[horn]
    if not ob.is_horn:
        return 0.0
    r = config.radii
    return r[horn] / r.sum() * mean_excursion(ob.profile, q)


def mean_height(config: TableConfig, q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    return mean_flight(config) + sum(mean_sojourn(config, k, q) for k in config.horn_indices)


def occupation_rate(config: TableConfig, horn: int, q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """Long-run fraction of flow time spent inside ``horn``."""
    return mean_sojourn(config, horn, q) / mean_height(config, q)


# ------------------------------------------------------------------- tails

@dataclass(frozen=True)
class TailRow:
    t: float
    s_star: float
    asymptote_ratio: float


def _solve_tail(profile: HornProfile, t: float, q: QuadratureSettings) -> float:
    c = asymptotic_constants(profile)
    f = lambda p: 2.0 * tmax(profile, p, q) - t
    guess = min(1.0, (t / (2.0 * c.i0)) ** (-profile.beta))
    lo = 0.5 * math.asin(guess)
    hi = min(HALF_PI, 2.0 * math.asin(guess))
    while f(lo) < 0.0:
        lo *= 0.25
        if lo < 1e-300:
            raise RangeError(f"t={t:g} needs an angle below double precision")
    while hi < HALF_PI and f(hi) > 0.0:
        hi = min(HALF_PI, 2.0 * hi)
    phi = brentq(f, lo, hi, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=300)
    return math.sin(phi)


def tail_profile(profile: HornProfile, t_grid, q: QuadratureSettings = DEFAULT_QUADRATURE) -> list[TailRow]:
    """Exact tail mu(2 tmax > t) = s* with 2 tmax(asin s*) = t, against the power law.

    ratio = s* / (t / (2 i0))^(-beta), which tends to 1 as t grows.
    """
    c = asymptotic_constants(profile)
    rows = []
    for t in t_grid:
        t = float(t)
        if not t > 0.0:
            raise RangeError("tail thresholds must be positive")
        s = _solve_tail(profile, t, q)
        rows.append(TailRow(t, s, s / (t / (2.0 * c.i0)) ** (-profile.beta)))
    return rows
