"""Billiard tables with circular scatterers and horns; flight, reflection, map.

Angle conventions, fixed throughout the package:

* theta is the boundary position, counterclockwise from the +x axis of the
  obstacle centre, normalised to [0, 2*pi).
* an outgoing velocity is the outward normal rotated counterclockwise by phi.
* an incoming angle is the angle from the outward normal to the reversed
  velocity, so specular reflection is phi_out = -phi_in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _kernels as K
from .errors import ConfigError, DomainError, InfiniteHorizonError, RangeError, TrappedError
from .profile_horn import HornProfile, delta_theta, tmax
from .quadrature import DEFAULT_QUADRATURE, QuadratureSettings

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    radius: float
    beta: float | None = None  # None: hard scatterer

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ConfigError(f"obstacle radius must be positive, got {self.radius}")
        if self.beta is not None and not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError(f"horn beta must be positive, got {self.beta}")

    @property
    def is_horn(self) -> bool:
        return self.beta is not None

    @property
    def profile(self) -> HornProfile:
        if self.beta is None:
            raise DomainError("hard scatterers have no horn profile")
        return HornProfile(self.beta, self.radius)


@dataclass(frozen=True)
class TableConfig:
    kind: Literal["torus", "rectangle"]
    width: float
    height: float
    obstacles: tuple[Obstacle, ...]
    length_cap: float | None = None
    _arrays: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("torus", "rectangle"):
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("domain sides must be positive")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not self.obstacles:
            raise ConfigError("a table needs at least one obstacle")
        for k, ob in enumerate(self.obstacles):
            (x, y), r = ob.center, ob.radius
            if self.kind == "torus":
                # disks may wrap around; centres live in one fundamental domain
                inside = 0 <= x < self.width and 0 <= y < self.height
            else:
                inside = r <= x <= self.width - r and r <= y <= self.height - r
            if not inside:
                raise ConfigError(f"obstacle {k} does not fit inside the fundamental domain")
        cap = self.length_cap if self.length_cap is not None else 100.0 * max(self.width, self.height)
        object.__setattr__(self, "length_cap", float(cap))
        arrays = (
            np.array([o.center[0] for o in self.obstacles]),
            np.array([o.center[1] for o in self.obstacles]),
            np.array([o.radius for o in self.obstacles]),
            np.array([o.beta or 0.0 for o in self.obstacles]),
            0 if self.kind == "torus" else 1,
            float(self.width), float(self.height), float(cap),
        )
        object.__setattr__(self, "_arrays", arrays)

    @property
    def arrays(self):
        """(cx, cy, rad, beta, kind, width, height, cap) for the compiled kernels."""
        return self._arrays

    @property
    def radii(self) -> np.ndarray:
        return self._arrays[2]

    @property
    def horn_indices(self) -> list[int]:
        return [k for k, o in enumerate(self.obstacles) if o.is_horn]

    def free_area(self) -> float:
        return self.width * self.height - math.pi * float(np.sum(self.radii ** 2))

    def perimeter(self) -> float:
        return TWO_PI * float(np.sum(self.radii))


@dataclass(frozen=True)
class CollisionCoord:
    obstacle: int
    theta: float
    phi: float
    side: Literal["incoming", "outgoing"] = "outgoing"

    def __post_init__(self):
        if not -0.5 * math.pi <= self.phi <= 0.5 * math.pi:
            raise DomainError(f"phi={self.phi} outside [-pi/2, pi/2]")
        if self.side not in ("incoming", "outgoing"):
            raise DomainError(f"side must be incoming or outgoing, got {self.side!r}")
        object.__setattr__(self, "theta", self.theta % TWO_PI)


@dataclass(frozen=True)
class FlightResult:
    hit: CollisionCoord
    tau: float
    wall_bounces: int


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    min_gap: float
    tau_min: float
    tau_max: float
    samples: int
    warnings: tuple[str, ...]


def check_disjoint(config: TableConfig) -> float:
    """Smallest gap between obstacle closures (over torus images); raises on overlap."""
    obs = config.obstacles
    shifts = [(0.0, 0.0)]
    if config.kind == "torus":
        shifts = [(m * config.width, n * config.height) for m in (-1, 0, 1) for n in (-1, 0, 1)]
    gap = math.inf
    for a in range(len(obs)):
        for b in range(a, len(obs)):
            for dx, dy in shifts:
                if a == b and dx == 0.0 and dy == 0.0:
                    continue
                d = math.hypot(obs[b].center[0] + dx - obs[a].center[0],
                               obs[b].center[1] + dy - obs[a].center[1])
                g = d - obs[a].radius - obs[b].radius
                if g <= 0.0:
                    raise ConfigError(f"obstacles {a} and {b} overlap (gap {g:.6g})")
                gap = min(gap, g)
    if config.kind == "rectangle":
        for k, o in enumerate(obs):
            (x, y), r = o.center, o.radius
            g = min(x - r, config.width - x - r, y - r, config.height - y - r)
            if g <= 0.0:
                raise ConfigError(f"obstacle {k} touches a wall")
    return gap


def validate_table(config: TableConfig, n_theta: int = 256, n_phi: int = 129) -> ValidationReport:
    """Disjointness (exact) and flight-time range (grid ray casting)."""
    gap = check_disjoint(config)
    warnings = []
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    th = np.linspace(0.0, TWO_PI, n_theta, endpoint=False)
    # interior grid avoids exact grazing
    ph = np.linspace(-0.5 * math.pi, 0.5 * math.pi, n_phi + 2)[1:-1]
    taus = []
    misses = 0
    for i in range(len(config.obstacles)):
        T, P = np.meshgrid(th, ph, indexing="ij")
        for t, p in zip(T.ravel(), P.ravel()):
            j, _, _, tau, _, st = K.flight(cx, cy, rad, kind, w, h, cap, i, t, p)
            if st == K.HORIZON:
                misses += 1
            else:
                taus.append(tau)
    if misses:
        warnings.append(f"{misses} sampled rays found no obstacle within {cap:g}: infinite horizon")
    else:
        warnings.append("finite horizon is supported by sampling only, not proven")
    taus = np.asarray(taus)
    tau_min = float(taus.min()) if taus.size else math.inf
    tau_max = float(taus.max()) if taus.size else math.inf
    return ValidationReport(misses == 0, gap, tau_min, tau_max, int(taus.size) + misses, tuple(warnings))


def _check_index(config: TableConfig, k: int):
    if not 0 <= k < len(config.obstacles):
        raise DomainError(f"no obstacle with index {k}")


def flight(config: TableConfig, out: CollisionCoord) -> FlightResult:
    if out.side != "outgoing":
        raise DomainError("flight starts from an outgoing coordinate")
    _check_index(config, out.obstacle)
    cx, cy, rad, _, kind, w, h, cap = config.arrays
    j, th, ph, tau, bounces, st = K.flight(cx, cy, rad, kind, w, h, cap, out.obstacle, out.theta, out.phi)
    if st == K.HORIZON:
        raise InfiniteHorizonError(f"no obstacle hit within length {cap:g}")
    return FlightResult(CollisionCoord(int(j), th, ph, "incoming"), tau, int(bounces))


def reflect(obstacle: Obstacle, inc: CollisionCoord,
            q: QuadratureSettings = DEFAULT_QUADRATURE) -> CollisionCoord:
    """Specular rule at scatterers; at horns theta advances by delta_theta(-phi_in)."""
    if inc.side != "incoming":
        raise DomainError("reflect expects an incoming coordinate")
    if not obstacle.is_horn:
        return CollisionCoord(inc.obstacle, inc.theta, -inc.phi, "outgoing")
    if inc.phi == 0.0:
        raise TrappedError("head-on horn entry: the particle never leaves")
    shift = delta_theta(obstacle.profile, -inc.phi, q)
    return CollisionCoord(inc.obstacle, (inc.theta + shift) % TWO_PI, -inc.phi, "outgoing")


def sojourn(obstacle: Obstacle, inc: CollisionCoord, q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    if not obstacle.is_horn:
        return 0.0
    return 2.0 * tmax(obstacle.profile, inc.phi, q)


def billiard_map(config: TableConfig, x: CollisionCoord,
                 q: QuadratureSettings = DEFAULT_QUADRATURE) -> tuple[CollisionCoord, float, float]:
    """T = R o F.  Returns (T(x), flight time, horn sojourn)."""
    fr = flight(config, x)
    ob = config.obstacles[fr.hit.obstacle]
    return reflect(ob, fr.hit, q), fr.tau, sojourn(ob, fr.hit, q)


def step_fast(config: TableConfig, x: CollisionCoord) -> tuple[CollisionCoord, float, float]:
    """billiard_map through the compiled fixed-mesh excursion evaluator."""
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    j, th, ph, tau, soj, _, _, st = K.step(cx, cy, rad, beta, kind, w, h, cap, x.obstacle, x.theta, x.phi)
    _raise_status(st)
    return CollisionCoord(int(j), th, ph), tau, soj


def _raise_status(st: int):
    if st == K.TRAPPED:
        raise TrappedError("head-on horn entry: the particle never leaves")
    if st == K.HORIZON:
        raise InfiniteHorizonError("no obstacle hit within the length cap")
    if st == K.UNDERFLOW:
        raise RangeError("horn entry too close to head-on for double precision")


def reference_config() -> TableConfig:
    """2x2 torus: scatterer r=0.4 at (0.5, 0.5), beta=1.5 horn r=0.8 at (1.5, 1.5)."""
    return TableConfig("torus", 2.0, 2.0, (
        Obstacle((0.5, 0.5), 0.4),
        Obstacle((1.5, 1.5), 0.8, 1.5),
    ))
