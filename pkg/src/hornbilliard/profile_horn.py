"""Geometry and excursion integrals of a Torricelli trumpet r(z) = z**(-beta).

A particle entering the horn at incidence angle ``phi0`` (measured from the
inward meridian, positive = counterclockwise tangential velocity) climbs to
the apex and comes back down.  Three quantities summarise the excursion:

* ``tmax``         time from the boundary circle to the apex,
* ``delta_theta``  net rotation of the boundary position (entry to exit),
* ``kappa``        d(delta_theta)/d(phi0).

All integrals are written in the variable alpha with sin(alpha) = u, where
u = r0 |sin phi0| / r(z); this removes the 1/sqrt(1 - u^2) endpoint
singularity and turns the lower limit into |phi0| itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, RangeError, TrappedError
from .quadrature import DEFAULT_QUADRATURE, QuadratureSettings, geometric_edges, integrate

HALF_PI = 0.5 * math.pi
# b * log(1/|sin phi0|) beyond this overflows the rotation integrand
_MAX_LOG_SCALE = 700.0


@dataclass(frozen=True)
class HornProfile:
    beta: float
    r0: float
    z0: float = field(init=False)

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not (self.r0 > 0 and math.isfinite(self.r0)):
            raise DomainError(f"r0 must be positive, got {self.r0}")
        object.__setattr__(self, "z0", self.r0 ** (-1.0 / self.beta))

    @property
    def rotation_exponent(self) -> float:
        """b = (1 + beta)/beta, the blow-up rate of delta_theta at phi0 -> 0."""
        return (1.0 + self.beta) / self.beta


@dataclass(frozen=True)
class ExcursionSolution:
    tmax: float
    dtheta: float
    kappa: float
    phi0: float


@dataclass(frozen=True)
class AsymptoticConstants:
    i0: float
    j0: float
    kappa_grazing: float
    rotation_exponent: float


class ProfileValues(NamedTuple):
    r: float
    r_prime: float
    r_second: float
    gauss_curvature: float


@dataclass(frozen=True)
class HornMetrics:
    """Surface area and enclosed volume; ``inf`` marks a divergent integral."""

    area: float
    volume: float
    area_partial: float
    volume_partial: float
    z_cut: float


@dataclass(frozen=True)
class OracleSolution:
    """Result of direct geodesic integration (see :func:`geodesic_oracle`)."""

    tmax: float
    dtheta: float
    total_time: float
    exit_angle: float
    clairaut_residual: float
    speed_drift: float
    steps: int
    phi0: float


def profile_eval(profile: HornProfile, z: float) -> ProfileValues:
    if z < profile.z0 * (1.0 - 1e-15):
        raise DomainError(f"z={z} below the boundary height z0={profile.z0}")
    b = profile.beta
    r = z ** (-b)
    rp = -b * z ** (-(1.0 + b))
    rpp = b * (1.0 + b) * z ** (-(2.0 + b))
    kg = -rpp / (r * (1.0 + rp * rp) ** 2)
    return ProfileValues(r, rp, rpp, kg)


def _tail_exponent(f, w1: float, w2: float) -> float:
    return math.log(f(w1) / f(w2)) / math.log(w1 / w2)


def horn_metrics(profile: HornProfile, w_min: float = 1e-12,
                 q: QuadratureSettings = DEFAULT_QUADRATURE) -> HornMetrics:
    """Area 2*pi*int r sqrt(1+r'^2) dz and volume pi*int r^2 dz over [z0, inf).

    With z = z0/w the range becomes w in (0, 1].  The integral over
    [w_min, 1] is computed by quadrature; the power-law exponent p of the
    integrand at w -> 0 decides convergence (p > -1) and supplies the
    analytic remainder over [0, w_min].
    """
    beta, z0 = profile.beta, profile.z0

    def area_w(w):
        z = z0 / w
        rp = -beta * z ** (-(1.0 + beta))
        return 2.0 * math.pi * z ** (-beta) * np.sqrt(1.0 + rp * rp) * z0 / (w * w)

    def volume_w(w):
        z = z0 / w
        return math.pi * z ** (-2.0 * beta) * z0 / (w * w)

    edges = geometric_edges(w_min, 1.0)
    out = []
    for f in (area_w, volume_w):
        partial, _, _ = integrate(f, edges, q)
        p = _tail_exponent(lambda w: float(f(np.array(w))), w_min, 0.1 * w_min)
        if p <= -1.0 + 1e-6:
            out.append((math.inf, partial))
        else:
            out.append((partial + float(f(np.array(w_min))) * w_min / (p + 1.0), partial))
    (area, area_p), (vol, vol_p) = out
    return HornMetrics(area, vol, area_p, vol_p, z0 / w_min)


def _check_angle(phi0: float) -> float:
    if not math.isfinite(phi0) or abs(phi0) > HALF_PI * (1.0 + 1e-15):
        raise DomainError(f"incidence angle {phi0} outside [-pi/2, pi/2]")
    if phi0 == 0.0:
        raise TrappedError("head-on entry (phi0 = 0): the geodesic never returns")
    return min(abs(phi0), HALF_PI)


def _rotation_parts(profile: HornProfile, a: float):
    """Return (s, b, B, root(alpha), rho^b(alpha)) for lower limit a = |phi0|."""
    b = profile.rotation_exponent
    s = math.sin(a)
    if b * math.log(1.0 / s) > _MAX_LOG_SCALE:
        raise RangeError(f"|phi0|={a:.3g} too close to head-on for double precision")
    big_b = profile.beta * profile.r0 ** b

    def rho_b(alpha):
        return np.exp(b * np.log(np.sin(alpha) / s))

    def root(alpha):
        rb = rho_b(alpha)
        return rb * np.sqrt(1.0 + (big_b / rb) ** 2)

    return s, b, big_b, root, rho_b


def tmax(profile: HornProfile, phi0: float,
         q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """Time from the boundary circle to the apex of the excursion."""
    a = _check_angle(phi0)
    if a >= HALF_PI:
        return 0.0
    s, b, _, root, _ = _rotation_parts(profile, a)
    # s / sin^2 stays finite where 1 / sin^2 alone would overflow
    val, _, _ = integrate(lambda al: root(al) * (s / np.sin(al)) / np.sin(al), geometric_edges(a, HALF_PI), q)
    return val / profile.beta * profile.r0 ** (-1.0 / profile.beta)


def delta_theta(profile: HornProfile, phi0: float,
                q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """Signed rotation of the boundary position over one excursion."""
    a = _check_angle(phi0)
    if a >= HALF_PI:
        return 0.0
    _, b, _, root, _ = _rotation_parts(profile, a)
    val, _, _ = integrate(root, geometric_edges(a, HALF_PI), q)
    return math.copysign(2.0 / profile.beta * profile.r0 ** (-b) * val, phi0)


def kappa_grazing(profile: HornProfile) -> float:
    b = profile.rotation_exponent
    return -2.0 * math.sqrt(1.0 + profile.beta ** -2 * profile.r0 ** (-2.0 * b))


def kappa(profile: HornProfile, phi0: float,
          q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """d(delta_theta)/d(phi0); even in phi0 and always below kappa_grazing < -2."""
    if phi0 == 0.0:
        raise DomainError("kappa diverges to -inf at phi0 = 0")
    a = _check_angle(phi0)
    k_inf = kappa_grazing(profile)
    if a >= HALF_PI:
        return k_inf
    _, b, big_b, _, rho_b = _rotation_parts(profile, a)

    def weight(alpha):
        rb = rho_b(alpha)
        return rb / np.sqrt(1.0 + (big_b / rb) ** 2)

    val, _, _ = integrate(weight, geometric_edges(a, HALF_PI), q)
    return k_inf - 2.0 * b / profile.beta * profile.r0 ** (-b) * val / math.tan(a)


def excursion(profile: HornProfile, phi0: float,
              q: QuadratureSettings = DEFAULT_QUADRATURE) -> ExcursionSolution:
    return ExcursionSolution(tmax(profile, phi0, q), delta_theta(profile, phi0, q),
                             kappa(profile, phi0, q), phi0)


def kappa_prime(profile: HornProfile, phi0: float, rel_step: float = 1e-5,
                q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """dkappa/dphi0 by Richardson-extrapolated central differences.

    The step is ``rel_step * |phi0|`` (capped so the stencil stays inside
    (0, pi/2) on the side of phi0).
    """
    a = abs(phi0)
    if phi0 == 0.0:
        raise DomainError("kappa' undefined at phi0 = 0")
    h = rel_step * min(a, HALF_PI - a if a < HALF_PI else a)
    if h <= 0.0:
        h = rel_step * a

    def cd(step):
        return (kappa(profile, phi0 + step, q) - kappa(profile, phi0 - step, q)) / (2.0 * step)

    d1, d2 = cd(h), cd(0.5 * h)
    return (4.0 * d2 - d1) / 3.0


def _sin_power_integral(p: float) -> float:
    """int_0^{pi/2} sin(a)**p da for p > -1."""
    return 0.5 * math.sqrt(math.pi) * math.exp(math.lgamma(0.5 * (p + 1.0)) - math.lgamma(0.5 * p + 1.0))


def asymptotic_constants(profile: HornProfile) -> AsymptoticConstants:
    """Leading-order constants as phi0 -> 0 and the grazing limit of kappa.

    tmax ~ i0 |sin phi0|^(-1/beta),  delta_theta ~ 2 j0 |sin phi0|^(-b).
    """
    beta, r0 = profile.beta, profile.r0
    b = profile.rotation_exponent
    i0 = _sin_power_integral((1.0 - beta) / beta) / (beta * r0 ** (1.0 / beta))
    j0 = _sin_power_integral(b) / (beta * r0 ** b)
    return AsymptoticConstants(i0, j0, kappa_grazing(profile), b)


def geodesic_oracle(profile: HornProfile, phi0: float, step: float = 1e-4,
                    time_cap: float | None = None) -> OracleSolution:
    """Integrate the geodesic equations on the horn with fixed-step RK4.

    Independent of the quadrature path.  Starts on the boundary circle at
    unit speed and stops at the first return to z = z0, located by
    bisection on the final step length.
    """
    from ._kernels import geodesic_rk4

    if phi0 == 0.0:
        raise TrappedError("head-on entry (phi0 = 0): the geodesic never returns")
    if abs(phi0) >= HALF_PI:
        raise DomainError("the oracle needs |phi0| < pi/2")
    if time_cap is None:
        predicted = asymptotic_constants(profile).i0 * abs(math.sin(phi0)) ** (-1.0 / profile.beta)
        time_cap = 10.0 * max(predicted, 1.0)
    res = geodesic_rk4(profile.beta, profile.r0, phi0, step, time_cap)
    total, theta, exit_angle, clairaut, drift, nsteps, ok = res
    if not ok:
        raise TrappedError(f"no return to the boundary within time {time_cap:.4g}")
    return OracleSolution(0.5 * total, theta, total, exit_angle, clairaut, drift, int(nsteps), phi0)


def strip_boundary(profile: HornProfile, k: float,
                   q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """The phi in (0, pi/2) with |delta_theta(phi)| = 2*pi*k."""
    if k <= 0:
        raise DomainError("k must be positive")
    target = 2.0 * math.pi * k
    c = asymptotic_constants(profile)
    # bracket around the leading-order guess 2 j0 s^-b = target
    guess = math.asin(min(1.0, (target / (2.0 * c.j0)) ** (-1.0 / c.rotation_exponent)))
    lo, hi = 0.5 * guess, min(HALF_PI, 2.0 * guess)
    if lo < 1e-250:
        raise RangeError(f"strip {k} lies below representable angles")
    f = lambda phi: delta_theta(profile, phi, q) - target
    while f(lo) < 0.0:
        lo *= 0.5
        if lo < 1e-250:
            raise RangeError(f"strip {k} lies below representable angles")
    while hi < HALF_PI and f(hi) > 0.0:
        hi = min(HALF_PI, 2.0 * hi)
    from scipy.optimize import brentq

    return brentq(f, lo, hi, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=200)


def strip_boundaries(profile: HornProfile, k: int,
                     q: QuadratureSettings = DEFAULT_QUADRATURE) -> tuple[float, float]:
    """Trace of the k-th homogeneity strip on the positive side: (phi_lo, phi_hi).

    |delta_theta| runs from 2*pi*(k+1) at phi_lo down to 2*pi*k at phi_hi;
    the strip at -k is the mirror image.
    """
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")
    return strip_boundary(profile, k + 1, q), strip_boundary(profile, k, q)
