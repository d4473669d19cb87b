"""Derivative cocycle of the billiard map, cones, Lyapunov exponents and
hyperbolicity diagnostics.

Tangent vectors are (dtheta, dphi) in outgoing coordinates.  With
phi_i the outgoing angle at obstacle i and phi_j the incoming angle at the
next obstacle j, the flight derivative is built from

    a = -(r_i cos phi_i + tau) / (r_j cos phi_j),   c = -tau / (r_j cos phi_j)

and the map derivative is  DT = [[1, kappa], [0, 1]] . [[a, c], [a-1, c-1]]
with kappa = 0 at scatterers.  Its determinant is r_i cos phi_i / (r_j cos phi_j).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from . import _kernels as K
from .errors import BilliardError, DomainError, NearGrazingError, SingularityCrossing
from .profile_horn import HornProfile, kappa, kappa_grazing, kappa_prime, strip_boundaries
from .quadrature import DEFAULT_QUADRATURE, QuadratureSettings, integrate
from .table import CollisionCoord, FlightResult, TableConfig, flight, validate_table

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TangentMatrix:
    """2x2 derivative acting on (dtheta, dphi).

    ``det_value`` carries a determinant computed at higher working precision
    than the stored entries; near head-on horn entries the matrix is so close
    to singular that the determinant of the rounded entries is meaningless.
    """

    entries: np.ndarray
    det_value: float | None = None

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float).reshape(2, 2)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def det(self) -> float:
        if self.det_value is not None:
            return self.det_value
        e = self.entries
        return float(e[0, 0] * e[1, 1] - e[0, 1] * e[1, 0])

    @property
    def det_condition(self) -> float:
        """(|a d| + |b c|) / |det|: digits lost when forming the determinant."""
        e = self.entries
        return float((abs(e[0, 0] * e[1, 1]) + abs(e[0, 1] * e[1, 0])) / abs(self.det))

    def __matmul__(self, other: "TangentMatrix") -> "TangentMatrix":
        return TangentMatrix(self.entries @ other.entries)


@dataclass(frozen=True)
class Cone:
    """Quadrant cone: unstable means dtheta*dphi >= 0, stable means <= 0."""

    unstable: bool = True

    def contains(self, v) -> bool:
        p = v[0] * v[1]
        return p >= 0 if self.unstable else p <= 0


def _flight_blocks(ri, phi_i, tau, rj, phi_j):
    cj = math.cos(phi_j)
    if cj < 1e-12:
        raise NearGrazingError(f"grazing arrival (cos phi = {cj:.3g})")
    a = -(ri * math.cos(phi_i) + tau) / (rj * cj)
    c = -tau / (rj * cj)
    return a, c


def dflight(config: TableConfig, out: CollisionCoord, nxt: FlightResult) -> TangentMatrix:
    """Derivative of the flight map from outgoing (theta, phi) to incoming (theta, phi)."""
    a, c = _flight_blocks(config.radii[out.obstacle], out.phi, nxt.tau,
                          config.radii[nxt.hit.obstacle], nxt.hit.phi)
    return TangentMatrix([[a, c], [1.0 - a, 1.0 - c]])


def dmap(config: TableConfig, x: CollisionCoord, q: QuadratureSettings = DEFAULT_QUADRATURE) -> TangentMatrix:
    """Analytic derivative of the billiard map at an outgoing coordinate."""
    fr = flight(config, x)
    ob = config.obstacles[fr.hit.obstacle]
    a, c = _flight_blocks(config.radii[x.obstacle], x.phi, fr.tau, ob.radius, fr.hit.phi)
    kap = kappa(ob.profile, fr.hit.phi, q) if ob.is_horn else 0.0
    return TangentMatrix([[a + kap * (a - 1.0), c + kap * (c - 1.0)], [a - 1.0, c - 1.0]])


# ------------------------------------------------------------ finite differences

def _wrap(d):
    return (d + math.pi) % TWO_PI - math.pi


def _step_fast(config, i, th, ph):
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    return K.step(cx, cy, rad, beta, kind, w, h, cap, i, th, ph)


def _flight_fast(config, i, th, ph):
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    return K.flight(cx, cy, rad, kind, w, h, cap, i, th, ph)


def _pair_difference(config, x, e, h, base_j):
    """T(x + h e) - T(x - h e) as (dtheta, dphi).

    The horn rotation enters only through the difference of its values at
    the two incoming angles, evaluated as one integral; subtracting two
    large rotations would lose eps*|dtheta| in absolute terms.
    """
    ends = []
    for sgn in (1.0, -1.0):
        ph = x.phi + sgn * h * e[1]
        if abs(ph) >= HALF_PI:
            raise SingularityCrossing("stencil leaves the phase space")
        j, thj, phin, _, _, st = _flight_fast(config, x.obstacle, x.theta + sgn * h * e[0], ph)
        if st != K.OK:
            raise SingularityCrossing(f"stencil point failed with status {st}")
        if j != base_j:
            raise SingularityCrossing("stencil straddles a change of target obstacle")
        ends.append((thj, phin))
    (tp, pp), (tm, pm) = ends
    dth = _wrap(tp - tm)
    ob = config.obstacles[base_j]
    if ob.is_horn:
        if pp == 0.0 or pm == 0.0 or (pp > 0) != (pm > 0):
            raise SingularityCrossing("stencil straddles a head-on entry")
        # theta_out = theta_in + dtheta(-phi_in); |dtheta| is even, sign(-phi_in)
        dth -= math.copysign(1.0, pp) * K.rotation_difference(ob.beta, ob.radius, abs(pp), abs(pm))
    return dth, -(pp - pm)


def _central(config, x, h, base_j):
    cols = [_pair_difference(config, x, e, h, base_j) for e in ((1.0, 0.0), (0.0, 1.0))]
    return np.array([[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]) / (2.0 * h)


def auto_step(config: TableConfig, x: CollisionCoord) -> float:
    """Step keeping the stencil well inside the smooth region around x.

    The downstream incidence angle moves by about |DF| h; it must stay far
    from grazing and, at horns, far from head-on.
    """
    j, _, _, tau, _, phin, _, st = _step_fast(config, x.obstacle, x.theta, x.phi)
    if st != K.OK:
        raise SingularityCrossing(f"base point failed with status {st}")
    rj = config.radii[j]
    a, c = _flight_blocks(config.radii[x.obstacle], x.phi, tau, rj, phin)
    spread = abs(a) + abs(c) + 2.0
    room = min(math.cos(phin), HALF_PI - abs(x.phi))
    if config.obstacles[j].is_horn:
        room = min(room, abs(phin))
    return 1e-3 * room / spread


def _central_mp(config, x, h, image, dps):
    import mpmath as mp

    from ._precise import flight_mp, rotation_mp

    j, m, n = image
    ob = config.obstacles[j]
    cols = []
    with mp.workdps(dps):
        hh = mp.mpf(h)
        for e in ((1, 0), (0, 1)):
            ends = [flight_mp(config, x.obstacle, x.theta + sg * hh * e[0], x.phi + sg * hh * e[1], j, m, n)
                    for sg in (1, -1)]
            (tp, pp), (tm, pm) = ends
            dth = tp - tm
            dth -= 2 * mp.pi * mp.nint(dth / (2 * mp.pi))
            if ob.is_horn:
                if mp.sign(pp) != mp.sign(pm) or pp == 0:
                    raise SingularityCrossing("stencil straddles a head-on entry")
                dth -= mp.sign(pp) * (rotation_mp(ob.beta, ob.radius, abs(pp))
                                      - rotation_mp(ob.beta, ob.radius, abs(pm)))
            cols.append((dth / (2 * hh), -(pp - pm) / (2 * hh)))
        return mp.matrix([[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]])


def _check_images(config, x, h, image):
    cx, cy, rad, _, kind, w, hh, cap = config.arrays
    for dt, dp in ((h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)):
        if K.target_image(cx, cy, rad, kind, w, hh, cap, x.obstacle, x.theta + dt, x.phi + dp) != image:
            raise SingularityCrossing("stencil straddles a change of obstacle image")


def dmap_fd(config: TableConfig, x: CollisionCoord, h: float | None = None,
            richardson: bool = True, precision: str = "auto") -> TangentMatrix:
    """Central-difference Jacobian of the billiard map (Richardson-extrapolated).

    ``precision`` is "double", "high" (mpmath) or "auto", which switches to
    mpmath when the determinant would lose more than 5 digits in double
    precision.  Raises SingularityCrossing when a stencil point changes
    target or fails, or when the two step sizes disagree (a discontinuity
    inside the stencil).
    """
    j0, _, _, _, _, _, _, st = _step_fast(config, x.obstacle, x.theta, x.phi)
    if st != K.OK:
        raise SingularityCrossing(f"base point failed with status {st}")
    if h is None:
        h = auto_step(config, x)
    d1 = _central(config, x, h, j0)
    if not richardson:
        return TangentMatrix(d1)
    d2 = _central(config, x, 0.5 * h, j0)
    scale = np.abs(d2).max()
    if np.abs(d1 - d2).max() > 1e-2 * scale:
        raise SingularityCrossing("difference quotients disagree across step sizes")
    fd = TangentMatrix((4.0 * d2 - d1) / 3.0)
    if precision == "double" or (precision == "auto" and fd.det_condition < 1e5):
        return fd
    import mpmath as mp

    cx, cy, rad, _, kind, w, hh, cap = config.arrays
    image = K.target_image(cx, cy, rad, kind, w, hh, cap, x.obstacle, x.theta, x.phi)
    _check_images(config, x, h, image)
    cond = max(fd.det_condition, 1.0)
    # truncation is amplified by cond as well: shrink the step, add digits
    shrink = min(1.0, 1e3 * (1e-10 / cond) ** 0.25)
    dps = 40 + int(math.log10(cond)) + int(-math.log10(shrink))
    m1 = _central_mp(config, x, h * shrink, image, dps)
    m2 = _central_mp(config, x, 0.5 * h * shrink, image, dps)
    with mp.workdps(dps):
        mr = (4 * m2 - m1) / 3
        det = mr[0, 0] * mr[1, 1] - mr[0, 1] * mr[1, 0]
        entries = [[float(mr[r, c]) for c in range(2)] for r in range(2)]
    return TangentMatrix(entries, float(det))


def cone_check(m: TangentMatrix) -> bool:
    """True iff all four entries share one strict sign (unstable quadrant mapped inside itself)."""
    e = m.entries
    return bool(np.all(e > 0) or np.all(e < 0))


def det_law(config: TableConfig, x: CollisionCoord) -> float:
    """Expected |det DT| = r_i cos phi_i / (r_j cos phi_j) at x."""
    j, _, _, _, _, phin, _, st = _step_fast(config, x.obstacle, x.theta, x.phi)
    if st != K.OK:
        raise SingularityCrossing(f"base point failed with status {st}")
    return config.radii[x.obstacle] * math.cos(x.phi) / (config.radii[j] * math.cos(phin))


def is_regular(config: TableConfig, x: CollisionCoord, margin: float = 1e-4) -> bool:
    """x and its image stay at least ``margin`` from grazing and horn head-on."""
    if abs(x.phi) > HALF_PI - margin:
        return False
    j, _, _, _, _, phin, _, st = _step_fast(config, x.obstacle, x.theta, x.phi)
    if st != K.OK or abs(phin) > HALF_PI - margin:
        return False
    return not (config.obstacles[j].is_horn and abs(phin) < margin)


# ------------------------------------------------------------------ Lyapunov

@njit(cache=True, nogil=True)
def _lyap_batches(cx, cy, rad, beta, kind, w, h, cap, n_steps, n_batches, si, st_, sp, margin):
    out = np.zeros(n_batches)
    done = 0
    used = 0
    hs = HALF_PI - margin
    while done < n_steps:
        if used >= si.shape[0]:
            return out, done, used, False
        i, theta, phi = si[used], st_[used], sp[used]
        used += 1
        u0 = 1.0 / math.sqrt(2.0)
        u1 = u0
        while done < n_steps:
            if abs(phi) > hs:
                break
            j, t2, p2, tau, soj, phin, kap, status = K.step(cx, cy, rad, beta, kind, w, h, cap, i, theta, phi)
            if status != 0 or abs(phin) > hs or (beta[j] > 0.0 and abs(phin) < margin):
                break
            m00, m01, m10, m11 = K.tangent_step(rad[i], phi, tau, rad[j], phin, kap)
            v0 = m00 * u0 + m01 * u1
            v1 = m10 * u0 + m11 * u1
            nrm = math.sqrt(v0 * v0 + v1 * v1)
            out[done * n_batches // n_steps] += math.log(nrm)
            u0 = v0 / nrm
            u1 = v1 / nrm
            done += 1
            i, theta, phi = j, t2, p2
    return out, done, used, True


@dataclass(frozen=True)
class LyapunovResult:
    exponent: float
    stderr: float
    replicas: np.ndarray
    restarts: int

    @property
    def ci95(self) -> tuple[float, float]:
        return self.exponent - 1.96 * self.stderr, self.exponent + 1.96 * self.stderr


def lyapunov(config: TableConfig, n: int, seed: int, replicas: int = 1,
             x0: CollisionCoord | None = None, margin: float = 1e-4,
             workers: int = 1, max_restarts: int = 10_000) -> LyapunovResult:
    """Top Lyapunov exponent per collision from tangent-vector growth.

    Each replica draws its restart points from its own stream
    SeedSequence([seed, replica]).  With one replica the standard error
    comes from 20 batch means; otherwise from the spread across replicas.
    """
    from .suspension import sample_mu_arrays

    if n < 1000:
        raise DomainError("lyapunov needs n >= 1000 iterations")
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    nb = 20

    def run(r):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        si, sth, sph = sample_mu_arrays(config, rng, max_restarts)
        if x0 is not None and r == 0:
            si[0], sth[0], sph[0] = x0.obstacle, x0.theta, x0.phi
        out, done, used, ok = _lyap_batches(cx, cy, rad, beta, kind, w, h, cap, n, nb, si, sth, sph, margin)
        if not ok:
            raise BilliardError(f"replica {r}: all {max_restarts} restarts exhausted")
        return out, used - 1

    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        res = list(ex.map(run, range(replicas)))
    batches = np.array([b for b, _ in res])
    restarts = sum(u for _, u in res)
    per_rep = batches.sum(axis=1) / n
    if replicas > 1:
        lam = float(per_rep.mean())
        se = float(per_rep.std(ddof=1) / math.sqrt(replicas))
    else:
        bm = batches[0] / (n / nb)
        lam = float(per_rep[0])
        se = float(bm.std(ddof=1) / math.sqrt(nb))
    return LyapunovResult(lam, se, per_rep, int(restarts))


# ---------------------------------------------------------------- distortion

@njit(cache=True)
def _kappa_vec(beta, r0, phis):
    out = np.empty(phis.shape)
    flat = phis.ravel()
    o = out.ravel()
    for k in range(flat.shape[0]):
        o[k] = K.excursion_fast(beta, r0, abs(flat[k]))[2]
    return out


@dataclass(frozen=True)
class UnstableCurve:
    """Graph phi -> theta = w(phi) over [phi_lo, phi_hi] given through its slope w'."""

    phi_lo: float
    phi_hi: float
    w_prime: Callable[[np.ndarray], np.ndarray] = field(default=lambda p: np.zeros_like(p))

    def __post_init__(self):
        if not 0.0 < self.phi_lo < self.phi_hi < HALF_PI:
            raise DomainError("curve interval must lie inside (0, pi/2)")


def distortion_check(profile: HornProfile, curve: UnstableCurve, x: float, y: float, k: int,
                     q: QuadratureSettings = DEFAULT_QUADRATURE) -> tuple[float, float]:
    """(log J(y)/J(x), length of R(W) between R(x) and R(y)) for points x, y of W.

    x and y are given by their phi parameters; W must lie inside strip k.
    J = sqrt(1 + (w' + kappa)^2) / sqrt(1 + w'^2) is the expansion of the
    reflection along W.
    """
    lo, hi = strip_boundaries(profile, k, q)
    if curve.phi_lo < lo * (1 - 1e-12) or curve.phi_hi > hi * (1 + 1e-12):
        raise DomainError(f"curve leaves strip {k} = [{lo:.6g}, {hi:.6g}]")
    for p in (x, y):
        if not curve.phi_lo <= p <= curve.phi_hi:
            raise DomainError("points must lie on the curve")
    if x == y:
        return 0.0, 0.0

    def jac(p):
        p = np.asarray(p, dtype=float)
        wp = curve.w_prime(p)
        kap = _kappa_vec(profile.beta, profile.r0, p)
        return np.sqrt(1.0 + (wp + kap) ** 2) / np.sqrt(1.0 + wp * wp)

    lhs = float(np.log(jac(np.array([y]))[0] / jac(np.array([x]))[0]))

    def speed(p):
        wp = curve.w_prime(p)
        return np.sqrt(1.0 + (wp + _kappa_vec(profile.beta, profile.r0, p)) ** 2)

    a, b = sorted((x, y))
    rhs, _, _ = integrate(speed, np.linspace(a, b, 5), q)
    return abs(lhs), rhs


def distortion_ratio(profile: HornProfile, k: int, pairs: int, seed: int,
                     q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """Largest lhs/rhs over random pairs on the straight curve spanning strip k."""
    lo, hi = strip_boundaries(profile, k, q)
    curve = UnstableCurve(lo, hi)
    rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
    best = 0.0
    for _ in range(pairs):
        x, y = rng.uniform(lo, hi, 2)
        lhs, rhs = distortion_check(profile, curve, x, y, k, q)
        if rhs > 0:
            best = max(best, lhs / rhs)
    return best


# ---------------------------------------------------------------- conditions

@dataclass(frozen=True)
class ConditionItem:
    name: str
    passed: bool
    witness: dict


@dataclass(frozen=True)
class ConditionsReport:
    items: tuple[ConditionItem, ...]

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)


def conditions_report(profile: HornProfile, config: TableConfig | None = None,
                      q: QuadratureSettings = DEFAULT_QUADRATURE) -> ConditionsReport:
    """Grid evaluation of the six regularity conditions on the rotation function."""
    near0 = np.geomspace(1e-4, 1e-1, 40)
    near_graze = HALF_PI - np.geomspace(1e-6, 0.5, 40)
    grid = np.unique(np.concatenate([near0, np.linspace(0.1, HALF_PI - 0.5, 30), near_graze]))
    kap = np.array([kappa(profile, p, q) for p in grid])
    omega = (2.0 + kap) / np.cos(grid)
    r0 = profile.r0
    items = []

    gap = float(np.min(np.abs(2.0 + kap)))
    items.append(ConditionItem("inf|2+kappa| > 0", gap > 0,
                               {"inf_abs_2_plus_kappa": gap, "grazing_limit": abs(2.0 + kappa_grazing(profile))}))

    sup2 = float(np.max(-2.0 * r0 * kap / omega))
    tau_min = validate_table(config).tau_min if config is not None else math.nan
    ok2 = sup2 <= 0.0 and (config is None or tau_min > sup2)
    items.append(ConditionItem("tau_min > sup -2 r kappa/omega", ok2, {"sup": sup2, "tau_min": tau_min}))

    kg = kap[grid > HALF_PI - 0.5]
    items.append(ConditionItem("kappa bounded near grazing", bool(np.all(np.isfinite(kg))),
                               {"max_abs_kappa_near_grazing": float(np.max(np.abs(kg)))}))

    kp = np.array([kappa_prime(profile, p, q=q) for p in near0])
    items.append(ConditionItem("kappa piecewise C2 (finite derivative)", bool(np.all(np.isfinite(kp))),
                               {"max_abs_kappa_prime": float(np.max(np.abs(kp)))}))

    k0 = np.array([kappa(profile, p, q) for p in near0])
    ratio = np.abs(kp) / np.abs(2.0 + k0) ** 3
    items.append(ConditionItem("|kappa'| <= C |2+kappa|^3", bool(np.all(np.isfinite(ratio))),
                               {"sup_ratio": float(ratio.max()), "ratio_at_smallest_phi": float(ratio[0])}))

    om0 = (2.0 + k0) / np.cos(near0)
    d = np.diff(om0)
    mono = bool(np.all(d > 0) or np.all(d < 0))
    items.append(ConditionItem("omega monotone near 0", mono,
                               {"omega_min": float(om0.min()), "omega_max": float(om0.max())}))
    return ConditionsReport(tuple(items))


# ---------------------------------------------------------------- head-on

@dataclass(frozen=True)
class HeadOnCurve:
    theta: np.ndarray
    phi: np.ndarray
    residual: np.ndarray
    gaps: np.ndarray


def _downstream(config, i, th, ph, depth):
    """(obstacle, incoming phi) of the depth-th collision after (i, th, ph)."""
    for d in range(depth):
        j, th2, ph2, _, _, phin, _, st = _step_fast(config, i, th, ph)
        if st != K.OK:
            return -1, math.nan
        if d == depth - 1:
            return j, phin
        i, th, ph = j, th2, ph2
    return -1, math.nan


def head_on_curve(config: TableConfig, source: int, target: int, theta_grid,
                  depth: int = 1, n_scan: int = 2001) -> HeadOnCurve:
    """Outgoing angles at ``source`` whose depth-th collision hits ``target`` head-on.

    For each theta a phi-scan locates sign changes of the downstream incidence
    angle among rays reaching the target; each is refined by bisection.  With
    several roots the one closest to phi = 0 is kept.  Thetas without a root
    are listed in ``gaps``.
    """
    if not config.obstacles[target].is_horn:
        raise DomainError("the head-on target must be a horn")
    scan = np.linspace(-HALF_PI, HALF_PI, n_scan + 2)[1:-1]
    th_out, ph_out, res_out, gaps = [], [], [], []
    for th in np.asarray(theta_grid, dtype=float):
        vals = [_downstream(config, source, th, p, depth) for p in scan]
        roots = []
        for k in range(len(scan) - 1):
            (j1, f1), (j2, f2) = vals[k], vals[k + 1]
            if j1 != target or j2 != target or not (f1 * f2 <= 0):
                continue
            lo, hi, flo = scan[k], scan[k + 1], f1
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                jm, fm = _downstream(config, source, th, mid, depth)
                if jm != target:
                    break
                if abs(fm) < 1e-12 or hi - lo < 1e-16:
                    break
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            jm, fm = _downstream(config, source, th, mid, depth)
            if jm == target:
                roots.append((mid, fm))
        if roots:
            p, f = min(roots, key=lambda r: abs(r[0]))
            th_out.append(th)
            ph_out.append(p)
            res_out.append(f)
        else:
            gaps.append(th)
    return HeadOnCurve(np.array(th_out), np.array(ph_out), np.array(res_out), np.array(gaps))
