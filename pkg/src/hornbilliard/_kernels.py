"""Compiled inner loops: excursion integrals, ray casting, map iteration.

Obstacles are passed as parallel arrays (cx, cy, rad, beta) with beta = 0
marking a hard scatterer.  The domain is (kind, width, height, cap) with
kind 0 = torus, 1 = reflecting rectangle.

Status codes returned by the stepping routines:
    0 ok, 1 trapped (head-on horn entry), 2 no hit within the length cap,
    3 horn entry too close to head-on for double precision.
"""
import math

import numpy as np
from numba import njit

from .quadrature import KRONROD_WEIGHTS, NODES

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi
OK, TRAPPED, HORIZON, UNDERFLOW = 0, 1, 2, 3

_X = NODES.copy()
_W = KRONROD_WEIGHTS.copy()
# geometric panel ratio for the fixed-mesh excursion evaluator
_PANEL_RATIO = 1.5


@njit(cache=True, nogil=True)
def excursion_fast(beta, r0, a):
    """(|dtheta|, tmax, kappa) at |phi0| = a on a fixed geometric K15 mesh."""
    b = (1.0 + beta) / beta
    big_b = beta * r0 ** b
    kg = -2.0 * math.sqrt(1.0 + 1.0 / (big_b * big_b))
    if a >= HALF_PI:
        return 0.0, 0.0, kg
    s = math.sin(a)
    if b * math.log(1.0 / s) > 700.0:
        return math.inf, math.inf, -math.inf
    n = max(1, int(math.ceil(math.log(HALF_PI / a) / math.log(_PANEL_RATIO))))
    ratio = (HALF_PI / a) ** (1.0 / n)
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    lo = a
    for p in range(n):
        hi = HALF_PI if p == n - 1 else lo * ratio
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        for k in range(15):
            al = mid + half * _X[k]
            sa = math.sin(al)
            rb = math.exp(b * math.log(sa / s))
            q = big_b / rb
            g = math.sqrt(1.0 + q * q)
            wk = _W[k] * half
            root = rb * g
            s1 += wk * root
            s2 += wk * root / (sa * sa)
            s3 += wk * rb / g
        lo = hi
    scale = r0 ** (-b) / beta
    dth = 2.0 * scale * s1
    tm = s / beta * r0 ** (-1.0 / beta) * s2
    kap = kg - 2.0 * b * scale * s3 / math.tan(a)
    return dth, tm, kap


@njit(cache=True, nogil=True)
def rotation_difference(beta, r0, a1, a2):
    """|dtheta|(a1) - |dtheta|(a2) for 0 < a1, a2 < pi/2 without cancellation.

    Writing f_a(alpha) = sqrt((sin alpha / sin a)^(2b) + B^2), the difference
    is int_{a1}^{a2} f_{a1} + int_{a2}^{pi/2} (f_{a1} - f_{a2}), and the second
    integrand equals X2 * expm1(2b log(sin a2 / sin a1)) / (f_{a1} + f_{a2}).
    """
    if a1 == a2:
        return 0.0
    if a1 > a2:
        return -rotation_difference(beta, r0, a2, a1)
    if a2 > 2.0 * a1 or a2 >= HALF_PI:
        return excursion_fast(beta, r0, a1)[0] - excursion_fast(beta, r0, a2)[0]
    b = (1.0 + beta) / beta
    big_b = beta * r0 ** b
    s1 = math.sin(a1)
    s2 = math.sin(a2)
    dl = math.log1p(2.0 * math.cos(0.5 * (a1 + a2)) * math.sin(0.5 * (a2 - a1)) / s1)
    e = math.expm1(2.0 * b * dl)
    part1 = 0.0
    npan = 4
    width = (a2 - a1) / npan
    for p in range(npan):
        half = 0.5 * width
        mid = a1 + (p + 0.5) * width
        for k in range(15):
            al = mid + half * _X[k]
            rb = math.exp(b * math.log(math.sin(al) / s1))
            q = big_b / rb
            part1 += _W[k] * half * rb * math.sqrt(1.0 + q * q)
    part2 = 0.0
    n = max(1, int(math.ceil(math.log(HALF_PI / a2) / math.log(_PANEL_RATIO))))
    ratio = (HALF_PI / a2) ** (1.0 / n)
    lo = a2
    for p in range(n):
        hi = HALF_PI if p == n - 1 else lo * ratio
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        for k in range(15):
            al = mid + half * _X[k]
            x2 = math.exp(2.0 * b * math.log(math.sin(al) / s2))
            f2 = math.sqrt(x2 + big_b * big_b)
            f1 = math.sqrt(x2 * (1.0 + e) + big_b * big_b)
            part2 += _W[k] * half * x2 / (f1 + f2)
        lo = hi
    return 2.0 / beta * r0 ** (-b) * (part1 + e * part2)


# ---------------------------------------------------------------- geodesics

@njit(cache=True, nogil=True)
def _geo_rhs(beta, y):
    z, th, zd, thd = y[0], y[1], y[2], y[3]
    r = z ** (-beta)
    rp = -beta * z ** (-(1.0 + beta))
    rpp = beta * (1.0 + beta) * z ** (-(2.0 + beta))
    zdd = (r * rp * thd * thd - rp * rpp * zd * zd) / (1.0 + rp * rp)
    thdd = -2.0 * rp * zd * thd / r
    out = np.empty(4)
    out[0] = zd
    out[1] = thd
    out[2] = zdd
    out[3] = thdd
    return out


@njit(cache=True, nogil=True)
def _rk4(beta, y, h):
    k1 = _geo_rhs(beta, y)
    k2 = _geo_rhs(beta, y + 0.5 * h * k1)
    k3 = _geo_rhs(beta, y + 0.5 * h * k2)
    k4 = _geo_rhs(beta, y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True, nogil=True)
def _diagnostics(beta, y):
    z = y[0]
    r = z ** (-beta)
    rp = -beta * z ** (-(1.0 + beta))
    g = 1.0 + rp * rp
    speed = math.sqrt(g * y[2] * y[2] + r * r * y[3] * y[3])
    return r * r * y[3] / speed, speed, r, g


@njit(cache=True, nogil=True)
def geodesic_rk4(beta, r0, phi0, h, time_cap):
    """Unit-speed geodesic from the boundary circle until it first returns.

    Returns (time, winding, exit_angle, max Clairaut residual,
    max speed drift, steps, returned).
    """
    z0 = r0 ** (-1.0 / beta)
    rp0 = -beta * z0 ** (-(1.0 + beta))
    y = np.empty(4)
    y[0] = z0
    y[1] = 0.0
    y[2] = math.cos(phi0) / math.sqrt(1.0 + rp0 * rp0)
    y[3] = math.sin(phi0) / r0
    c0 = r0 * math.sin(phi0)
    t = 0.0
    clairaut = 0.0
    drift = 0.0
    steps = 0
    while t < time_cap:
        yn = _rk4(beta, y, h)
        steps += 1
        if yn[0] < z0 and yn[2] < 0.0:
            lo = 0.0
            hi = h
            for _ in range(80):
                m = 0.5 * (lo + hi)
                if _rk4(beta, y, m)[0] < z0:
                    hi = m
                else:
                    lo = m
            ye = _rk4(beta, y, 0.5 * (lo + hi))
            t += 0.5 * (lo + hi)
            rs, speed, r, g = _diagnostics(beta, ye)
            clairaut = max(clairaut, abs(rs - c0))
            drift = max(drift, abs(speed - 1.0))
            ang = math.atan2(-r * ye[3], -math.sqrt(g) * ye[2])
            return t, ye[1], ang, clairaut, drift, steps, True
        y = yn
        t += h
        rs, speed, r, g = _diagnostics(beta, y)
        clairaut = max(clairaut, abs(rs - c0))
        drift = max(drift, abs(speed - 1.0))
    return t, y[1], math.nan, clairaut, drift, steps, False


# -------------------------------------------------------------- ray casting

@njit(cache=True, nogil=True)
def _image(kind, w, h, m, n, x, y):
    if kind == 0:
        return x + m * w, y + n * h
    if m % 2 != 0:
        xi = (m + 1) * w - x
    else:
        xi = m * w + x
    if n % 2 != 0:
        yi = (n + 1) * h - y
    else:
        yi = n * h + y
    return xi, yi


@njit(cache=True, nogil=True)
def _test_cell(cx, cy, rad, kind, w, h, m, n, src, px, py, vx, vy, best):
    """Closest hit among the obstacle images of cell (m, n); best = (t, j, m, n)."""
    bt, bj, bm, bn = best
    for j in range(cx.shape[0]):
        if j == src and m == 0 and n == 0:
            continue
        ox, oy = _image(kind, w, h, m, n, cx[j], cy[j])
        dx = px - ox
        dy = py - oy
        bq = dx * vx + dy * vy
        if bq >= 0.0:
            continue
        cq = dx * dx + dy * dy - rad[j] * rad[j]
        disc = bq * bq - cq
        if disc <= 1e-14 * rad[j] * rad[j]:
            continue
        t = cq / (-bq + math.sqrt(disc))
        if t > 0.0 and t < bt:
            bt, bj, bm, bn = t, j, m, n
    return bt, bj, bm, bn


@njit(cache=True, nogil=True)
def _search(cx, cy, rad, kind, w, h, cap, i, theta, phi):
    """Nearest obstacle image along the ray: (t, j, m, n, px, py, vx, vy)."""
    px = cx[i] + rad[i] * math.cos(theta)
    py = cy[i] + rad[i] * math.sin(theta)
    vx = math.cos(theta + phi)
    vy = math.sin(theta + phi)
    cell = min(w, h)
    # disks may stick out of their cell by up to rmax (torus wrap-around)
    slack = 2.0 * np.max(rad)
    best = (math.inf, -1, 0, 0)
    L = 0
    while True:
        if L == 0:
            best = _test_cell(cx, cy, rad, kind, w, h, 0, 0, i, px, py, vx, vy, best)
        else:
            for m in range(-L, L + 1):
                best = _test_cell(cx, cy, rad, kind, w, h, m, -L, i, px, py, vx, vy, best)
                best = _test_cell(cx, cy, rad, kind, w, h, m, L, i, px, py, vx, vy, best)
            for n in range(-L + 1, L):
                best = _test_cell(cx, cy, rad, kind, w, h, -L, n, i, px, py, vx, vy, best)
                best = _test_cell(cx, cy, rad, kind, w, h, L, n, i, px, py, vx, vy, best)
        if best[0] <= L * cell - slack or L * cell - slack > cap:
            break
        L += 1
    t, j, m, n = best
    return t, j, m, n, px, py, vx, vy


@njit(cache=True, nogil=True)
def target_image(cx, cy, rad, kind, w, h, cap, i, theta, phi):
    """(obstacle, cell m, cell n) of the next collision; obstacle -1 if none within cap."""
    t, j, m, n, _, _, _, _ = _search(cx, cy, rad, kind, w, h, cap, i, theta, phi)
    if t > cap:
        return -1, 0, 0
    return j, m, n


@njit(cache=True, nogil=True)
def flight(cx, cy, rad, kind, w, h, cap, i, theta, phi):
    """Fly from outgoing (i, theta, phi).  Returns (j, theta_j, phi_in, tau, bounces, status)."""
    t, j, m, n, px, py, vx, vy = _search(cx, cy, rad, kind, w, h, cap, i, theta, phi)
    if t > cap:
        return -1, 0.0, 0.0, math.inf, 0, HORIZON
    ox, oy = _image(kind, w, h, m, n, cx[j], cy[j])
    rx = px + t * vx - ox
    ry = py + t * vy - oy
    if kind == 1:
        if m % 2 != 0:
            rx = -rx
            vx = -vx
        if n % 2 != 0:
            ry = -ry
            vy = -vy
    th = math.atan2(ry, rx)
    if th < 0.0:
        th += TWO_PI
    if th >= TWO_PI:
        th -= TWO_PI
    ux = rx / rad[j]
    uy = ry / rad[j]
    # incoming angle: from the normal to the reversed velocity
    ph = math.atan2(-(ux * vy - uy * vx), -(ux * vx + uy * vy))
    bounces = abs(m) + abs(n) if kind == 1 else 0
    return j, th, ph, t, bounces, OK


@njit(cache=True, nogil=True)
def reflect(beta, r0, theta, phi_in):
    """Outgoing (theta, phi, sojourn, kappa, status) at an obstacle."""
    if beta == 0.0:
        return theta, -phi_in, 0.0, 0.0, OK
    if phi_in == 0.0:
        return theta, 0.0, math.inf, -math.inf, TRAPPED
    dth, tm, kap = excursion_fast(beta, r0, min(abs(phi_in), HALF_PI))
    if not math.isfinite(dth):
        return theta, -phi_in, math.inf, -math.inf, UNDERFLOW
    # the rotation follows the sign of the outgoing angle
    if phi_in > 0.0:
        dth = -dth
    th = theta + dth
    th -= TWO_PI * math.floor(th / TWO_PI)
    if th < 0.0:
        th += TWO_PI
    if th >= TWO_PI:
        th = 0.0
    return th, -phi_in, 2.0 * tm, kap, OK


@njit(cache=True, nogil=True)
def step(cx, cy, rad, beta, kind, w, h, cap, i, theta, phi):
    """One application of the billiard map.

    Returns (j, theta', phi', tau, sojourn, phi_in, kappa, status).
    """
    j, thj, phin, tau, _, st = flight(cx, cy, rad, kind, w, h, cap, i, theta, phi)
    if st != OK:
        return -1, 0.0, 0.0, tau, 0.0, 0.0, 0.0, st
    tho, pho, soj, kap, st = reflect(beta[j], rad[j], thj, phin)
    return j, tho, pho, tau, soj, phin, kap, st


# ---------------------------------------------------------------- batches

@njit(cache=True, nogil=True)
def map_batch(cx, cy, rad, beta, kind, w, h, cap, idx, th, ph):
    n = idx.shape[0]
    oi = np.empty(n, np.int64)
    oth = np.empty(n)
    oph = np.empty(n)
    otau = np.empty(n)
    osoj = np.empty(n)
    ost = np.empty(n, np.int64)
    for k in range(n):
        j, t2, p2, tau, soj, _, _, st = step(cx, cy, rad, beta, kind, w, h, cap, idx[k], th[k], ph[k])
        oi[k] = j
        oth[k] = t2
        oph[k] = p2
        otau[k] = tau
        osoj[k] = soj
        ost[k] = st
    return oi, oth, oph, otau, osoj, ost


@njit(cache=True, nogil=True)
def orbit_run(cx, cy, rad, beta, kind, w, h, cap, i, theta, phi, n_steps, time_limit):
    """Iterate the map; stop after n_steps or once flow time reaches time_limit."""
    oi = np.empty(n_steps + 1, np.int64)
    oth = np.empty(n_steps + 1)
    oph = np.empty(n_steps + 1)
    otau = np.zeros(n_steps + 1)
    osoj = np.zeros(n_steps + 1)
    oi[0] = i
    oth[0] = theta
    oph[0] = phi
    t = 0.0
    k = 0
    status = OK
    while k < n_steps and t < time_limit:
        j, t2, p2, tau, soj, _, _, st = step(cx, cy, rad, beta, kind, w, h, cap, i, theta, phi)
        if st != OK:
            status = st
            break
        k += 1
        oi[k] = j
        oth[k] = t2
        oph[k] = p2
        otau[k] = tau
        osoj[k] = soj
        t += tau + soj
        i, theta, phi = j, t2, p2
    return oi[:k + 1], oth[:k + 1], oph[:k + 1], otau[:k + 1], osoj[:k + 1], status


@njit(cache=True, nogil=True)
def occupation_run(cx, cy, rad, beta, kind, w, h, cap, i, theta, phi, horn, times):
    """Time spent in obstacle ``horn`` up to each flow time in sorted ``times``."""
    nt = times.shape[0]
    out = np.zeros(nt)
    t = 0.0
    occ = 0.0
    k = 0
    while k < nt:
        j, t2, p2, tau, soj, _, _, st = step(cx, cy, rad, beta, kind, w, h, cap, i, theta, phi)
        if st != OK:
            return out, st
        # free flight: not inside the horn
        t1 = t + tau
        while k < nt and times[k] <= t1:
            out[k] = occ
            k += 1
        t = t1
        t1 = t + soj
        ind = 1.0 if j == horn else 0.0
        while k < nt and times[k] <= t1:
            out[k] = occ + ind * (times[k] - t)
            k += 1
        occ += ind * soj
        t = t1
        i, theta, phi = j, t2, p2
    return out, OK


@njit(cache=True, nogil=True)
def tangent_step(ri, phi_i, tau, rj, phi_j, kap):
    """Analytic DT in (dtheta, dphi) coordinates; phi_i outgoing, phi_j incoming."""
    cj = math.cos(phi_j)
    a = -(ri * math.cos(phi_i) + tau) / (rj * cj)
    bb = -tau / (rj * cj)
    m00 = a + kap * (a - 1.0)
    m01 = bb + kap * (bb - 1.0)
    return m00, m01, a - 1.0, bb - 1.0
