"""Multiple-precision evaluation of the billiard map for ill-conditioned stencils.

Near a head-on horn entry the map's Jacobian is almost singular (entries of
size |kappa| against a determinant of order one), so its determinant cannot
be resolved from double-precision differences.  These routines redo one
map evaluation with mpmath, following the obstacle image picked by the
double-precision ray search.
"""
from __future__ import annotations

import mpmath as mp

from . import _kernels as K


def flight_mp(config, i, theta, phi, j, m, n):
    """Incoming (theta_j, phi_in) at image (m, n) of obstacle j, in mp arithmetic."""
    cx, cy, rad, _, kind, w, h, _ = config.arrays
    ri, rj = mp.mpf(rad[i]), mp.mpf(rad[j])
    px = mp.mpf(cx[i]) + ri * mp.cos(theta)
    py = mp.mpf(cy[i]) + ri * mp.sin(theta)
    vx, vy = mp.cos(theta + phi), mp.sin(theta + phi)
    W, H = mp.mpf(w), mp.mpf(h)
    x0, y0 = mp.mpf(cx[j]), mp.mpf(cy[j])
    if kind == 0:
        ox, oy = x0 + m * W, y0 + n * H
    else:
        ox = (m + 1) * W - x0 if m % 2 else m * W + x0
        oy = (n + 1) * H - y0 if n % 2 else n * H + y0
    dx, dy = px - ox, py - oy
    bq = dx * vx + dy * vy
    cq = dx * dx + dy * dy - rj * rj
    disc = bq * bq - cq
    if disc <= 0 or bq >= 0:
        raise ArithmeticError("ray misses the expected obstacle image")
    t = cq / (-bq + mp.sqrt(disc))
    rx, ry = px + t * vx - ox, py + t * vy - oy
    if kind == 1:
        if m % 2:
            rx, vx = -rx, -vx
        if n % 2:
            ry, vy = -ry, -vy
    ux, uy = rx / rj, ry / rj
    return mp.atan2(ry, rx), mp.atan2(-(ux * vy - uy * vx), -(ux * vx + uy * vy))


def rotation_mp(beta, r0, a):
    """|dtheta| at |phi0| = a."""
    beta, r0, a = mp.mpf(beta), mp.mpf(r0), mp.mpf(a)
    b = (1 + beta) / beta
    big_b = beta * r0 ** b
    s = mp.sin(a)
    f = lambda al: mp.sqrt((mp.sin(al) / s) ** (2 * b) + big_b ** 2)
    pts = [a]
    while pts[-1] * 2 < mp.pi / 2:
        pts.append(pts[-1] * 2)
    pts.append(mp.pi / 2)
    return 2 / beta * r0 ** (-b) * mp.quad(f, pts)


def map_mp(config, i, theta, phi, j, m, n):
    """Outgoing (theta, phi) after one collision, in mp arithmetic (theta not reduced)."""
    th_in, ph_in = flight_mp(config, i, theta, phi, j, m, n)
    ob = config.obstacles[j]
    if not ob.is_horn:
        return th_in, -ph_in
    rot = rotation_mp(ob.beta, ob.radius, abs(ph_in))
    return th_in - mp.sign(ph_in) * rot, -ph_in
