import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from hornbilliard.errors import ConfigError, DomainError, InfiniteHorizonError, RangeError, TrappedError
from hornbilliard.profile_horn import delta_theta, tmax
from hornbilliard.table import (
    CollisionCoord, Obstacle, TableConfig, billiard_map, check_disjoint, flight, reflect, sojourn,
    step_fast, validate_table)
from oracles import brute_flight

thetas = st.floats(0.0, 2 * math.pi, exclude_max=True)
phis = st.floats(-1.5, 1.5)


def _angle_close(a, b, tol):
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi) < tol


@given(st.integers(0, 1), thetas, phis)
def test_flight_matches_brute_force(ref, i, th, ph):
    cx, cy, rad, *_ = ref.arrays
    j, thj, phin, tau = brute_flight(cx, cy, rad, ref.width, ref.height, i, th, ph)
    fr = flight(ref, CollisionCoord(i, th, ph))
    assert fr.hit.obstacle == j
    assert fr.tau == pytest.approx(tau, rel=1e-10, abs=1e-12)
    assert _angle_close(fr.hit.theta, thj, 1e-9)
    assert fr.hit.phi == pytest.approx(phin, abs=1e-9)


@given(st.integers(0, 1), thetas, phis)
def test_flight_time_reversal(ref, i, th, ph):
    fr = flight(ref, CollisionCoord(i, th, ph))
    h = fr.hit
    back = flight(ref, CollisionCoord(h.obstacle, h.theta, h.phi))
    assert back.hit.obstacle == i
    assert back.tau == pytest.approx(fr.tau, rel=1e-9)
    assert _angle_close(back.hit.theta, th, 1e-8)
    assert back.hit.phi == pytest.approx(ph, abs=1e-8)


@given(st.integers(0, 1), thetas, phis)
def test_compiled_step_matches_quadrature_map(ref, i, th, ph):
    x = CollisionCoord(i, th, ph)
    try:
        y, tau, soj = billiard_map(ref, x)
    except (TrappedError, RangeError) as e:
        with pytest.raises(type(e)):
            step_fast(ref, x)
        return
    y2, tau2, soj2 = step_fast(ref, x)
    assert y2.obstacle == y.obstacle
    ob = ref.obstacles[y.obstacle]
    rot = abs(delta_theta(ob.profile, y.phi)) if ob.is_horn else 0.0
    if rot < 1e6:  # beyond this theta mod 2 pi carries no information
        assert _angle_close(y2.theta, y.theta, 1e-9 + 1e-14 * rot)
    assert y2.phi == y.phi
    assert tau2 == tau
    assert soj2 == pytest.approx(soj, rel=1e-12, abs=1e-15)


@given(thetas, st.floats(0.01, 1.5))
def test_horn_reflection_rule(th, a):
    horn = Obstacle((1.0, 1.0), 0.8, 1.5)
    for s in (1.0, -1.0):
        inc = CollisionCoord(1, th, s * a, "incoming")
        out = reflect(horn, inc)
        assert out.phi == -inc.phi
        assert _angle_close(out.theta, th + delta_theta(horn.profile, -inc.phi), 1e-9)
        assert sojourn(horn, inc) == pytest.approx(2 * tmax(horn.profile, a))


def test_scatterer_reflection_is_specular():
    sc = Obstacle((0.5, 0.5), 0.3)
    out = reflect(sc, CollisionCoord(0, 1.0, 0.4, "incoming"))
    assert (out.theta, out.phi) == (1.0, -0.4)
    assert sojourn(sc, CollisionCoord(0, 1.0, 0.4, "incoming")) == 0.0


def test_head_on_horn_entry_traps():
    horn = Obstacle((1.0, 1.0), 0.8, 1.5)
    with pytest.raises(TrappedError):
        reflect(horn, CollisionCoord(1, 0.0, 0.0, "incoming"))


def test_rectangle_walls():
    cfg = TableConfig("rectangle", 2.0, 1.0, (Obstacle((1.0, 0.5), 0.3),))
    fr = flight(cfg, CollisionCoord(0, 0.0, 0.0))
    assert fr.tau == pytest.approx(1.4)
    assert fr.wall_bounces == 1
    assert fr.hit.theta == pytest.approx(0.0, abs=1e-12)
    assert fr.hit.phi == pytest.approx(0.0, abs=1e-12)
    # diagonal path: corner-free bounce off two walls
    fr = flight(cfg, CollisionCoord(0, math.pi / 4, 0.0))
    assert fr.wall_bounces >= 1 and fr.tau > 0


def test_reference_table_validates(ref):
    rep = validate_table(ref, n_theta=64, n_phi=33)
    assert rep.ok
    assert rep.min_gap > 0
    assert rep.tau_min == pytest.approx(math.sqrt(2) - 1.2, rel=1e-6)


def test_min_gap_is_exact(ref):
    # nearest images are at distance sqrt(2)
    assert check_disjoint(ref) == pytest.approx(math.sqrt(2) - 1.2, abs=1e-14)


def test_infinite_horizon_is_flagged():
    cfg = TableConfig("torus", 1.0, 1.0, (Obstacle((0.5, 0.5), 0.02),), length_cap=5.0)
    rep = validate_table(cfg, n_theta=32, n_phi=33)
    assert not rep.ok
    assert "infinite horizon" in rep.warnings[0]
    with pytest.raises(InfiniteHorizonError):
        for th in np.linspace(0, 6, 50):
            flight(cfg, CollisionCoord(0, th, 0.7))


def test_overlap_and_fit_errors():
    with pytest.raises(ConfigError):
        check_disjoint(TableConfig("torus", 1.0, 1.0, (Obstacle((0.5, 0.5), 0.3), Obstacle((0.9, 0.5), 0.2))))
    # overlap through the periodic boundary
    with pytest.raises(ConfigError):
        check_disjoint(TableConfig("torus", 1.0, 1.0, (Obstacle((0.05, 0.5), 0.1), Obstacle((0.9, 0.5), 0.1))))
    with pytest.raises(ConfigError):
        TableConfig("rectangle", 1.0, 1.0, (Obstacle((0.1, 0.5), 0.2),))
    with pytest.raises(ConfigError):
        TableConfig("torus", 1.0, 1.0, (Obstacle((1.5, 0.5), 0.2),))
    with pytest.raises(ConfigError):
        Obstacle((0, 0), -1.0)
    with pytest.raises(ConfigError):
        TableConfig("sphere", 1.0, 1.0, (Obstacle((0.5, 0.5), 0.2),))


def test_coordinate_errors(ref):
    with pytest.raises(DomainError):
        CollisionCoord(0, 0.0, 2.0)
    with pytest.raises(DomainError):
        flight(ref, CollisionCoord(5, 0.0, 0.0))
    with pytest.raises(DomainError):
        flight(ref, CollisionCoord(0, 0.0, 0.0, "incoming"))
    with pytest.raises(DomainError):
        reflect(ref.obstacles[0], CollisionCoord(0, 0.0, 0.0))


@given(st.floats(0.05, 0.45), st.floats(0.05, 0.45), thetas, phis)
def test_flight_lands_on_a_boundary(r1, r2, th, ph):
    cfg = TableConfig("torus", 2.0, 2.0, (Obstacle((0.5, 0.5), r1), Obstacle((1.5, 1.2), r2)))
    assume(check_disjoint(cfg) > 0)
    try:
        fr = flight(cfg, CollisionCoord(0, th, ph))
    except InfiniteHorizonError:
        return
    cx, cy, rad, *_ = cfg.arrays
    j, thj, phin, tau = brute_flight(cx, cy, rad, 2.0, 2.0, 0, th, ph, shells=int(cfg.length_cap / 2) + 1
                                     if fr.tau > 10 else 6)
    assert fr.hit.obstacle == j
    assert fr.tau == pytest.approx(tau, rel=1e-9)
