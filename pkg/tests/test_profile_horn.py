import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hornbilliard.errors import DomainError, RangeError, TrappedError
from hornbilliard.profile_horn import (
    HornProfile, asymptotic_constants, delta_theta, excursion, geodesic_oracle, horn_metrics,
    kappa, kappa_grazing, kappa_prime, profile_eval, strip_boundaries, strip_boundary, tmax)
from hornbilliard.quadrature import QuadratureSettings
from oracles import excursion_z, i0_closed

betas = st.floats(0.3, 4.0)
radii = st.floats(0.2, 3.0)
angles = st.floats(0.02, 1.55)

# (beta, r0, phi0, tmax, |dtheta|) from the height-variable oracle
FROZEN = [
    (1.5, 1.0, 0.3, 2.418537333400979, 8.88023206353615),
    (2.0, 0.8, 0.1, 3.718770338179916, 38.883881087927506),
    (0.8, 1.0, 1.0, 1.0281053334410741, 2.1904753406604325),
    (3.0, 0.5, 0.05, 3.006638485398383, 83.1928477449583),
]


@pytest.mark.parametrize("beta,r0,phi,t_ref,d_ref", FROZEN)
def test_frozen_oracle_values(beta, r0, phi, t_ref, d_ref):
    p = HornProfile(beta, r0)
    assert tmax(p, phi) == pytest.approx(t_ref, rel=1e-11)
    assert delta_theta(p, phi) == pytest.approx(d_ref, rel=1e-11)
    assert delta_theta(p, -phi) == pytest.approx(-d_ref, rel=1e-11)


@given(betas, radii, angles)
def test_matches_height_variable_quadrature(beta, r0, phi):
    p = HornProfile(beta, r0)
    t, d = excursion_z(beta, r0, phi)
    assert tmax(p, phi) == pytest.approx(t, rel=1e-8)
    assert abs(delta_theta(p, phi)) == pytest.approx(d, rel=1e-8)


@pytest.mark.parametrize("beta,phi", [(1.0, 0.3), (1.5, 1.0), (2.0, 0.1)])
def test_geodesic_integration_agrees(beta, phi):
    p = HornProfile(beta, 1.0)
    sol = geodesic_oracle(p, phi)
    assert sol.tmax == pytest.approx(tmax(p, phi), rel=1e-7)
    assert abs(sol.dtheta) == pytest.approx(abs(delta_theta(p, phi)), rel=1e-7)
    # leaves with the mirrored angle
    assert sol.exit_angle == pytest.approx(-phi, abs=1e-7)
    assert sol.clairaut_residual < 1e-8


def test_anchor_constants():
    p = HornProfile(1.0, 1.0)
    c = asymptotic_constants(p)
    assert c.i0 == pytest.approx(math.pi / 2, abs=1e-12)
    assert c.j0 == pytest.approx(math.pi / 4, abs=1e-12)
    assert kappa_grazing(p) == pytest.approx(-2 * math.sqrt(2), abs=1e-12)
    assert horn_metrics(p).volume == pytest.approx(math.pi, abs=1e-8)
    assert math.isinf(horn_metrics(p).area)


@given(st.floats(0.55, 4.0), radii)
def test_i0_closed_form(beta, r0):
    if abs(beta - 1.0) < 1e-3:
        return
    assert asymptotic_constants(HornProfile(beta, r0)).i0 == pytest.approx(i0_closed(beta, r0), rel=1e-12)


@pytest.mark.parametrize("beta", [0.8, 1.0, 1.5, 2.0])
def test_tmax_power_law_near_head_on(beta):
    p = HornProfile(beta, 1.3)
    i0 = asymptotic_constants(p).i0
    ratios = [tmax(p, f) * f ** (1 / beta) / i0 for f in (1e-4, 1e-6, 1e-8)]
    assert abs(ratios[-1] - 1) < abs(ratios[0] - 1) + 1e-12
    assert ratios[-1] == pytest.approx(1.0, rel=1e-3)


def test_tmax_finite_far_below_square_root_of_tiny():
    # 1/sin^2 of the entry angle overflows here, the sojourn itself does not
    p = HornProfile(1.5, 0.8)
    phi = 2.4e-165
    i0 = asymptotic_constants(p).i0
    assert tmax(p, phi) * phi ** (1 / 1.5) / i0 == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_rotation_power_law_near_head_on(beta):
    p = HornProfile(beta, 1.0)
    c = asymptotic_constants(p)
    f = 1e-7
    assert delta_theta(p, f) * f ** c.rotation_exponent / (2 * c.j0) == pytest.approx(1.0, rel=1e-3)


def test_volume_formula_and_divergence():
    # V = pi/(2 beta - 1) for r0 = 1 and beta > 1/2
    for beta in (0.75, 1.5, 2.0, 3.0):
        assert horn_metrics(HornProfile(beta, 1.0)).volume == pytest.approx(math.pi / (2 * beta - 1), rel=1e-8)
    m = horn_metrics(HornProfile(0.4, 1.0))
    assert math.isinf(m.volume) and math.isinf(m.area)
    assert horn_metrics(HornProfile(2.0, 1.0)).area < math.inf


@given(betas, radii, angles)
def test_odd_rotation_even_kappa(beta, r0, phi):
    p = HornProfile(beta, r0)
    assert delta_theta(p, -phi) == -delta_theta(p, phi)
    assert kappa(p, -phi) == kappa(p, phi)
    assert tmax(p, -phi) == tmax(p, phi)


@given(betas, radii, angles)
def test_hyperbolicity_bound(beta, r0, phi):
    p = HornProfile(beta, r0)
    assert kappa(p, phi) < -2.0
    assert kappa(p, phi) <= kappa_grazing(p) * (1 - 1e-12)


@given(betas, radii, st.floats(0.02, 1.5))
def test_kappa_is_derivative_of_rotation(beta, r0, phi):
    p = HornProfile(beta, r0)
    h = 1e-5 * phi
    fd = (delta_theta(p, phi + h) - delta_theta(p, phi - h)) / (2 * h)
    assert kappa(p, phi) == pytest.approx(fd, rel=1e-6)


@given(betas, radii, st.floats(0.02, 1.5), st.floats(0.001, 0.05))
def test_monotone_in_angle(beta, r0, phi, dphi):
    p = HornProfile(beta, r0)
    assert tmax(p, phi + dphi) < tmax(p, phi)
    assert delta_theta(p, phi + dphi) < delta_theta(p, phi)


def test_grazing_limits():
    p = HornProfile(1.5, 0.8)
    assert tmax(p, math.pi / 2) == 0.0
    assert delta_theta(p, math.pi / 2) == 0.0
    assert kappa(p, math.pi / 2 - 1e-7) == pytest.approx(kappa_grazing(p), rel=1e-6)


def test_kappa_prime_matches_difference():
    p = HornProfile(1.5, 1.0)
    h = 1e-4
    fd = (kappa(p, 0.5 + h) - kappa(p, 0.5 - h)) / (2 * h)
    assert kappa_prime(p, 0.5) == pytest.approx(fd, rel=1e-6)


def test_profile_values():
    p = HornProfile(2.0, 1.0)
    v = profile_eval(p, 2.0)
    assert v.r == 0.25 and v.r_prime == -0.25 and v.r_second == pytest.approx(0.375)
    assert v.gauss_curvature < 0
    with pytest.raises(DomainError):
        profile_eval(p, 0.5)


def test_errors():
    with pytest.raises(DomainError):
        HornProfile(-1.0, 1.0)
    with pytest.raises(DomainError):
        HornProfile(1.0, 0.0)
    p = HornProfile(1.5, 1.0)
    with pytest.raises(TrappedError):
        tmax(p, 0.0)
    with pytest.raises(DomainError):
        delta_theta(p, 2.0)
    with pytest.raises(DomainError):
        kappa(p, 0.0)
    with pytest.raises(RangeError):
        delta_theta(p, 1e-300)


def test_tolerance_setting_is_respected():
    p = HornProfile(1.5, 1.0)
    loose = excursion(p, 0.3, QuadratureSettings(rel_tol=1e-4))
    assert loose.tmax == pytest.approx(FROZEN[0][3], rel=1e-4)


def test_strips_are_nested_and_shrinking():
    p = HornProfile(1.0, 1.0)
    prev_lo = math.inf
    widths = []
    for k in (10, 11, 12, 100):
        lo, hi = strip_boundaries(p, k)
        assert lo < hi <= prev_lo or k == 100
        prev_lo = lo
        widths.append(hi - lo)
        # the strip edges satisfy |dtheta| = 2 pi k at phi(k)
        assert abs(delta_theta(p, hi)) == pytest.approx(2 * math.pi * k, rel=1e-9)
    assert widths[-1] < widths[0]
    assert strip_boundary(p, 1.0) > strip_boundary(p, 2.0)
