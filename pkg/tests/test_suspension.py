import math

import numpy as np
import pytest

from hornbilliard.errors import DomainError, RangeError
from hornbilliard.profile_horn import HornProfile, tmax
from hornbilliard.stats import ks
from hornbilliard.suspension import (
    horn_occupation, mean_excursion, mean_flight, mean_height, mean_sojourn, occupation_rate, orbit,
    pushforward, sample_mu, sample_mu_arrays, tail_profile)
from hornbilliard.table import CollisionCoord


def test_mean_flight_free_path_formula(ref):
    # pi |Q| / |dQ| for the reference table
    area = 4.0 - math.pi * (0.16 + 0.64)
    assert mean_flight(ref) == pytest.approx(math.pi * area / (2 * math.pi * 1.2), rel=1e-15)
    i, t, p = sample_mu_arrays(ref, np.random.default_rng(0), 400_000)
    *_, tau, soj, st = pushforward(ref, i, t, p)
    ok = st == 0
    assert abs(tau[ok].mean() - mean_flight(ref)) < 4 * tau[ok].std() / math.sqrt(ok.sum())


def test_mean_excursion_against_sampling():
    prof = HornProfile(3.0, 0.8)  # finite variance: sampling error is controlled
    rng = np.random.default_rng(1)
    phi = np.arcsin(rng.random(20_000))  # density cos(phi) on (0, pi/2)
    s = np.array([2 * tmax(prof, f) for f in phi])
    assert abs(s.mean() - mean_excursion(prof)) < 4 * s.std() / math.sqrt(s.size)


def test_mean_excursion_diverges_for_thin_tails():
    assert math.isinf(mean_excursion(HornProfile(1.0, 1.0)))
    assert math.isfinite(mean_excursion(HornProfile(1.2, 1.0)))


def test_occupation_rate_against_long_orbit(ref):
    rate = occupation_rate(ref, 1)
    assert rate == pytest.approx(mean_sojourn(ref, 1) / mean_height(ref))
    assert mean_sojourn(ref, 0) == 0.0
    rng = np.random.default_rng(np.random.SeedSequence([3]))
    fracs = [horn_occupation(ref, sample_mu(ref, rng), 2e5, 1) / 2e5 for _ in range(8)]
    # heavy tails make single orbits noisy; the average over orbits is close
    assert np.mean(fracs) == pytest.approx(rate, abs=0.03)


def test_pushforward_preserves_mu(ref):
    i, t, p = sample_mu_arrays(ref, np.random.default_rng(2), 200_000)
    j, th, ph, *_ , st = pushforward(ref, i, t, p)
    ok = st == 0
    assert ks(t, th[ok]) < 0.01
    assert ks(np.sin(p), np.sin(ph[ok])) < 0.01
    assert abs(np.mean(j[ok] == 1) - 0.8 / 1.2) < 0.005


def test_orbit_bookkeeping(ref):
    x0 = CollisionCoord(0, 1.0, 0.2)
    rec = orbit(ref, x0, n_collisions=500)
    assert rec.termination == "completed"
    assert len(rec) == 501 and rec.obstacle[0] == 0
    assert np.allclose(rec.time, np.cumsum(rec.tau + rec.sojourn))
    assert np.all(rec.sojourn[rec.obstacle == 0] == 0)
    timed = orbit(ref, x0, flow_time=rec.time[200])
    assert timed.time[-1] >= rec.time[200]
    assert np.array_equal(timed.theta[:201], rec.theta[:201])
    with pytest.raises(DomainError):
        orbit(ref, x0)


def test_horn_occupation_counts_sojourns(ref):
    x0 = CollisionCoord(0, 2.0, -0.3)
    rec = orbit(ref, x0, n_collisions=300)
    # the sojourn of step k ends at time[k] and starts sojourn[k] earlier
    k = 250
    T = rec.time[k]
    assert horn_occupation(ref, x0, T, 1) == pytest.approx(rec.sojourn[1:k + 1].sum(), rel=1e-12)
    # clipped excursion: linear accounting inside the last one
    kk = int(np.argmax(rec.sojourn[200:] > 0)) + 200
    start = rec.time[kk] - rec.sojourn[kk]
    half = start + 0.5 * rec.sojourn[kk]
    assert horn_occupation(ref, x0, half, 1) == pytest.approx(rec.sojourn[1:kk].sum() + 0.5 * rec.sojourn[kk],
                                                            rel=1e-12)
    many = horn_occupation(ref, x0, np.array([T / 2, T]), 1)
    assert many[1] == pytest.approx(horn_occupation(ref, x0, T, 1))
    with pytest.raises(DomainError):
        horn_occupation(ref, x0, np.array([2.0, 1.0]), 1)


@pytest.mark.parametrize("beta", [1.0, 1.5, 2.0])
def test_tail_ratio_tends_to_one(beta):
    rows = tail_profile(HornProfile(beta, 1.0), [1e3, 1e4, 1e5, 1e6])
    dev = [abs(r.asymptote_ratio - 1) for r in rows]
    assert all(a > b for a, b in zip(dev, dev[1:]))
    assert dev[-1] < 1e-4
    # s* solves 2 tmax(asin s*) = t
    for r in rows:
        assert 2 * tmax(HornProfile(beta, 1.0), math.asin(r.s_star)) == pytest.approx(r.t, rel=1e-12)


def test_tail_errors():
    with pytest.raises(RangeError):
        tail_profile(HornProfile(1.5, 1.0), [0.0])
    with pytest.raises(RangeError):
        tail_profile(HornProfile(0.3, 1.0), [1e300])
