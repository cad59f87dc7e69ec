import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgaseq.ephemeris import (
    AU, DAY, SUN_MU, Body, EphemerisError, KeplerElements, Planet,
    builtin_bodies, load_bodies_csv, period, save_bodies_csv, solve_kepler, state_at,
)

from conftest import circular_body


# --- independent oracle: universal-variable Kepler propagation -------------

def _stumpff_c(z: float) -> float:
    if z > 1e-8:
        return (1.0 - math.cos(math.sqrt(z))) / z
    if z < -1e-8:
        return (math.cosh(math.sqrt(-z)) - 1.0) / (-z)
    return 0.5 - z / 24.0


def _stumpff_s(z: float) -> float:
    if z > 1e-8:
        sq = math.sqrt(z)
        return (sq - math.sin(sq)) / sq**3
    if z < -1e-8:
        sq = math.sqrt(-z)
        return (math.sinh(sq) - sq) / sq**3
    return 1.0 / 6.0 - z / 120.0


def universal_propagate(r0, v0, dt, mu):
    """Universal-variable two-body propagation (f and g functions)."""
    r0 = np.asarray(r0, float)
    v0 = np.asarray(v0, float)
    r0n = np.linalg.norm(r0)
    vr0 = float(r0 @ v0) / r0n
    alpha = 2.0 / r0n - float(v0 @ v0) / mu
    chi = math.sqrt(mu) * abs(alpha) * dt
    for _ in range(200):
        z = alpha * chi**2
        c, s = _stumpff_c(z), _stumpff_s(z)
        r = chi**2 * c + vr0 / math.sqrt(mu) * chi * (1 - z * s) + r0n * (1 - z * c)
        f_val = (r0n * vr0 / math.sqrt(mu) * chi**2 * c
                 + (1 - alpha * r0n) * chi**3 * s + r0n * chi - math.sqrt(mu) * dt)
        dchi = f_val / r
        chi -= dchi
        if abs(dchi) < 1e-12:
            break
    z = alpha * chi**2
    c, s = _stumpff_c(z), _stumpff_s(z)
    f = 1 - chi**2 / r0n * c
    g = dt - chi**3 / math.sqrt(mu) * s
    r_vec = f * r0 + g * v0
    rn = np.linalg.norm(r_vec)
    fdot = math.sqrt(mu) / (rn * r0n) * (z * s - 1) * chi
    gdot = 1 - chi**2 / rn * c
    return r_vec, fdot * r0 + gdot * v0


# --- state_at ---------------------------------------------------------------

def test_circular_body_radius_is_exact(circular_earth):
    for epoch in (0.0, 12345.6, 61400.0, 199999.0):
        s = state_at(circular_earth, epoch)
        assert np.linalg.norm(s.position) == pytest.approx(AU, rel=1e-9)
        assert np.linalg.norm(s.velocity) == pytest.approx(math.sqrt(SUN_MU / AU), rel=1e-9)


def test_state_repeats_after_one_period():
    for planet, body in builtin_bodies().items():
        t0 = 60000.0
        t1 = t0 + period(body) / DAY
        s0, s1 = state_at(body, t0), state_at(body, t1)
        np.testing.assert_allclose(s1.position, s0.position, rtol=1e-9, atol=1e-3)
        np.testing.assert_allclose(s1.velocity, s0.velocity, rtol=1e-9, atol=1e-9)


def test_state_matches_universal_variable_oracle():
    body = builtin_bodies()[Planet.EARTH]
    t0 = 61400.0
    s0 = state_at(body, t0)
    s1 = state_at(body, t0 + 100.0)
    r_uv, v_uv = universal_propagate(s0.position, s0.velocity, 100.0 * DAY, SUN_MU)
    np.testing.assert_allclose(s1.position, r_uv, rtol=1e-8)
    np.testing.assert_allclose(s1.velocity, v_uv, rtol=1e-8)


def test_state_matches_oracle_for_eccentric_inclined_orbit():
    body = builtin_bodies()[Planet.MERCURY]
    t0 = 55000.25
    s0 = state_at(body, t0)
    for dt_days in (10.0, 40.0, 100.0):
        s1 = state_at(body, t0 + dt_days)
        r_uv, v_uv = universal_propagate(s0.position, s0.velocity, dt_days * DAY, SUN_MU)
        np.testing.assert_allclose(s1.position, r_uv, rtol=1e-8)
        np.testing.assert_allclose(s1.velocity, v_uv, rtol=1e-8)


def test_epoch_outside_range_rejected(circular_earth):
    with pytest.raises(EphemerisError):
        state_at(circular_earth, -1.0)
    with pytest.raises(EphemerisError):
        state_at(circular_earth, 200001.0)


def test_energy_and_momentum_are_epoch_independent():
    body = builtin_bodies()[Planet.MARS]
    epochs = np.linspace(50000.0, 80000.0, 1000)
    energies, moms = [], []
    for epoch in epochs:
        s = state_at(body, epoch)
        r = np.linalg.norm(s.position)
        energies.append(0.5 * float(s.velocity @ s.velocity) - SUN_MU / r)
        moms.append(np.linalg.norm(np.cross(s.position, s.velocity)))
    energies, moms = np.array(energies), np.array(moms)
    assert np.ptp(energies) / abs(energies.mean()) < 1e-10
    assert np.ptp(moms) / moms.mean() < 1e-10


def test_state_at_is_deterministic():
    body = builtin_bodies()[Planet.VENUS]
    a = state_at(body, 61234.5)
    b = state_at(body, 61234.5)
    assert np.array_equal(a.position, b.position)
    assert np.array_equal(a.velocity, b.velocity)


# --- Kepler solver ----------------------------------------------------------

@given(m=st.floats(-20.0, 20.0), e=st.floats(0.0, 0.95))
@settings(max_examples=200, deadline=None)
def test_kepler_residual_below_tolerance(m, e):
    ecc_anom = solve_kepler(m, e)
    m_wrapped = math.remainder(m, 2.0 * math.pi)
    assert abs(ecc_anom - e * math.sin(ecc_anom) - m_wrapped) < 1e-12


# --- period -----------------------------------------------------------------

def test_period_at_one_au():
    body = circular_body(Planet.EARTH, AU)
    # independent evaluation of 2 pi sqrt(a^3 / mu)
    expected = 2.0 * math.pi * (AU**3 / SUN_MU) ** 0.5
    assert period(body) == pytest.approx(expected, rel=1e-12)
    assert period(body) == pytest.approx(3.1558e7, rel=1e-3)


def test_period_kepler_third_law_scaling():
    b1 = circular_body(Planet.EARTH, AU)
    b2 = circular_body(Planet.EARTH, 2 * AU)
    b4 = circular_body(Planet.EARTH, 4 * AU)
    assert period(b2) / period(b1) == pytest.approx(2.0**1.5, rel=1e-12)
    assert period(b4) / period(b1) == pytest.approx(8.0, rel=1e-12)


# --- element table and CSV override ----------------------------------------

def test_builtin_bodies_invariants():
    bodies = builtin_bodies()
    assert len(bodies) == 8
    for body in bodies.values():
        assert 0.0 <= body.elements.e < 1.0
        assert body.elements.a > 0 and body.radius > 0 and body.mu > 0


def test_invalid_elements_rejected():
    with pytest.raises(ValueError):
        Body(id=Planet.EARTH, mu=1.0, radius=1.0,
             elements=KeplerElements(a=AU, e=1.2, i=0, raan=0, argp=0, m0=0))


def test_csv_round_trip(tmp_path):
    bodies = builtin_bodies()
    path = tmp_path / "elements.csv"
    save_bodies_csv(path, bodies)
    loaded = load_bodies_csv(path)
    assert set(loaded) == set(bodies)
    for planet in bodies:
        assert loaded[planet].elements == bodies[planet].elements
        assert loaded[planet].mu == bodies[planet].mu


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("body,a_m\nE,1.0\n")
    with pytest.raises(EphemerisError):
        load_bodies_csv(path)


def test_planet_letters():
    assert Planet.from_letter("Y") is Planet.MERCURY
    assert Planet.from_letter("E") is Planet.EARTH
    with pytest.raises(KeyError):
        Planet.from_letter("X")
