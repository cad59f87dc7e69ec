import math

import numpy as np
import pytest

from mgaseq.ephemeris import AU, SUN_MU, Body, HelioState, KeplerElements, Planet


def circular_body(planet: Planet, a_m: float, mu: float = 1e12,
                  radius: float = 3e6, m0: float = 0.0) -> Body:
    return Body(
        id=planet, mu=mu, radius=radius,
        elements=KeplerElements(a=a_m, e=0.0, i=0.0, raan=0.0, argp=0.0, m0=m0),
    )


@pytest.fixture(scope="session")
def circular_earth():
    return circular_body(Planet.EARTH, AU)


def circular_state(r_m: float, theta: float, epoch_mjd: float,
                   retrograde: bool = False) -> HelioState:
    """An exactly circular heliocentric state at the given polar angle."""
    v = math.sqrt(SUN_MU / r_m)
    if retrograde:
        v = -v
    return HelioState(
        position=np.array([r_m * math.cos(theta), r_m * math.sin(theta), 0.0]),
        velocity=np.array([-v * math.sin(theta), v * math.cos(theta), 0.0]),
        epoch_mjd=epoch_mjd,
    )


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (QR of a Gaussian, det fixed to +1)."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
