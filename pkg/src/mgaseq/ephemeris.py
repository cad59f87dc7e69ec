"""Heliocentric planetary ephemerides from mean Keplerian elements.

States are produced by two-body propagation of a built-in J2000 mean-element
table (standard approximate values, see the NASA/JPL planetary fact sheets).
This trades ephemeris precision for zero external dependencies, which is
acceptable for preliminary transfer optimization where only the relative
phasing of the planets matters.

Epochs are Modified Julian Dates (days) at every public interface; seconds
are used internally with an exact 86400 s/day conversion.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

AU = 1.495978707e11            # m
SUN_MU = 1.32712440018e20      # m^3/s^2
DAY = 86400.0                  # s, exact
MJD_J2000 = 51544.5            # epoch of the built-in element table

EPOCH_MIN_MJD = 0.0
EPOCH_MAX_MJD = 200000.0

KEPLER_TOL = 1e-12             # rad, residual |E - e sinE - M|
KEPLER_MAX_ITER = 100


class EphemerisError(Exception):
    """Raised on invalid epochs or a non-converging Kepler solve."""


class Planet(enum.Enum):
    """The eight planets, keyed by sequence letter (Mercury is 'Y')."""

    MERCURY = "Y"
    VENUS = "V"
    EARTH = "E"
    MARS = "M"
    JUPITER = "J"
    SATURN = "S"
    URANUS = "U"
    NEPTUNE = "N"

    @property
    def letter(self) -> str:
        return self.value

    @classmethod
    def from_letter(cls, letter: str) -> "Planet":
        try:
            return cls(letter.upper())
        except ValueError:
            raise KeyError(f"unknown planet letter {letter!r}") from None


@dataclass(frozen=True)
class KeplerElements:
    """Mean Keplerian elements at a reference epoch.

    a is in metres, angles in radians, t0 in MJD days.
    """

    a: float
    e: float
    i: float
    raan: float
    argp: float
    m0: float
    t0_mjd: float = MJD_J2000


@dataclass(frozen=True)
class Body:
    """A gravitating departure/flyby/arrival candidate."""

    id: Planet
    mu: float          # m^3/s^2
    radius: float      # m, equatorial
    elements: KeplerElements
    sun_mu: float = SUN_MU

    def __post_init__(self) -> None:
        if not (0.0 <= self.elements.e < 1.0):
            raise ValueError(f"{self.id.name}: eccentricity must be in [0, 1)")
        if self.elements.a <= 0 or self.radius <= 0 or self.mu <= 0:
            raise ValueError(f"{self.id.name}: a, radius, mu must be positive")


@dataclass(frozen=True)
class HelioState:
    """Heliocentric Cartesian position/velocity at an epoch."""

    position: np.ndarray   # (3,) m
    velocity: np.ndarray   # (3,) m/s
    epoch_mjd: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


# J2000 mean elements: a [AU], e, i, raan, argp, M0 [deg].
_ELEMENT_TABLE = {
    Planet.MERCURY: (0.387098, 0.205630, 7.0049, 48.331, 29.124, 174.796),
    Planet.VENUS: (0.723332, 0.006772, 3.3947, 76.680, 54.884, 50.115),
    Planet.EARTH: (1.000000, 0.016710, 0.0000, -11.260, 114.207, 357.517),
    Planet.MARS: (1.523679, 0.093400, 1.8506, 49.558, 286.503, 19.373),
    Planet.JUPITER: (5.202600, 0.048498, 1.3033, 100.464, 273.867, 20.020),
    Planet.SATURN: (9.554910, 0.055508, 2.4852, 113.665, 339.392, 317.020),
    Planet.URANUS: (19.218400, 0.046295, 0.7730, 74.006, 96.998, 142.238),
    Planet.NEPTUNE: (30.110400, 0.008988, 1.7700, 131.784, 272.846, 256.228),
}

# GM [m^3/s^2] and equatorial radius [m].
_PHYSICAL_TABLE = {
    Planet.MERCURY: (2.2032e13, 2.4397e6),
    Planet.VENUS: (3.24859e14, 6.0518e6),
    Planet.EARTH: (3.986004418e14, 6.3781e6),
    Planet.MARS: (4.282837e13, 3.3962e6),
    Planet.JUPITER: (1.26686534e17, 7.1492e7),
    Planet.SATURN: (3.7931187e16, 6.0268e7),
    Planet.URANUS: (5.793939e15, 2.5559e7),
    Planet.NEPTUNE: (6.836529e15, 2.4764e7),
}


def builtin_bodies() -> dict[Planet, Body]:
    """Return the built-in eight-planet system."""
    out = {}
    for planet, (a_au, e, i_deg, raan_deg, argp_deg, m0_deg) in _ELEMENT_TABLE.items():
        mu, radius = _PHYSICAL_TABLE[planet]
        elements = KeplerElements(
            a=a_au * AU,
            e=e,
            i=math.radians(i_deg),
            raan=math.radians(raan_deg),
            argp=math.radians(argp_deg),
            m0=math.radians(m0_deg),
        )
        out[planet] = Body(id=planet, mu=mu, radius=radius, elements=elements)
    return out


ELEMENTS_CSV_HEADER = [
    "body", "a_m", "e", "i_rad", "raan_rad", "argp_rad", "M0_rad",
    "t0_mjd", "mu", "radius_m",
]


def load_bodies_csv(path) -> dict[Planet, Body]:
    """Load an elements-override file; replaces the built-in table entirely.

    The file must carry the documented header; bodies are keyed by their
    sequence letter or full name.
    """
    out: dict[Planet, Body] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ELEMENTS_CSV_HEADER:
            raise EphemerisError(
                f"elements file {path}: expected header {','.join(ELEMENTS_CSV_HEADER)}"
            )
        for row in reader:
            name = row["body"].strip()
            planet = Planet.from_letter(name) if len(name) == 1 else Planet[name.upper()]
            elements = KeplerElements(
                a=float(row["a_m"]),
                e=float(row["e"]),
                i=float(row["i_rad"]),
                raan=float(row["raan_rad"]),
                argp=float(row["argp_rad"]),
                m0=float(row["M0_rad"]),
                t0_mjd=float(row["t0_mjd"]),
            )
            out[planet] = Body(
                id=planet,
                mu=float(row["mu"]),
                radius=float(row["radius_m"]),
                elements=elements,
            )
    if not out:
        raise EphemerisError(f"elements file {path}: no bodies")
    return out


def save_bodies_csv(path, bodies: dict[Planet, Body]) -> None:
    """Write a system to the elements-override CSV format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ELEMENTS_CSV_HEADER)
        for planet in sorted(bodies, key=lambda p: bodies[p].elements.a):
            b = bodies[planet]
            el = b.elements
            writer.writerow([
                planet.letter, repr(el.a), repr(el.e), repr(el.i), repr(el.raan),
                repr(el.argp), repr(el.m0), repr(el.t0_mjd), repr(b.mu), repr(b.radius),
            ])


def solve_kepler(mean_anomaly: float, e: float) -> float:
    """Solve E - e sinE = M by Newton iteration to |residual| < 1e-12 rad."""
    m = math.remainder(mean_anomaly, 2.0 * math.pi)
    ecc_anom = m if e < 0.8 else math.pi * math.copysign(1.0, m or 1.0)
    for _ in range(KEPLER_MAX_ITER):
        resid = ecc_anom - e * math.sin(ecc_anom) - m
        if abs(resid) < KEPLER_TOL:
            return ecc_anom
        ecc_anom -= resid / (1.0 - e * math.cos(ecc_anom))
    raise EphemerisError(
        f"Kepler solver did not converge (M={mean_anomaly!r}, e={e!r})"
    )


def _rotation_313(raan: float, inc: float, argp: float) -> np.ndarray:
    """Perifocal-to-heliocentric rotation, Rz(raan) Rx(inc) Rz(argp)."""
    cr, sr = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inc), math.sin(inc)
    cw, sw = math.cos(argp), math.sin(argp)
    return np.array([
        [cr * cw - sr * sw * ci, -cr * sw - sr * cw * ci, sr * si],
        [sr * cw + cr * sw * ci, -sr * sw + cr * cw * ci, -cr * si],
        [sw * si, cw * si, ci],
    ])


def state_at(body: Body, epoch_mjd: float) -> HelioState:
    """Two-body propagated heliocentric state of a body at an epoch."""
    if not (EPOCH_MIN_MJD <= epoch_mjd <= EPOCH_MAX_MJD):
        raise EphemerisError(
            f"{body.id.name}: epoch {epoch_mjd} MJD outside [{EPOCH_MIN_MJD}, {EPOCH_MAX_MJD}]"
        )
    el = body.elements
    n = math.sqrt(body.sun_mu / el.a ** 3)
    dt = (epoch_mjd - el.t0_mjd) * DAY
    mean_anomaly = el.m0 + n * dt
    try:
        ecc_anom = solve_kepler(mean_anomaly, el.e)
    except EphemerisError as exc:
        raise EphemerisError(f"{body.id.name} at {epoch_mjd} MJD: {exc}") from exc

    cos_e, sin_e = math.cos(ecc_anom), math.sin(ecc_anom)
    b_fac = math.sqrt(1.0 - el.e ** 2)
    r_pf = np.array([el.a * (cos_e - el.e), el.a * b_fac * sin_e, 0.0])
    edot = n / (1.0 - el.e * cos_e)
    v_pf = np.array([-el.a * sin_e * edot, el.a * b_fac * cos_e * edot, 0.0])

    rot = _rotation_313(el.raan, el.i, el.argp)
    return HelioState(position=rot @ r_pf, velocity=rot @ v_pf, epoch_mjd=epoch_mjd)


def period(body: Body) -> float:
    """Orbital period in seconds, 2*pi*sqrt(a^3/sun_mu)."""
    return 2.0 * math.pi * math.sqrt(body.elements.a ** 3 / body.sun_mu)
