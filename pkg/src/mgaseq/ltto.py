"""Low-thrust trajectory optimization problem for one fixed MGA sequence.

A sequence is encoded as a flat decision vector

    [departure_date, tof_1..tof_L, rev_1..rev_L,
     coeffs_1..coeffs_L, (v, h_p, beta, theta, phi)_1..(.)_G]

with L legs and G = L - 1 gravity assists. Departure and arrival excess
velocities and their four orientation angles are fixed to zero and carry no
genes: the spacecraft leaves the departure planet with the planet's own
velocity and arrives matching the arrival planet's state. Revolution counts
ride as continuous genes in [0, 3) and are floored at decode time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import flyby, shaping
from .ephemeris import Body, HelioState, Planet, state_at
from .flyby import FlybyError, FlybyParams
from .frames import FrameError
from .shaping import ADDITIONAL_COUNTS, SENTINEL_DV, ShapedLeg, ShapingError

TOF_BOUNDS_DAYS = (100.0, 4500.0)
COEFF_BOUND = 3.0e4
REV_MAX = 2
WINDOW_DAYS = 60.0
DAY = 86400.0

_REV_GENE_HI = np.nextafter(float(REV_MAX + 1), 0.0)


class SequenceError(Exception):
    """Raised on malformed body sequences."""


@dataclass(frozen=True)
class Sequence:
    """An ordered MGA body chain: departure, flyby targets, arrival."""

    bodies: tuple[Planet, ...]

    def __post_init__(self) -> None:
        if len(self.bodies) < 2:
            raise SequenceError("a sequence needs at least departure and arrival")

    @classmethod
    def from_string(cls, text: str) -> "Sequence":
        try:
            return cls(tuple(Planet.from_letter(ch) for ch in text.strip()))
        except KeyError as exc:
            raise SequenceError(f"bad sequence {text!r}: {exc}") from None

    def __str__(self) -> str:
        return "".join(p.letter for p in self.bodies)

    @property
    def n_legs(self) -> int:
        return len(self.bodies) - 1

    @property
    def n_gas(self) -> int:
        return len(self.bodies) - 2

    @property
    def departure(self) -> Planet:
        return self.bodies[0]

    @property
    def arrival(self) -> Planet:
        return self.bodies[-1]

    @property
    def ga_bodies(self) -> tuple[Planet, ...]:
        return self.bodies[1:-1]


def coeffs_per_leg(free_count: int) -> int:
    return 3 * ADDITIONAL_COUNTS[free_count]


def n_dims(seq: Sequence, free_count: int = 1) -> int:
    return 1 + 2 * seq.n_legs + seq.n_legs * coeffs_per_leg(free_count) + 5 * seq.n_gas


def vector_bounds(seq: Sequence, window_start: float, free_count: int = 1,
                  tof_days: tuple[float, float] = TOF_BOUNDS_DAYS,
                  window_days: float = WINDOW_DAYS) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper bound vectors matching the documented flattening."""
    legs, gas = seq.n_legs, seq.n_gas
    ncoef = coeffs_per_leg(free_count)
    lo = [window_start] + [tof_days[0]] * legs + [0.0] * legs + [-COEFF_BOUND] * (legs * ncoef)
    hi = ([window_start + window_days] + [tof_days[1]] * legs + [_REV_GENE_HI] * legs
          + [COEFF_BOUND] * (legs * ncoef))
    for _ in range(gas):
        lo += [0.0, flyby.H_P_MIN, 0.0, 0.0, -0.5 * math.pi]
        hi += [flyby.V_INF_MAX, flyby.H_P_MAX, 2.0 * math.pi, 2.0 * math.pi, 0.5 * math.pi]
    return np.array(lo), np.array(hi)


@dataclass(frozen=True)
class DecisionVector:
    """Decoded view of one gene vector."""

    departure_mjd: float
    tofs_days: np.ndarray                 # (L,)
    n_revs: tuple[int, ...]               # (L,)
    free_coeffs: np.ndarray               # (L, coeffs_per_leg)
    flybys: tuple[FlybyParams, ...]       # (G,)
    raw: np.ndarray


def decode(seq: Sequence, x, free_count: int = 1) -> DecisionVector:
    x = np.asarray(x, dtype=float).ravel()
    legs, gas = seq.n_legs, seq.n_gas
    ncoef = coeffs_per_leg(free_count)
    expect = n_dims(seq, free_count)
    if x.size != expect:
        raise ValueError(f"decision vector for {seq} needs {expect} entries, got {x.size}")
    pos = 1
    tofs = x[pos:pos + legs]; pos += legs
    revs = tuple(min(int(math.floor(g)), REV_MAX) for g in x[pos:pos + legs]); pos += legs
    coeffs = x[pos:pos + legs * ncoef].reshape(legs, ncoef); pos += legs * ncoef
    fbs = []
    for _ in range(gas):
        v, h_p, beta, theta, phi = x[pos:pos + 5]; pos += 5
        fbs.append(FlybyParams(v_inf=v, theta_g=theta, phi_g=phi, h_p=h_p, beta=beta))
    return DecisionVector(
        departure_mjd=float(x[0]), tofs_days=tofs, n_revs=revs,
        free_coeffs=coeffs, flybys=tuple(fbs), raw=x,
    )


@dataclass(frozen=True)
class TrajectorySolution:
    """Assembled multi-leg trajectory and its total cost."""

    sequence: Sequence
    legs: tuple[ShapedLeg | None, ...]
    leg_dvs: tuple[float, ...]
    total_delta_v: float
    decision: DecisionVector
    feasible: bool

    def to_record(self) -> dict:
        return {
            "sequence": str(self.sequence),
            "decision": [float(v) for v in self.decision.raw],
            "leg_delta_v_ms": [float(v) for v in self.leg_dvs],
            "total_delta_v_ms": float(self.total_delta_v),
            "feasible": bool(self.feasible),
        }


def evaluate(seq: Sequence, x, system: dict[Planet, Body], free_count: int = 1,
             max_thrust_accel: float | None = None) -> TrajectorySolution:
    """Assemble and score the trajectory encoded by x for this sequence.

    Boundary velocities chain through each gravity assist: the incoming leg
    must arrive at planet velocity plus the parameterized incoming excess,
    the outgoing leg departs at planet velocity plus the deflected excess.
    Legs that cannot be shaped score the sentinel delta-v and mark the
    solution infeasible instead of raising.
    """
    dec = decode(seq, x, free_count)
    epochs = [dec.departure_mjd]
    for tof in dec.tofs_days:
        epochs.append(epochs[-1] + float(tof))
    states = [state_at(system[p], e) for p, e in zip(seq.bodies, epochs)]

    # departure/arrival velocities per leg, with flyby linkage in between
    dep_vels: list[np.ndarray | None] = [states[0].velocity]
    arr_vels: list[np.ndarray | None] = [None] * seq.n_legs
    arr_vels[-1] = states[-1].velocity
    feasible = True
    for g, params in enumerate(dec.flybys):
        planet_state = states[g + 1]
        body = system[seq.bodies[g + 1]]
        try:
            vin = flyby.v_inf_in(params, planet_state)
            delta = flyby.deflection_angle(params.v_inf, params.h_p, body)
            vout = flyby.v_out_heliocentric(vin, planet_state, delta, params.beta)
        except (FlybyError, FrameError):
            feasible = False
            arr_vels[g] = None
            dep_vels.append(None)
            continue
        arr_vels[g] = planet_state.velocity + vin
        dep_vels.append(vout)

    legs: list[ShapedLeg | None] = []
    leg_dvs: list[float] = []
    for i in range(seq.n_legs):
        if dep_vels[i] is None or arr_vels[i] is None:
            legs.append(None)
            leg_dvs.append(SENTINEL_DV)
            continue
        dep = HelioState(states[i].position, dep_vels[i], epochs[i])
        arr = HelioState(states[i + 1].position, arr_vels[i], epochs[i + 1])
        try:
            leg = shaping.solve_coefficients(
                dep, arr, float(dec.tofs_days[i]) * DAY, dec.n_revs[i],
                dec.free_coeffs[i], level=free_count,
            )
        except ShapingError:
            legs.append(None)
            leg_dvs.append(SENTINEL_DV)
            feasible = False
            continue
        if max_thrust_accel is not None and leg.max_thrust_accel > max_thrust_accel:
            legs.append(leg)
            leg_dvs.append(SENTINEL_DV)
            feasible = False
            continue
        legs.append(leg)
        leg_dvs.append(leg.delta_v)
    return TrajectorySolution(
        sequence=seq, legs=tuple(legs), leg_dvs=tuple(leg_dvs),
        total_delta_v=float(sum(leg_dvs)), decision=dec, feasible=feasible,
    )


@dataclass
class LttoProblem:
    """Bounded scalar objective over one sequence, as fed to the optimizer."""

    sequence: Sequence
    system: dict[Planet, Body]
    window_start: float
    free_count: int = 1
    tof_days: tuple[float, float] = TOF_BOUNDS_DAYS
    window_days: float = WINDOW_DAYS
    max_thrust_accel: float | None = None

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return vector_bounds(self.sequence, self.window_start, self.free_count,
                             self.tof_days, self.window_days)

    @property
    def rev_slice(self) -> slice:
        """Location of the integer revolution genes in the flat vector."""
        legs = self.sequence.n_legs
        return slice(1 + legs, 1 + 2 * legs)

    def solution(self, x) -> TrajectorySolution:
        return evaluate(self.sequence, x, self.system, self.free_count,
                        self.max_thrust_accel)

    def fitness(self, x) -> float:
        return self.solution(x).total_delta_v

    __call__ = fitness
