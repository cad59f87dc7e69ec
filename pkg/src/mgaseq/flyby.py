"""Unpowered patched-conics gravity assist.

The incoming hyperbolic excess velocity is parameterized by its magnitude
and two angles in the planet's TNW frame. The flyby rotates it by the
hyperbolic deflection angle about a plane oriented by beta; the outgoing
vector keeps the incoming magnitude exactly (no powered term), and the
heliocentric outgoing velocity adds the planet velocity back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ephemeris import Body, HelioState
from .frames import local_frame, tnw_from_planet_state

H_P_MIN = 2.0e5        # m, minimum altitude above the planetary surface
H_P_MAX = 5.0e10       # m
V_INF_MAX = 5000.0     # m/s


class FlybyError(Exception):
    """Raised on degenerate or out-of-domain flyby geometry."""


@dataclass(frozen=True)
class FlybyParams:
    """Decision-variable block of one gravity assist.

    v_inf: incoming hyperbolic excess speed, m/s
    theta_g / phi_g: in-plane / out-of-plane incoming direction angles, rad
    h_p: periapsis altitude above the planetary surface, m
    beta: flyby plane orientation about the incoming direction, rad
    """

    v_inf: float
    theta_g: float
    phi_g: float
    h_p: float
    beta: float


def v_inf_in(params: FlybyParams, planet_state: HelioState) -> np.ndarray:
    """Incoming hyperbolic excess velocity vector in heliocentric axes."""
    frame = tnw_from_planet_state(planet_state)
    cp, sp = math.cos(params.phi_g), math.sin(params.phi_g)
    ct, st = math.cos(params.theta_g), math.sin(params.theta_g)
    direction = cp * ct * frame.u_hat + cp * st * frame.v_hat + sp * frame.w_hat
    return params.v_inf * direction


def deflection_angle(v_inf: float, h_p: float, body: Body) -> float:
    """Hyperbolic deflection delta = 2 asin(1 / (1 + r_p v_inf^2 / mu))."""
    if v_inf <= 0.0:
        raise FlybyError("deflection undefined for zero hyperbolic excess speed")
    if h_p < H_P_MIN:
        raise FlybyError(f"flyby altitude {h_p:.3e} m below minimum {H_P_MIN:.0e} m")
    r_p = body.radius + h_p
    return 2.0 * math.asin(1.0 / (1.0 + r_p * v_inf**2 / body.mu))


def v_out_heliocentric(v_in_vec: np.ndarray, planet_state: HelioState,
                       delta: float, beta: float) -> np.ndarray:
    """Heliocentric velocity after the assist.

    The outgoing unit vector is cos(delta) i + cos(beta) sin(delta) j +
    sin(beta) sin(delta) k in the local frame, scaled by the incoming
    magnitude and added to the planet's heliocentric velocity.
    """
    v_in_vec = np.asarray(v_in_vec, dtype=float)
    speed = float(np.linalg.norm(v_in_vec))
    if speed <= 0.0:
        raise FlybyError("incoming hyperbolic velocity has zero magnitude")
    fr = local_frame(v_in_vec, planet_state.velocity)
    sd, cd = math.sin(delta), math.cos(delta)
    out_hat = cd * fr.i_hat + math.cos(beta) * sd * fr.j_hat + math.sin(beta) * sd * fr.k_hat
    return planet_state.velocity + speed * out_hat
