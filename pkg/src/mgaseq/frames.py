"""Coordinate machinery: cylindrical states and the two gravity-assist frames.

The TNW frame is attached to a planet's heliocentric state: u points along
the planet velocity, v along the orbital angular momentum, and w completes
the triad as h x V. Note that (u, v, w) taken in that order is therefore a
left-handed set; the w orientation follows the defining text literally and
is deliberate (w = v x u).

The local frame orients a gravity-assist plane relative to the incoming
hyperbolic velocity: i along V_inf_in, j along i x V_planet, k = i x j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ephemeris import HelioState

_DEGENERACY_TOL = 1e-12


class FrameError(Exception):
    """Raised when a frame cannot be constructed from degenerate inputs."""


@dataclass(frozen=True)
class CylState:
    """Cylindrical state: radius, polar angle, axial offset and their rates.

    vtheta is the transverse velocity r*thetadot, not the angular rate.
    theta is not wrapped; trajectory code accumulates it across revolutions.
    """

    r: float
    theta: float
    z: float
    vr: float
    vtheta: float
    vz: float


@dataclass(frozen=True)
class TnwFrame:
    u_hat: np.ndarray
    v_hat: np.ndarray
    w_hat: np.ndarray


@dataclass(frozen=True)
class LocalFrame:
    i_hat: np.ndarray
    j_hat: np.ndarray
    k_hat: np.ndarray


def _unit(vec: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm <= _DEGENERACY_TOL:
        raise FrameError(f"cannot normalize near-zero {what}")
    return vec / norm


def tnw_from_planet_state(state: HelioState) -> TnwFrame:
    """TNW frame of a planet state; raises FrameError on rectilinear states."""
    u_hat = _unit(state.velocity, "planet velocity")
    h_vec = np.cross(state.position, state.velocity)
    v_hat = _unit(h_vec, "orbital angular momentum")
    w_hat = _unit(np.cross(h_vec, state.velocity), "completing vector")
    return TnwFrame(u_hat=u_hat, v_hat=v_hat, w_hat=w_hat)


def local_frame(v_inf_in: np.ndarray, planet_velocity: np.ndarray) -> LocalFrame:
    """Gravity-assist plane frame from the incoming hyperbolic velocity."""
    i_hat = _unit(np.asarray(v_inf_in, dtype=float), "incoming hyperbolic velocity")
    j_hat = _unit(np.cross(i_hat, planet_velocity), "flyby plane normal")
    k_hat = np.cross(i_hat, j_hat)
    return LocalFrame(i_hat=i_hat, j_hat=j_hat, k_hat=k_hat)


def cart_to_cyl(state: HelioState) -> CylState:
    """Exact Cartesian-to-cylindrical conversion; theta in (-pi, pi]."""
    x, y, z = state.position
    vx, vy, vz = state.velocity
    r = math.hypot(x, y)
    if r <= 0.0:
        raise FrameError("cylindrical radius is zero; polar angle undefined")
    theta = math.atan2(y, x)
    vr = (x * vx + y * vy) / r
    vtheta = (x * vy - y * vx) / r
    return CylState(r=r, theta=theta, z=float(z), vr=vr, vtheta=vtheta, vz=float(vz))


def cyl_to_cart(c: CylState, epoch_mjd: float) -> HelioState:
    """Exact cylindrical-to-Cartesian conversion."""
    if c.r <= 0.0:
        raise FrameError("cylindrical radius must be positive")
    ct, st = math.cos(c.theta), math.sin(c.theta)
    position = np.array([c.r * ct, c.r * st, c.z])
    velocity = np.array([
        c.vr * ct - c.vtheta * st,
        c.vr * st + c.vtheta * ct,
        c.vz,
    ])
    return HelioState(position=position, velocity=velocity, epoch_mjd=epoch_mjd)
