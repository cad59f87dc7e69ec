"""Hodographic-shaping trajectory kernel.

Each leg is shaped by writing the three cylindrical velocity components
(radial vr, transverse vtheta, axial vz) as sums of analytic functions of
normalized time u = t/tof:

    radial/normal base:  1, u, u^2
    axial base:          cos(wu), u^3 cos(wu), u^3 sin(wu),  w = 2 pi (N + 1/2)

with optional additional functions per axis carrying free coefficients:

    radial/normal:  u sin(pi u / 2), u cos(pi u / 2)   (+ a constant at level 2)
    axial:          u^4 cos(wu), u^4 sin(wu)           (+ a constant at level 2)

The three base coefficients per axis absorb the boundary conditions: the
velocity value at both endpoints plus one integral condition (traveled
radial/axial distance, or total polar angle for the transverse axis). The
radial and axial systems are linear 3x3 solves; the polar-angle condition
couples to the radial solution through r(t), so the third transverse
coefficient is found by a bracketed scalar root-solve.

Every function carries an analytic derivative and antiderivative, so
position, thrust acceleration, and delta-v follow without numeric
integration of the dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .ephemeris import AU, SUN_MU, HelioState
from .frames import CylState, cart_to_cyl

AXES = ("radial", "normal", "axial")

MIN_RADIUS = 0.05 * AU          # below this the leg is declared infeasible
SENTINEL_DV = 1.0e9             # m/s, score for non-evaluable legs
ANGLE_TOL = 1e-10               # rad, polar-angle root-solve tolerance
ANGLE_MAX_ITER = 200
QUAD_NODES = 64                 # Gauss-Legendre nodes for the delta-v integral
_COND_LIMIT = 1e12

TWO_PI = 2.0 * math.pi


class ShapingError(Exception):
    """Base class for shaping failures."""


class SingularSystemError(ShapingError):
    """An axis base system is numerically singular."""


class NoSolutionError(ShapingError):
    """The polar-angle root-solve did not converge."""


class NearSingularityError(ShapingError):
    """The shaped path dips below the minimum heliocentric radius."""


@dataclass(frozen=True)
class ShapeFunction:
    """One analytic velocity shape over normalized time u in [0, 1].

    antiderivative is normalized so that it vanishes at u = 0; callers get
    the time integral of the function as tof * antiderivative(u).
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    antiderivative: Callable[[np.ndarray], np.ndarray]


def _poly(name, power):
    if power == 0:
        return ShapeFunction(
            name,
            value=lambda u: np.ones_like(u),
            derivative=lambda u: np.zeros_like(u),
            antiderivative=lambda u: u,
        )
    return ShapeFunction(
        name,
        value=lambda u: u ** power,
        derivative=lambda u: power * u ** (power - 1),
        antiderivative=lambda u: u ** (power + 1) / (power + 1),
    )


def _power_cosine(name, power, freq):
    """u^p cos(freq u) with analytic derivative/antiderivative."""
    w = freq
    if power == 0:
        return ShapeFunction(
            name,
            value=lambda u: np.cos(w * u),
            derivative=lambda u: -w * np.sin(w * u),
            antiderivative=lambda u: np.sin(w * u) / w,
        )
    if power == 3:
        def anti(u):
            s, c = np.sin(w * u), np.cos(w * u)
            return (u**3 * s / w + 3 * u**2 * c / w**2
                    - 6 * u * s / w**3 - 6 * c / w**4 + 6 / w**4)
    elif power == 4:
        def anti(u):
            s, c = np.sin(w * u), np.cos(w * u)
            return (u**4 * s / w + 4 * u**3 * c / w**2 - 12 * u**2 * s / w**3
                    - 24 * u * c / w**4 + 24 * s / w**5)
    else:
        raise ValueError(f"unsupported cosine power {power}")
    return ShapeFunction(
        name,
        value=lambda u: u**power * np.cos(w * u),
        derivative=lambda u: power * u ** (power - 1) * np.cos(w * u)
        - w * u**power * np.sin(w * u),
        antiderivative=anti,
    )


def _power_sine(name, power, freq):
    """u^p sin(freq u) with analytic derivative/antiderivative."""
    w = freq
    if power == 1:
        def anti(u):
            return (np.sin(w * u) - w * u * np.cos(w * u)) / w**2
    elif power == 3:
        def anti(u):
            s, c = np.sin(w * u), np.cos(w * u)
            return (-u**3 * c / w + 3 * u**2 * s / w**2
                    + 6 * u * c / w**3 - 6 * s / w**4)
    elif power == 4:
        def anti(u):
            s, c = np.sin(w * u), np.cos(w * u)
            return (-u**4 * c / w + 4 * u**3 * s / w**2 + 12 * u**2 * c / w**3
                    - 24 * u * s / w**4 - 24 * c / w**5 + 24 / w**5)
    else:
        raise ValueError(f"unsupported sine power {power}")
    return ShapeFunction(
        name,
        value=lambda u: u**power * np.sin(w * u),
        derivative=lambda u: power * u ** (power - 1) * np.sin(w * u)
        + w * u**power * np.cos(w * u),
        antiderivative=anti,
    )


def _power_cosine_scaled1(name, freq):
    """u cos(freq u), used by the in-plane additional set."""
    w = freq

    def anti(u):
        return np.cos(w * u) / w**2 + u * np.sin(w * u) / w - 1.0 / w**2

    return ShapeFunction(
        name,
        value=lambda u: u * np.cos(w * u),
        derivative=lambda u: np.cos(w * u) - w * u * np.sin(w * u),
        antiderivative=anti,
    )


def base_functions(axis: str, n_rev: int) -> tuple[ShapeFunction, ...]:
    """The three boundary-condition base functions for one axis."""
    if n_rev < 0:
        raise ValueError("n_rev must be non-negative")
    if axis in ("radial", "normal"):
        return (_poly("1", 0), _poly("u", 1), _poly("u^2", 2))
    if axis == "axial":
        w = TWO_PI * (n_rev + 0.5)
        return (
            _power_cosine("cos(wu)", 0, w),
            _power_cosine("u^3 cos(wu)", 3, w),
            _power_sine("u^3 sin(wu)", 3, w),
        )
    raise ValueError(f"unknown axis {axis!r}")


# Free coefficients gained per axis at each free-parameter level: level 1 is
# the printed sin/cos pair, level 2 appends a lone constant term.
ADDITIONAL_COUNTS = {0: 0, 1: 2, 2: 3}


def additional_functions(axis: str, n_rev: int, count: int) -> tuple[ShapeFunction, ...]:
    """The free-coefficient velocity functions for one axis.

    count is the free-parameter level: 0 gives no extra freedom, 1 the
    recommended sine/cosine pair per axis, 2 additionally a constant term.
    """
    if count not in ADDITIONAL_COUNTS:
        raise ValueError(f"free-parameter count must be one of {sorted(ADDITIONAL_COUNTS)}")
    if n_rev < 0:
        raise ValueError("n_rev must be non-negative")
    if count == 0:
        return ()
    if axis in ("radial", "normal"):
        funcs = [
            _power_sine("u sin(pi u/2)", 1, 0.5 * math.pi),
            _power_cosine_scaled1("u cos(pi u/2)", 0.5 * math.pi),
        ]
    elif axis == "axial":
        w = TWO_PI * (n_rev + 0.5)
        funcs = [
            _power_cosine("u^4 cos(wu)", 4, w),
            _power_sine("u^4 sin(wu)", 4, w),
        ]
    else:
        raise ValueError(f"unknown axis {axis!r}")
    if count == 2:
        funcs.append(_poly("1", 0))
    return tuple(funcs)


@dataclass(frozen=True)
class VelocityShape:
    """Fully-coefficiented velocity function for one axis of one leg."""

    axis: str
    n_rev: int
    base_coeffs: np.ndarray
    free_coeffs: np.ndarray
    tof: float

    def _funcs(self):
        return (base_functions(self.axis, self.n_rev),
                additional_functions(self.axis, self.n_rev, _level_for(len(self.free_coeffs))))

    def velocity(self, u: np.ndarray) -> np.ndarray:
        base, add = self._funcs()
        out = sum(c * f.value(u) for c, f in zip(self.base_coeffs, base))
        out += sum(c * f.value(u) for c, f in zip(self.free_coeffs, add))
        return out

    def velocity_rate(self, u: np.ndarray) -> np.ndarray:
        """d(velocity)/dt, with the 1/tof normalized-time Jacobian applied."""
        base, add = self._funcs()
        out = sum(c * f.derivative(u) for c, f in zip(self.base_coeffs, base))
        out += sum(c * f.derivative(u) for c, f in zip(self.free_coeffs, add))
        return out / self.tof

    def displacement(self, u: np.ndarray) -> np.ndarray:
        """Time integral of the velocity from 0 to u*tof."""
        base, add = self._funcs()
        out = sum(c * f.antiderivative(u) for c, f in zip(self.base_coeffs, base))
        out += sum(c * f.antiderivative(u) for c, f in zip(self.free_coeffs, add))
        return out * self.tof


def _level_for(n_free: int) -> int:
    for level, n in ADDITIONAL_COUNTS.items():
        if n == n_free:
            return level
    raise ValueError(f"no free-parameter level has {n_free} coefficients per axis")


@dataclass(frozen=True)
class ShapedLeg:
    """One solved transfer leg with its shape functions and cost."""

    departure: HelioState
    arrival: HelioState
    tof: float
    n_rev: int
    shapes: tuple[VelocityShape, VelocityShape, VelocityShape]
    delta_v: float
    max_thrust_accel: float
    sun_mu: float = SUN_MU

    @property
    def dep_cyl(self) -> CylState:
        return cart_to_cyl(self.departure)

    @property
    def arr_cyl(self) -> CylState:
        return cart_to_cyl(self.arrival)


@lru_cache(maxsize=None)
def _gl_rule(n: int = QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _basis_tables(axis: str, n_rev: int, level: int):
    """Node-sampled basis matrices for one axis, cached per (axis, N, level).

    Returns (V, D, A, v0, v1, a1, inv_base) where V/D/A sample value,
    derivative and antiderivative of [base | additional] functions at the
    quadrature nodes, v0/v1/a1 are endpoint rows, and inv_base inverts the
    3x3 boundary-condition system of the base functions.
    """
    u, _ = _gl_rule()
    base = base_functions(axis, n_rev)
    add = additional_functions(axis, n_rev, level)
    funcs = base + add
    ends = np.array([0.0, 1.0])
    value = np.column_stack([f.value(u) for f in funcs])
    deriv = np.column_stack([f.derivative(u) for f in funcs])
    anti = np.column_stack([f.antiderivative(u) for f in funcs])
    v_ends = np.column_stack([f.value(ends) for f in funcs])
    a_ends = np.column_stack([f.antiderivative(ends) for f in funcs])
    system = np.vstack([v_ends[0, :3], v_ends[1, :3], a_ends[1, :3]])
    if np.linalg.cond(system) > _COND_LIMIT:
        raise SingularSystemError(f"{axis} base system is singular (N={n_rev})")
    return value, deriv, anti, v_ends[0], v_ends[1], a_ends[1], np.linalg.inv(system)


def _solve_linear_axis(tables, v0: float, v1: float, travel_over_tof: float,
                       free: np.ndarray) -> np.ndarray:
    """Base coefficients meeting (v(0), v(1), integral) for one axis."""
    _, _, _, row_v0, row_v1, row_a1, inv_base = tables
    rhs = np.array([
        v0 - float(row_v0[3:] @ free),
        v1 - float(row_v1[3:] @ free),
        travel_over_tof - float(row_a1[3:] @ free),
    ])
    return inv_base @ rhs


def _bracketed_root(fun, x0: float, x1: float, tol: float, max_iter: int) -> float:
    """Root of a monotone scalar function: bracket, then bisection/secant."""
    f0, f1 = fun(x0), fun(x1)
    if abs(f0) < tol:
        return x0
    if abs(f1) < tol:
        return x1
    # expand geometrically until the root is bracketed
    grow = 0
    while f0 * f1 > 0.0:
        grow += 1
        if grow > 80 or not (math.isfinite(f0) and math.isfinite(f1)):
            raise NoSolutionError("polar-angle condition could not be bracketed")
        span = x1 - x0
        if abs(f0) < abs(f1):
            x0, f0 = x0 - 2.0 * span, fun(x0 - 2.0 * span)
        else:
            x1, f1 = x1 + 2.0 * span, fun(x1 + 2.0 * span)
    for _ in range(max_iter):
        # secant step, bisection fallback when it leaves the bracket
        if f1 != f0:
            x = x1 - f1 * (x1 - x0) / (f1 - f0)
        else:
            x = 0.5 * (x0 + x1)
        if not (min(x0, x1) <= x <= max(x0, x1)):
            x = 0.5 * (x0 + x1)
        fx = fun(x)
        if abs(fx) < tol:
            return x
        if f0 * fx <= 0.0:
            x1, f1 = x, fx
        else:
            x0, f0 = x, fx
    raise NoSolutionError("polar-angle root-solve did not converge")


def _split_free(free_coeffs, level: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    per_axis = ADDITIONAL_COUNTS[level]
    free = np.asarray(free_coeffs, dtype=float).ravel()
    if free.size != 3 * per_axis:
        raise ValueError(
            f"expected {3 * per_axis} free coefficients for level {level}, got {free.size}"
        )
    return free[:per_axis], free[per_axis:2 * per_axis], free[2 * per_axis:]


def solve_coefficients(dep: HelioState, arr: HelioState, tof: float, n_rev: int,
                       free_coeffs=(), level: int | None = None,
                       sun_mu: float = SUN_MU) -> ShapedLeg:
    """Shape one leg between two boundary states.

    free_coeffs is the flat per-leg free-coefficient block ordered
    [radial..., normal..., axial...]; level defaults to whatever matches its
    length. Raises a ShapingError subclass when no valid shape exists.
    """
    if tof <= 0.0:
        raise ValueError("tof must be positive")
    free = np.asarray(free_coeffs, dtype=float).ravel()
    if level is None:
        level = _level_for(free.size // 3 if free.size % 3 == 0 else -1)
    free_r, free_n, free_a = _split_free(free, level)

    cdep, carr = cart_to_cyl(dep), cart_to_cyl(arr)
    u, w = _gl_rule()

    tab_r = _basis_tables("radial", n_rev, level)
    tab_n = _basis_tables("normal", n_rev, level)
    tab_a = _basis_tables("axial", n_rev, level)

    coef_r = _solve_linear_axis(tab_r, cdep.vr, carr.vr, (carr.r - cdep.r) / tof, free_r)
    coef_a = _solve_linear_axis(tab_a, cdep.vz, carr.vz, (carr.z - cdep.z) / tof, free_a)

    # radial profile at the quadrature nodes, needed by the angle condition
    anti_r = tab_r[2]
    r_nodes = cdep.r + tof * (anti_r[:, :3] @ coef_r + anti_r[:, 3:] @ free_r)
    if np.min(r_nodes) < MIN_RADIUS:
        raise NearSingularityError(
            f"shaped radius dips to {np.min(r_nodes):.3e} m (< {MIN_RADIUS:.3e})"
        )

    # transverse axis: endpoint velocities fix two coefficients in terms of
    # the third; the total polar angle then pins that one by root-solve.
    value_n = tab_n[0]
    add0 = float(tab_n[3][3:] @ free_n)
    add1 = float(tab_n[4][3:] @ free_n)
    d1 = cdep.vtheta - add0
    k_sum = carr.vtheta - add1 - d1         # d2 + d3
    add_nodes = value_n[:, 3:] @ free_n
    # wrap the in-plane separation to [0, 2 pi), tolerating rounding noise at
    # the seam so boundary states one full revolution apart keep a ~0 target
    swept = (carr.theta - cdep.theta) % TWO_PI
    if swept > TWO_PI - 1e-9:
        swept -= TWO_PI
    target = swept + TWO_PI * n_rev
    inv_r = w / r_nodes                      # quadrature weights folded in

    def angle_residual(d3: float) -> float:
        vtheta = d1 + (k_sum - d3) * u + d3 * u**2 + add_nodes
        return tof * float(inv_r @ vtheta) - target

    scale = abs(d1) + abs(k_sum) + 1.0
    d3 = _bracketed_root(angle_residual, -scale, scale, ANGLE_TOL, ANGLE_MAX_ITER)
    coef_n = np.array([d1, k_sum - d3, d3])

    shapes = (
        VelocityShape("radial", n_rev, coef_r, free_r, tof),
        VelocityShape("normal", n_rev, coef_n, free_n, tof),
        VelocityShape("axial", n_rev, coef_a, free_a, tof),
    )

    # thrust and cost on the quadrature nodes
    f_r, f_t, f_z = _thrust_on_nodes(
        (tab_r, tab_n, tab_a), (coef_r, coef_n, coef_a),
        (free_r, free_n, free_a), cdep, tof, sun_mu,
    )
    f_mag = np.sqrt(f_r**2 + f_t**2 + f_z**2)
    delta_v = tof * float(w @ f_mag)
    return ShapedLeg(
        departure=dep, arrival=arr, tof=tof, n_rev=n_rev, shapes=shapes,
        delta_v=delta_v, max_thrust_accel=float(np.max(f_mag)), sun_mu=sun_mu,
    )


def _thrust_on_nodes(tables, coefs, frees, cdep: CylState, tof: float, sun_mu: float):
    """Cylindrical thrust-acceleration components at the quadrature nodes."""
    tab_r, tab_n, tab_a = tables
    coef_r, coef_n, coef_a = coefs
    free_r, free_n, free_a = frees

    def combine(tab, coef, free, which):
        mat = tab[which]
        return mat[:, :3] @ coef + mat[:, 3:] @ free

    vr = combine(tab_r, coef_r, free_r, 0)
    vt = combine(tab_n, coef_n, free_n, 0)
    vz = combine(tab_a, coef_a, free_a, 0)
    ar = combine(tab_r, coef_r, free_r, 1) / tof
    at = combine(tab_n, coef_n, free_n, 1) / tof
    az = combine(tab_a, coef_a, free_a, 1) / tof
    r = cdep.r + tof * combine(tab_r, coef_r, free_r, 2)
    z = cdep.z + tof * combine(tab_a, coef_a, free_a, 2)
    if np.min(r) < MIN_RADIUS:
        raise NearSingularityError("shaped radius below minimum")
    s3 = (r**2 + z**2) ** 1.5
    f_r = ar - vt**2 / r + sun_mu * r / s3
    f_t = at + vr * vt / r
    f_z = az + sun_mu * z / s3
    return f_r, f_t, f_z


def _leg_tables(leg: ShapedLeg):
    level = _level_for(len(leg.shapes[0].free_coeffs))
    return tuple(_basis_tables(axis, leg.n_rev, level) for axis in AXES)


def evaluate_state(leg: ShapedLeg, t: float) -> CylState:
    """Cylindrical state along the leg at elapsed time t in [0, tof]."""
    if not (0.0 <= t <= leg.tof):
        raise ValueError(f"t={t} outside [0, {leg.tof}]")
    u = t / leg.tof
    sh_r, sh_n, sh_a = leg.shapes
    cdep = leg.dep_cyl
    uu = np.array([u])
    r = cdep.r + float(sh_r.displacement(uu)[0])
    z = cdep.z + float(sh_a.displacement(uu)[0])
    theta = cdep.theta + traveled_angle(leg, t)
    return CylState(
        r=r, theta=theta, z=z,
        vr=float(sh_r.velocity(uu)[0]),
        vtheta=float(sh_n.velocity(uu)[0]),
        vz=float(sh_a.velocity(uu)[0]),
    )


def traveled_angle(leg: ShapedLeg, t: float) -> float:
    """Polar angle swept since departure, by quadrature of vtheta / r."""
    if t == 0.0:
        return 0.0
    u_end = t / leg.tof
    nodes, w = _gl_rule()
    u = nodes * u_end
    sh_r, sh_n, _ = leg.shapes
    r = leg.dep_cyl.r + sh_r.displacement(u)
    vtheta = sh_n.velocity(u)
    return leg.tof * u_end * float((w * vtheta) @ (1.0 / r))


def thrust_acceleration(leg: ShapedLeg, t: float) -> np.ndarray:
    """Cylindrical thrust-acceleration components (f_r, f_theta, f_z) at t."""
    if not (0.0 <= t <= leg.tof):
        raise ValueError(f"t={t} outside [0, {leg.tof}]")
    u = np.array([t / leg.tof])
    sh_r, sh_n, sh_a = leg.shapes
    cdep = leg.dep_cyl
    r = cdep.r + float(sh_r.displacement(u)[0])
    z = cdep.z + float(sh_a.displacement(u)[0])
    if r < MIN_RADIUS:
        raise NearSingularityError(f"radius {r:.3e} m below minimum at t={t}")
    vr = float(sh_r.velocity(u)[0])
    vt = float(sh_n.velocity(u)[0])
    s3 = (r**2 + z**2) ** 1.5
    f_r = float(sh_r.velocity_rate(u)[0]) - vt**2 / r + leg.sun_mu * r / s3
    f_t = float(sh_n.velocity_rate(u)[0]) + vr * vt / r
    f_z = float(sh_a.velocity_rate(u)[0]) + leg.sun_mu * z / s3
    return np.array([f_r, f_t, f_z])


def compute_delta_v(leg: ShapedLeg) -> tuple[float, float]:
    """(delta_v, max |f|) by fixed 64-node Gauss-Legendre quadrature."""
    u, w = _gl_rule()
    mags = np.array([np.linalg.norm(thrust_acceleration(leg, t)) for t in u * leg.tof])
    return leg.tof * float(w @ mags), float(np.max(mags))


def thrust_profile(leg: ShapedLeg) -> list[tuple[float, ...]]:
    """Rows (t_s, r_m, theta_rad, z_m, f_r, f_theta, f_z, f_mag) at the nodes."""
    u, _ = _gl_rule()
    rows = []
    for ui in u:
        t = float(ui * leg.tof)
        state = evaluate_state(leg, t)
        f = thrust_acceleration(leg, t)
        rows.append((t, state.r, state.theta, state.z,
                     float(f[0]), float(f[1]), float(f[2]), float(np.linalg.norm(f))))
    return rows
