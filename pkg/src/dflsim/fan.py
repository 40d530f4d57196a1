"""Ducted fan aerodynamics: blade-element strips with a uniform-inflow
momentum closure, the static duct thrust gain, and the power-matching map
from engine brake power to ducted thrust.

Everything here is a pure function of (speed, geometry): no stored state,
safe to call from anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
KGF = 9.80665  # N per kgf, reporting boundary only


class InflowConvergenceError(RuntimeError):
    """Momentum/blade-element inflow iteration failed to converge."""


class PowerBracketError(RuntimeError):
    """Requested shaft power exceeds the configured fan speed range."""


@dataclass(frozen=True)
class FanGeometry:
    """Blade and duct geometry plus the airfoil polar and drive coupling."""

    blade_radius: float = 0.35        # R, m
    root_cutout: float = 0.07         # r0, m
    blade_factor: float = 4.0         # B, blade-number corrective factor
    chord_root: float = 0.06          # m
    chord_tip: float = 0.06           # m
    twist_root: float = math.radians(30.0)   # rad
    twist_tip: float = math.radians(10.0)    # rad
    element_count: int = 32
    disc_area: float = 0.0            # S2, m^2; 0 -> annulus pi*(R^2 - r0^2)
    outlet_area_ratio: float = 1.0    # S3/S2
    lift_slope: float = 0.9 * TWO_PI  # 1/rad
    alpha_zero_lift: float = 0.0      # rad
    cl_max: float = 1.2
    cd_profile: float = 0.02
    air_density: float = 1.225        # kg/m^3
    pulley_ratio: float = 1.0         # n_fan / n_crankshaft
    transmission_eff: float = 0.97
    n_fan_max: float = 250.0          # rev/s, bracket for the power solve

    def __post_init__(self):
        if not 0.0 <= self.root_cutout < self.blade_radius:
            raise ValueError("need 0 <= r0 < R")
        if self.element_count < 16:
            raise ValueError("element_count must be >= 16")
        if self.pulley_ratio <= 0.0:
            raise ValueError("pulley ratio must be positive")

    @property
    def s2(self) -> float:
        if self.disc_area > 0.0:
            return self.disc_area
        return math.pi * (self.blade_radius ** 2 - self.root_cutout ** 2)

    @property
    def s3(self) -> float:
        return self.outlet_area_ratio * self.s2

    def element_radii(self) -> np.ndarray:
        """Midpoint radii of the blade elements."""
        edges = np.linspace(self.root_cutout, self.blade_radius,
                            self.element_count + 1)
        return 0.5 * (edges[:-1] + edges[1:])

    def element_width(self) -> float:
        return (self.blade_radius - self.root_cutout) / self.element_count

    def chord(self, r) -> np.ndarray:
        frac = (np.asarray(r) - self.root_cutout) / (self.blade_radius - self.root_cutout)
        return self.chord_root + (self.chord_tip - self.chord_root) * frac

    def twist(self, r) -> np.ndarray:
        frac = (np.asarray(r) - self.root_cutout) / (self.blade_radius - self.root_cutout)
        return self.twist_root + (self.twist_tip - self.twist_root) * frac


@dataclass(frozen=True)
class FanOperatingPoint:
    """Converged aerodynamic state at one fan speed."""

    n_fan: float            # rev/s
    thrust_unducted: float  # T_UDF, N
    torque: float           # Q_UDF, N*m
    power: float            # P_UDF, W
    thrust_ducted: float    # T_DF, N
    induced_velocity: float = field(default=0.0)  # m/s, uniform inflow


def blade_element_coeffs(r: float, n_fan: float, induced_velocity: float,
                         geom: FanGeometry):
    """Per-radius thrust and torque coefficients (T_c, Q_c) at one element.

    The local relative wind composes rotation (2*pi*n*r) with the axial
    induced velocity; lift follows the linear polar capped at stall, drag
    is the constant profile value.  Coefficients carry the chord so that
    force/span = 0.5*rho*V^2*B*coeff.  No relative wind means no force.
    """
    u_t = TWO_PI * n_fan * r
    u_a = induced_velocity
    v_sq = u_t * u_t + u_a * u_a
    if v_sq == 0.0:
        return 0.0, 0.0
    phi = math.atan2(u_a, u_t)
    alpha = float(geom.twist(r)) - phi
    cl = min(max(geom.lift_slope * (alpha - geom.alpha_zero_lift), -geom.cl_max),
             geom.cl_max)
    cd = geom.cd_profile
    c = float(geom.chord(r))
    t_c = c * (cl * math.cos(phi) - cd * math.sin(phi))
    q_c = c * (cl * math.sin(phi) + cd * math.cos(phi)) * r
    return t_c, q_c


def _element_loads(n_fan: float, vi: float, geom: FanGeometry):
    """Vectorized per-element thrust and torque contributions (already * dr)."""
    r = geom.element_radii()
    dr = geom.element_width()
    u_t = TWO_PI * n_fan * r
    u_a = vi
    v_sq = u_t * u_t + u_a * u_a
    phi = np.arctan2(u_a, u_t)
    alpha = geom.twist(r) - phi
    cl = np.clip(geom.lift_slope * (alpha - geom.alpha_zero_lift),
                 -geom.cl_max, geom.cl_max)
    cd = geom.cd_profile
    c = geom.chord(r)
    common = 0.5 * geom.air_density * v_sq * geom.blade_factor * c * dr
    d_thrust = common * (cl * np.cos(phi) - cd * np.sin(phi))
    d_torque = common * (cl * np.sin(phi) + cd * np.cos(phi)) * r
    return d_thrust, d_torque


def solve_operating_point(n_fan: float, geom: FanGeometry,
                          max_iter: int = 50, tol: float = 1e-8,
                          relax: float = 0.5) -> FanOperatingPoint:
    """Converge the uniform induced velocity and evaluate thrust/torque/power.

    Fixed point of v = sqrt(T(v) / (2*rho*S2)) under 0.5 relaxation; the
    static-thrust map is contractive here and typically converges in ~20
    iterations.
    """
    if n_fan <= 0.0:
        return FanOperatingPoint(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    vi = 0.0
    denom = 2.0 * geom.air_density * geom.s2
    converged = False
    for _ in range(max_iter):
        d_thrust, _ = _element_loads(n_fan, vi, geom)
        thrust = max(float(np.sum(d_thrust)), 0.0)
        vi_new = math.sqrt(thrust / denom)
        if abs(vi_new - vi) <= tol * max(1.0, vi):
            vi = vi_new
            converged = True
            break
        vi += relax * (vi_new - vi)
    if not converged:
        raise InflowConvergenceError(
            f"inflow iteration did not converge at n_fan={n_fan:.3f} rev/s")
    d_thrust, d_torque = _element_loads(n_fan, vi, geom)
    thrust = float(np.sum(d_thrust))
    torque = float(np.sum(d_torque))
    power = fan_power(n_fan, torque)
    return FanOperatingPoint(n_fan, thrust, torque, power,
                             duct_ratio(geom) * thrust, vi)


def unducted_thrust(n_fan: float, geom: FanGeometry) -> float:
    """Total blade-element thrust T_UDF (N) at a fan speed in rev/s."""
    return solve_operating_point(n_fan, geom).thrust_unducted


def unducted_torque(n_fan: float, geom: FanGeometry) -> float:
    """Total blade-element torque Q_UDF (N*m) at a fan speed in rev/s."""
    return solve_operating_point(n_fan, geom).torque


def fan_power(n_fan: float, torque: float) -> float:
    """Shaft power P = 2*pi*n*Q with n in rev/s."""
    return TWO_PI * n_fan * torque


def duct_ratio(geom: FanGeometry) -> float:
    """Static thrust gain of the ducted over the open fan: 1.26*(S3/S2)^(1/3)."""
    return 1.26 * (geom.s3 / geom.s2) ** (1.0 / 3.0)


def thrust_from_power(p_b: float, geom: FanGeometry,
                      rel_tol: float = 1e-13):
    """Invert the fan power curve: engine brake power -> (T_DF, n_fan).

    Bisection on the monotone absorbed-power map P_UDF(n_fan) against
    p_b scaled by the transmission efficiency.  Raises PowerBracketError
    when the demand exceeds the configured speed range.
    """
    if p_b <= 0.0:
        return 0.0, 0.0
    target = p_b * geom.transmission_eff
    lo, hi = 0.0, geom.n_fan_max
    p_hi = solve_operating_point(hi, geom).power
    if p_hi < target:
        raise PowerBracketError(
            f"power {p_b:.0f} W exceeds fan capability {p_hi:.0f} W at "
            f"{geom.n_fan_max} rev/s")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if solve_operating_point(mid, geom).power < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * geom.n_fan_max:
            break
    n_fan = 0.5 * (lo + hi)
    op = solve_operating_point(n_fan, geom)
    return op.thrust_ducted, n_fan


def fan_load_power(n: float, geom: FanGeometry) -> float:
    """Load power (W) the engine must supply at crankshaft speed n (rev/s).

    Fan absorbed power at the pulley-mapped speed, grossed up by the belt
    transmission losses.
    """
    if n <= 0.0:
        return 0.0
    op = solve_operating_point(n * geom.pulley_ratio, geom)
    return op.power / geom.transmission_eff


def ducted_thrust_at_crank_speed(n: float, geom: FanGeometry) -> float:
    """Plant output: T_DF (N) when the crankshaft turns at n rev/s."""
    if n <= 0.0:
        return 0.0
    return solve_operating_point(n * geom.pulley_ratio, geom).thrust_ducted


def thrust_power_map(q_eng: float, n: float, geom: FanGeometry) -> float:
    """T_DF (N) reached when brake power Q_eng * 2*pi*n is fed to the fan."""
    p_b = q_eng * TWO_PI * n
    if p_b <= 0.0:
        return 0.0
    return thrust_from_power(p_b, geom)[0]


def thrust_jacobian(q_eng: float, n: float, geom: FanGeometry,
                    rel_step: float = 1e-3):
    """Central-difference sensitivities (dT_DF/dQ_eng, dT_DF/dn).

    Differentiates the power-matching thrust map, so both entries inherit
    T_DF's dependence on brake power P_b = Q_eng * 2*pi*n.
    """
    hq = max(abs(q_eng) * rel_step, 1e-6)
    hn = max(abs(n) * rel_step, 1e-6)
    dt_dq = (thrust_power_map(q_eng + hq, n, geom)
             - thrust_power_map(q_eng - hq, n, geom)) / (2.0 * hq)
    dt_dn = (thrust_power_map(q_eng, n + hn, geom)
             - thrust_power_map(q_eng, n - hn, geom)) / (2.0 * hn)
    return dt_dq, dt_dn
