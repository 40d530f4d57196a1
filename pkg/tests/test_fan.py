"""Fan aerodynamics: blade-element sums, duct gain, power inversion."""

import math

import numpy as np
import pytest

from dflsim.fan import (FanGeometry, PowerBracketError, blade_element_coeffs,
                        duct_ratio, ducted_thrust_at_crank_speed,
                        fan_load_power, fan_power, solve_operating_point,
                        thrust_from_power, thrust_jacobian, unducted_thrust,
                        unducted_torque)

G = FanGeometry()


class TestBladeElementCoeffs:
    def test_no_relative_wind_no_force(self):
        assert blade_element_coeffs(0.21, 0.0, 0.0, G) == (0.0, 0.0)

    def test_zero_lift_angle_leaves_only_drag(self):
        # choose the axial inflow that puts the mid-span element exactly at
        # its zero-lift angle: thrust contribution <= 0, torque > 0
        r, n = 0.21, 80.0
        twist = float(G.twist(r))
        vi = 2.0 * math.pi * n * r * math.tan(twist)
        t_c, q_c = blade_element_coeffs(r, n, vi, G)
        assert t_c == pytest.approx(-0.06 * 0.02 * math.sin(twist), rel=1e-12)
        assert q_c == pytest.approx(0.06 * 0.02 * math.cos(twist) * r,
                                    rel=1e-12)
        assert t_c < 0.0 < q_c

    def test_mid_span_hand_arithmetic(self):
        # manual polar evaluation at r=0.21 m, n=80 rev/s, vi=15 m/s
        r, n, vi = 0.21, 80.0, 15.0
        u_t = 2.0 * math.pi * n * r
        phi = math.atan2(vi, u_t)
        frac = (r - 0.07) / (0.35 - 0.07)
        twist = math.radians(30.0) + (math.radians(10.0) - math.radians(30.0)) * frac
        cl = min(max(0.9 * 2.0 * math.pi * (twist - phi), -1.2), 1.2)
        t_hand = 0.06 * (cl * math.cos(phi) - 0.02 * math.sin(phi))
        q_hand = 0.06 * (cl * math.sin(phi) + 0.02 * math.cos(phi)) * r
        t_c, q_c = blade_element_coeffs(r, n, vi, G)
        assert t_c == pytest.approx(t_hand, rel=1e-12)
        assert q_c == pytest.approx(q_hand, rel=1e-12)
        assert t_hand == pytest.approx(0.06967117592668111, rel=1e-12)


class TestThrustAndTorque:
    def test_zero_speed(self):
        assert unducted_thrust(0.0, G) == 0.0
        assert unducted_torque(0.0, G) == 0.0

    def test_monotone_in_speed(self):
        speeds = np.linspace(10.0, 150.0, 15)
        thrusts = [unducted_thrust(n, G) for n in speeds]
        torques = [unducted_torque(n, G) for n in speeds]
        assert all(b > a for a, b in zip(thrusts, thrusts[1:]))
        assert all(b > a for a, b in zip(torques, torques[1:]))

    def test_grid_convergence(self):
        fine = FanGeometry(element_count=64)
        t32, t64 = unducted_thrust(90.0, G), unducted_thrust(90.0, fine)
        q32, q64 = unducted_torque(90.0, G), unducted_torque(90.0, fine)
        assert abs(t64 - t32) / t32 < 0.005
        assert abs(q64 - q32) / q32 < 0.005


class TestFanPower:
    def test_zero_speed(self):
        assert fan_power(0.0, 100.0) == 0.0

    def test_unit_case(self):
        assert fan_power(1.0, 1.0) == pytest.approx(2.0 * math.pi, rel=1e-15)

    def test_identity_at_operating_point(self):
        op = solve_operating_point(90.0, G)
        assert op.power == 2.0 * math.pi * 90.0 * op.torque


class TestDuctRatio:
    def test_equal_areas(self):
        assert duct_ratio(G) == 1.26

    def test_cube_root_of_eight(self):
        assert duct_ratio(FanGeometry(outlet_area_ratio=8.0)) == \
            pytest.approx(2.52, rel=1e-14)

    def test_half_area_hand_value(self):
        assert duct_ratio(FanGeometry(outlet_area_ratio=0.5)) == \
            pytest.approx(1.0000626627399658, rel=1e-12)

    def test_cube_root_scaling(self):
        k = 1.7
        base = duct_ratio(FanGeometry(outlet_area_ratio=2.0))
        scaled = duct_ratio(FanGeometry(outlet_area_ratio=2.0 * k ** 3))
        assert scaled == pytest.approx(k * base, rel=1e-12)


class TestThrustFromPower:
    def test_zero_power(self):
        assert thrust_from_power(0.0, G) == (0.0, 0.0)

    @pytest.mark.parametrize("p_b", [2.0e3, 1.0e4, 3.0e4])
    def test_round_trip_residual(self, p_b):
        _, n_fan = thrust_from_power(p_b, G)
        op = solve_operating_point(n_fan, G)
        assert abs(op.power - p_b * G.transmission_eff) / (
            p_b * G.transmission_eff) < 1e-6

    def test_monotone_in_power(self):
        thrusts = [thrust_from_power(p, G)[0]
                   for p in (1e3, 5e3, 1e4, 2e4, 4e4)]
        assert all(b > a for a, b in zip(thrusts, thrusts[1:]))

    def test_bracket_failure(self):
        small = FanGeometry(n_fan_max=30.0)
        with pytest.raises(PowerBracketError):
            thrust_from_power(1.0e5, small)


class TestFanLoadPower:
    def test_zero_speed(self):
        assert fan_load_power(0.0, G) == 0.0

    def test_monotone(self):
        vals = [fan_load_power(n, G) for n in (20.0, 50.0, 90.0, 130.0)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_equals_fan_power_over_transmission(self):
        n = 75.0
        op = solve_operating_point(n * G.pulley_ratio, G)
        assert fan_load_power(n, G) == pytest.approx(
            op.power / G.transmission_eff, rel=1e-12)


class TestThrustJacobian:
    def test_zero_torque_branch(self):
        dq, dn = thrust_jacobian(0.0, 50.0, G)
        assert dn == 0.0

    def test_richardson_step_halving(self):
        d1 = thrust_jacobian(20.0, 80.0, G, rel_step=1e-3)
        d2 = thrust_jacobian(20.0, 80.0, G, rel_step=5e-4)
        assert abs(d2[0] - d1[0]) / abs(d1[0]) < 1e-4
        assert abs(d2[1] - d1[1]) / abs(d1[1]) < 1e-4

    def test_matches_chain_rule_through_power(self):
        # T_DF depends on (Q, n) only through P_b = 2*pi*n*Q, so the entries
        # must equal dT/dP evaluated on the 1-D power map times the partials
        # of P_b, and their ratio must be exactly Q/n
        q0, n0 = 20.0, 80.0
        dq, dn = thrust_jacobian(q0, n0, G)
        p_b = 2.0 * math.pi * n0 * q0
        h = p_b * 1e-4
        t_plus = thrust_from_power(p_b + h, G)[0]
        t_minus = thrust_from_power(p_b - h, G)[0]
        dt_dp = (t_plus - t_minus) / (2.0 * h)
        assert dq == pytest.approx(dt_dp * 2.0 * math.pi * n0, rel=1e-6)
        assert dn == pytest.approx(dt_dp * 2.0 * math.pi * q0, rel=1e-6)
        assert dn / dq == pytest.approx(q0 / n0, rel=1e-9)

    def test_nonnegative_over_operating_range(self):
        for q0, n0 in [(5.0, 40.0), (15.0, 70.0), (30.0, 105.0)]:
            dq, dn = thrust_jacobian(q0, n0, G)
            assert dq >= 0.0 and dn >= 0.0


class TestGeometryValidation:
    def test_bad_cutout(self):
        with pytest.raises(ValueError):
            FanGeometry(root_cutout=0.4)

    def test_element_count_floor(self):
        with pytest.raises(ValueError):
            FanGeometry(element_count=8)

    def test_crank_speed_thrust_consistency(self):
        n = 90.0
        op = solve_operating_point(n * G.pulley_ratio, G)
        assert ducted_thrust_at_crank_speed(n, G) == op.thrust_ducted
