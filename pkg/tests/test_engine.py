"""Engine plant: sub-model contracts, delay timing, integrator quality."""

import math

import numpy as np
import pytest

from dflsim.engine import (ControlInput, EngineParams, EngineStallError,
                           air_mass_flow, cylinder_air_flow, engine_torque,
                           friction_power, make_initial_state, normalized_afr,
                           step_engine, thermal_efficiency, combustion_power)

P = EngineParams()


def settle(params, u, load, steps=400, n0=60.0, pm0=7.0e4):
    state = make_initial_state(params, n=n0, manifold_pressure=pm0, m_fi=u.m_fi)
    for _ in range(steps):
        state = step_engine(state, u, load, params, 0.1)
    return state


class TestAirMassFlow:
    def test_closed_throttle_passes_no_air(self):
        assert air_mass_flow(0.0, 7.0e4, 50.0, P) == 0.0

    def test_monotone_in_throttle(self):
        flows = [air_mass_flow(tps, 7.0e4, 50.0, P)
                 for tps in (5.0, 20.0, 45.0, 70.0, 90.0)]
        assert all(b >= a for a, b in zip(flows, flows[1:]))

    def test_nominal_point_matches_orifice_formula(self):
        # independent evaluation of the documented compressible-orifice model
        # at tps=40 %, p_m=72 kPa: area shape, flow function, upstream term
        area = 1.1e-3 * (1.0 - math.cos(0.5 * math.pi * (40.0 / 90.0)))
        pr = 72000.0 / 101325.0
        psi = math.sqrt(2.0 * 1.4 / 0.4 * (pr ** (2.0 / 1.4) - pr ** (2.4 / 1.4)))
        expected = area * 101325.0 / math.sqrt(287.0 * 298.0) * psi
        assert air_mass_flow(40.0, 72000.0, 70.0, P) == pytest.approx(
            expected, rel=1e-12)
        assert expected == pytest.approx(0.05636491100433226, rel=1e-12)

    def test_no_backflow_above_ambient(self):
        assert air_mass_flow(50.0, P.ambient_pressure, 50.0, P) == 0.0

    def test_rejects_nonpositive_pressure(self):
        with pytest.raises(ValueError):
            air_mass_flow(50.0, 0.0, 50.0, P)


class TestFrictionPower:
    def test_zero_speed_zero_loss(self):
        assert friction_power(0.0, P) == 0.0

    def test_nondecreasing(self):
        grid = np.linspace(0.0, 160.0, 33)
        vals = [friction_power(n, P) for n in grid]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_nominal_polynomial_value(self):
        # 170*80 + 0.7*80^2
        assert friction_power(80.0, P) == pytest.approx(18080.0, rel=1e-14)


class TestNormalizedAfr:
    def test_stoichiometric(self):
        assert normalized_afr(P.stoich_afr * 0.003, 0.003, P.stoich_afr) == \
            pytest.approx(1.0, rel=1e-14)

    def test_zero_air(self):
        assert normalized_afr(0.0, 0.003, P.stoich_afr) == 0.0

    def test_rich_setpoint(self):
        m_f = 0.004
        assert normalized_afr(0.82 * P.stoich_afr * m_f, m_f, P.stoich_afr) == \
            pytest.approx(0.82, rel=1e-14)

    def test_zero_fuel_guard(self):
        with pytest.raises(ValueError):
            normalized_afr(0.05, 0.0, P.stoich_afr)


class TestEngineTorque:
    def test_balance_point_gives_zero(self):
        # bisect the delayed fuel rate until combustion exactly offsets
        # friction, then the torque must vanish there
        state = make_initial_state(P, n=60.0, manifold_pressure=7.0e4, m_fi=0.002)
        lo, hi = 1e-4, 6e-3
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if engine_torque(state, mid, P) < 0.0:
                lo = mid
            else:
                hi = mid
        m_bal = 0.5 * (lo + hi)
        assert engine_torque(state, m_bal, P) == pytest.approx(0.0, abs=1e-9)
        m_as = cylinder_air_flow(state.manifold_pressure, state.n, P)
        lam_burn = normalized_afr(m_as, m_bal, P.stoich_afr)
        p_comb = combustion_power(m_bal, lam_burn, state.n, P)
        assert p_comb == pytest.approx(friction_power(60.0, P), rel=1e-9)

    def test_combustion_term_linear_in_fuel_at_fixed_mixture(self):
        # at fixed efficiency (same lambda and speed) the combustion power
        # is proportional to the delayed fuel rate
        assert combustion_power(0.004, 0.9, 60.0, P) == pytest.approx(
            2.0 * combustion_power(0.002, 0.9, 60.0, P), rel=1e-14)

    def test_consistent_with_step_engine(self):
        u = ControlInput(tps=40.0, m_fi=0.0032)
        state = settle(P, u, load=8000.0)
        # settled: delayed fuel equals the command, so the reported torque
        # must equal the closed-form torque at the settled state
        assert state.q_eng == pytest.approx(engine_torque(state, u.m_fi, P),
                                            rel=1e-9)

    def test_stall_floor_raises(self):
        state = make_initial_state(P, n=5.0, manifold_pressure=7.0e4, m_fi=0.002)
        with pytest.raises(EngineStallError):
            engine_torque(state, 0.002, P)


class TestStepEngine:
    def test_equilibrium_holds_speed(self):
        u = ControlInput(tps=40.0, m_fi=0.0032)
        state = settle(P, u, load=8000.0)
        eta = thermal_efficiency(state.lam, state.n, P)
        p_comb = (P.lower_heating_value * eta * (1.0 - P.fuel_loss_coeff)
                  * u.m_fi)
        load = p_comb - friction_power(state.n, P)
        nxt = step_engine(state, u, load, P, 0.1)
        assert nxt.n == pytest.approx(state.n, rel=1e-9)

    def test_fuel_above_balance_accelerates(self):
        u = ControlInput(tps=40.0, m_fi=0.0032)
        state = settle(P, u, load=8000.0)
        nxt = step_engine(state, ControlInput(tps=40.0, m_fi=0.004), 8000.0,
                          P, 0.1)
        assert nxt.n > state.n

    def test_frozen_regression_value(self):
        # frozen from a dt_int = dt/100 reference integration of the same step
        state = make_initial_state(P, n=70.0, manifold_pressure=7.2e4,
                                   m_fi=0.003)
        out = step_engine(state, ControlInput(tps=40.0, m_fi=0.0032),
                          load_power=8000.0, params=P, dt=0.1)
        assert out.q_eng == pytest.approx(23.86205338993519, rel=1e-9)
        assert out.n == pytest.approx(70.27748441480979, rel=1e-9)
        assert out.lam == pytest.approx(0.9145266273153949, rel=1e-8)
        assert out.manifold_pressure == pytest.approx(87443.95028402086,
                                                      rel=1e-8)

    def test_dt_must_be_multiple_of_substep(self):
        state = make_initial_state(P, n=70.0, manifold_pressure=7.2e4,
                                   m_fi=0.003)
        with pytest.raises(ValueError):
            step_engine(state, ControlInput(40.0, 0.003), 0.0, P, 0.10037)

    def test_overload_stalls(self):
        state = make_initial_state(P, n=40.0, manifold_pressure=6.0e4,
                                   m_fi=0.0012)
        u = ControlInput(tps=20.0, m_fi=0.0012)
        with pytest.raises(EngineStallError):
            for _ in range(100):
                state = step_engine(state, u, 5.0e4, P, 0.1)


class TestEngineInvariants:
    def test_energy_sign_no_fuel(self):
        # zero delayed fuel: pre-fill the buffer with zeros via a zero-fuel
        # history, then check speed decays monotonically under any load
        state = make_initial_state(P, n=80.0, manifold_pressure=8.0e4,
                                   m_fi=1e-9)
        u = ControlInput(tps=40.0, m_fi=1e-9)
        prev = state.n
        for _ in range(20):
            state = step_engine(state, u, 500.0, P, 0.1)
            assert state.n < prev
            prev = state.n

    def test_equilibrium_power_balance(self):
        u = ControlInput(tps=40.0, m_fi=0.0032)
        state = settle(P, u, load=8000.0, steps=600)
        state = step_engine(state, u, 8000.0, P, 0.1)
        eta = thermal_efficiency(state.lam, state.n, P)
        p_comb = combustion_power(u.m_fi, state.lam, state.n, P)
        assert eta > 0
        residual = p_comb - friction_power(state.n, P) - 8000.0
        assert abs(residual) / 8000.0 < 1e-6

    def test_delay_timing_exact(self):
        # a fuel impulse must first reach the torque term tau_d later,
        # within one internal substep
        params = EngineParams(injection_delay=0.05, dt_int=1e-3)
        state = settle(params, ControlInput(40.0, 0.002), 4000.0)
        base = step_engine(state, ControlInput(40.0, 0.002), 4000.0, params,
                           0.1)
        # raise the command: the first 50 substeps still burn the old rate,
        # so a half-interval step must show exactly the old-fuel trajectory
        bumped = step_engine(state, ControlInput(40.0, 0.004), 4000.0, params,
                             0.05)
        held = step_engine(state, ControlInput(40.0, 0.002), 4000.0, params,
                           0.05)
        assert bumped.n == pytest.approx(held.n, rel=1e-12)
        # but the full interval must differ once the new fuel arrives
        assert base.n != pytest.approx(
            step_engine(state, ControlInput(40.0, 0.004), 4000.0, params,
                        0.1).n, rel=1e-9)

    def test_substep_halving_converges(self):
        u = ControlInput(tps=40.0, m_fi=0.0032)

        def run(dt_int):
            params = EngineParams(dt_int=dt_int)
            state = make_initial_state(params, n=70.0, manifold_pressure=7.2e4,
                                       m_fi=0.003)
            rows = []
            for _ in range(10):
                state = step_engine(state, u, 8000.0, params, 0.1)
                rows.append([state.q_eng, state.n, state.lam,
                             state.manifold_pressure])
            return np.array(rows)

        coarse, fine = run(1e-3), run(5e-4)
        assert np.max(np.abs(coarse - fine) / np.abs(fine)) < 1e-4

    def test_lambda_matches_internal_flows(self):
        u = ControlInput(tps=40.0, m_fi=0.0032)
        state = settle(P, u, load=8000.0, steps=50)
        m_as = cylinder_air_flow(state.manifold_pressure, state.n, P)
        assert state.lam == normalized_afr(m_as, u.m_fi, P.stoich_afr)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            EngineParams(fuel_loss_coeff=1.0)
        with pytest.raises(ValueError):
            EngineParams(inertia=-1.0)
