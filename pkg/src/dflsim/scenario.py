"""Closed-loop takeoff-preparation scenario and its metrics.

Couples the engine and fan plants at the 0.1 s control rate, feeds the
controller noisy measurements, and logs every step to a trajectory record.
The reference schedule ramps thrust from idle to hover and steps the
air-fuel-ratio target from the rich power setting to stoichiometric once
thrust has stabilized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (ControlInput, EngineParams, EngineStallError,
                     make_initial_state, step_engine)
from .fan import KGF, FanGeometry, ducted_thrust_at_crank_speed, fan_load_power
from .lpv import LPV_CSV_HEADER, build_lpv, lpv_csv_row
from .mpc import Measurement, MpcConfig, ampc_step, linear_mpc_step
from .networks import RbfModel

CONTROLLER_KINDS = ("ampc", "linear-mpc", "open-loop")


class ScenarioStallError(RuntimeError):
    """Plant stalled mid-run; carries the partial trajectory."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


@dataclass(frozen=True)
class ScenarioConfig:
    steps: int = 250
    dt: float = 0.1                       # s, control interval
    thrust_idle: float = 10.0             # kgf
    thrust_hover: float = 80.0            # kgf
    ramp_start: int = 10                  # step index
    ramp_end: int = 100                   # step index, ramp finishes here
    lam_rich: float = 0.82
    lam_eff: float = 1.0
    lam_step_at: int = 150                # step index of the AFR retarget
    noise_std: float = 0.005              # std, normalized output units
    seed: int = 7
    settle_margin: int = 30               # steps allowed for transients in metrics
    q_span: float = 60.0                  # N*m, scales state-measurement noise
    n_span: float = 150.0                 # rev/s, scales state-measurement noise
    init_tps: float = 19.5                # %
    init_m_fi: float = 0.00124            # kg/s
    init_n: float = 37.0                  # rev/s
    init_manifold: float = 5.7e4          # Pa
    warmup_steps: int = 200

    def thrust_reference(self) -> np.ndarray:
        """Per-step thrust reference in newtons."""
        ref = np.empty(self.steps)
        for k in range(self.steps):
            if k < self.ramp_start:
                frac = 0.0
            elif k >= self.ramp_end:
                frac = 1.0
            else:
                frac = (k - self.ramp_start) / (self.ramp_end - self.ramp_start)
            ref[k] = (self.thrust_idle
                      + (self.thrust_hover - self.thrust_idle) * frac) * KGF
        return ref

    def lambda_reference(self) -> np.ndarray:
        ref = np.full(self.steps, self.lam_rich)
        ref[self.lam_step_at:] = self.lam_eff
        return ref


@dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    time: float
    thrust_ref: float       # kgf (reporting unit)
    lam_ref: float
    thrust_true: float      # kgf
    lam_true: float
    thrust_meas: float      # kgf
    lam_meas: float
    tps: float              # % applied
    m_fi: float             # kg/s applied
    q_eng: float            # N*m
    n: float                # rev/s
    cost: float
    qp_iterations: int


TRAJECTORY_HEADER = ("step,time_s,thrust_ref_kgf,lambda_ref,thrust_kgf,lambda,"
                     "thrust_meas_kgf,lambda_meas,tps_pct,m_fi_kg_s,q_eng_nm,"
                     "n_rev_s,cost,qp_iterations")


def relative_error(actual, reference):
    """Percent deviation of actual from reference."""
    actual = np.asarray(actual, dtype=float)
    reference = np.asarray(reference, dtype=float)
    return (actual - reference) / reference * 100.0


def run_scenario(params: EngineParams, geom: FanGeometry, mpc: MpcConfig,
                 scenario: ScenarioConfig, controller: str = "ampc",
                 rbf: RbfModel | None = None, lpv_trace: list | None = None):
    """Run the takeoff-preparation scenario and return (records, metrics).

    ``controller`` is one of ampc / linear-mpc / open-loop; the network model
    is required for the first two.  A plant stall raises ScenarioStallError
    with the partial trajectory attached.
    """
    if controller not in CONTROLLER_KINDS:
        raise ValueError(f"unknown controller kind {controller!r}")
    if controller != "open-loop" and rbf is None:
        raise ValueError("a trained RBF model is required for closed-loop runs")

    t_ref = scenario.thrust_reference()
    l_ref = scenario.lambda_reference()
    rng = np.random.default_rng(scenario.seed)
    out_noise = scenario.noise_std * np.array([
        mpc.thrust_bounds[1] - mpc.thrust_bounds[0],
        mpc.lambda_bounds[1] - mpc.lambda_bounds[0]])
    state_noise = scenario.noise_std * np.array([scenario.q_span, scenario.n_span])

    state = make_initial_state(params, n=scenario.init_n,
                               manifold_pressure=scenario.init_manifold,
                               m_fi=scenario.init_m_fi)
    u = ControlInput(tps=scenario.init_tps, m_fi=scenario.init_m_fi)
    try:
        for _ in range(scenario.warmup_steps):
            state = step_engine(state, u, fan_load_power(state.n, geom),
                                params, scenario.dt)
    except EngineStallError as exc:
        raise ScenarioStallError(f"plant stalled during warmup: {exc}",
                                 []) from exc
    u_prev = np.array([u.tps, u.m_fi])

    fixed_lpv = None
    if controller == "linear-mpc":
        x0 = np.array([state.q_eng, state.n, state.lam])
        fixed_lpv = build_lpv(rbf, geom, x0, u_prev)
        if lpv_trace is not None:
            lpv_trace.append(fixed_lpv)

    records = []
    for k in range(scenario.steps):
        t_now = k * scenario.dt
        thrust_true = ducted_thrust_at_crank_speed(state.n, geom)
        y_true = np.array([thrust_true, state.lam])
        eps_y = rng.normal(size=2)
        eps_x = rng.normal(size=2)
        y_meas = y_true + eps_y * out_noise
        x_meas = np.array([state.q_eng + eps_x[0] * state_noise[0],
                           state.n + eps_x[1] * state_noise[1],
                           y_meas[1]])
        meas = Measurement(state=x_meas, output=y_meas)
        idx = np.minimum(np.arange(k + 1, k + 1 + mpc.n2), scenario.steps - 1)
        refs = np.stack([t_ref[idx], l_ref[idx]], axis=1)

        if controller == "ampc":
            u_cmd, sol, lpv = ampc_step(meas, refs, rbf, geom, mpc, u_prev,
                                        t=t_now)
            if lpv_trace is not None:
                lpv_trace.append(lpv)
            cost_val, iters = sol.cost, sol.iterations
        elif controller == "linear-mpc":
            u_cmd, sol = linear_mpc_step(fixed_lpv, meas, refs, mpc, u_prev)
            cost_val, iters = sol.cost, sol.iterations
        else:
            u_cmd = ControlInput(tps=u_prev[0], m_fi=u_prev[1])
            cost_val, iters = 0.0, 0
        if not np.isfinite(cost_val):
            raise RuntimeError(f"solver produced a non-finite cost at step {k}")

        try:
            state = step_engine(state, u_cmd, fan_load_power(state.n, geom),
                                params, scenario.dt)
        except EngineStallError as exc:
            raise ScenarioStallError(f"plant stalled at step {k}: {exc}",
                                     records) from exc
        u_prev = np.array([u_cmd.tps, u_cmd.m_fi])
        records.append(TrajectoryRecord(
            step=k, time=t_now, thrust_ref=t_ref[k] / KGF, lam_ref=l_ref[k],
            thrust_true=thrust_true / KGF, lam_true=y_true[1],
            thrust_meas=y_meas[0] / KGF, lam_meas=y_meas[1],
            tps=u_cmd.tps, m_fi=u_cmd.m_fi, q_eng=state.q_eng, n=state.n,
            cost=cost_val, qp_iterations=iters))

    return records, compute_metrics(records, mpc, scenario)


def _segment_stats(err):
    if len(err) == 0:
        return None
    return {"count": int(len(err)), "min": float(err.min()),
            "max": float(err.max()), "mean": float(err.mean()),
            "mae": float(np.abs(err).mean())}


def compute_metrics(records, mpc: MpcConfig, scenario: ScenarioConfig) -> dict:
    """Per-segment relative-error statistics from a trajectory.

    The thrust steady segment starts a settle margin after the ramp ends;
    the rich-lambda segment additionally stops a preview horizon before the
    lambda retarget (the controller sees future references, so it leaves the
    old setpoint deliberately); the efficient-lambda segment starts a settle
    margin after the retarget.
    """
    t_true = np.array([r.thrust_true for r in records])
    t_ref = np.array([r.thrust_ref for r in records])
    lam_true = np.array([r.lam_true for r in records])
    lam_ref = np.array([r.lam_ref for r in records])
    n_rec = len(records)

    t_err = relative_error(t_true, t_ref)
    lam_err = relative_error(lam_true, lam_ref)

    steady_from = min(scenario.ramp_end + scenario.settle_margin, n_rec)
    rich_to = max(min(scenario.lam_step_at - mpc.n2, n_rec), steady_from)
    eff_from = min(scenario.lam_step_at + scenario.settle_margin, n_rec)

    metrics = {
        "steps": n_rec,
        "thrust_ramp": _segment_stats(t_err[scenario.ramp_start:
                                            min(scenario.ramp_end, n_rec)]),
        "thrust_steady": _segment_stats(t_err[steady_from:]),
        "lambda_rich_steady": _segment_stats(lam_err[steady_from:rich_to]),
        "lambda_eff_steady": _segment_stats(lam_err[eff_from:]),
    }
    lam_joint = np.concatenate([lam_err[steady_from:rich_to],
                                lam_err[eff_from:]])
    metrics["lambda_steady"] = _segment_stats(lam_joint)
    return metrics


# ---------------------------------------------------------------------------
# CSV round-trip
# ---------------------------------------------------------------------------

def record_to_row(r: TrajectoryRecord) -> str:
    cells = [str(r.step), repr(float(r.time)),
             repr(float(r.thrust_ref)), repr(float(r.lam_ref)),
             repr(float(r.thrust_true)), repr(float(r.lam_true)),
             repr(float(r.thrust_meas)), repr(float(r.lam_meas)),
             repr(float(r.tps)), repr(float(r.m_fi)),
             repr(float(r.q_eng)), repr(float(r.n)),
             repr(float(r.cost)), str(r.qp_iterations)]
    return ",".join(cells)


def save_trajectory_csv(records, path) -> None:
    with open(path, "w") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for r in records:
            fh.write(record_to_row(r) + "\n")


def load_trajectory_csv(path):
    records = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != TRAJECTORY_HEADER:
            raise ValueError("unexpected trajectory header")
        for line in fh:
            c = line.rstrip("\n").split(",")
            records.append(TrajectoryRecord(
                step=int(c[0]), time=float(c[1]),
                thrust_ref=float(c[2]), lam_ref=float(c[3]),
                thrust_true=float(c[4]), lam_true=float(c[5]),
                thrust_meas=float(c[6]), lam_meas=float(c[7]),
                tps=float(c[8]), m_fi=float(c[9]), q_eng=float(c[10]),
                n=float(c[11]), cost=float(c[12]), qp_iterations=int(c[13])))
    return records


def save_lpv_trace(trace, path) -> None:
    with open(path, "w") as fh:
        fh.write(LPV_CSV_HEADER + "\n")
        for lpv in trace:
            fh.write(lpv_csv_row(lpv) + "\n")
