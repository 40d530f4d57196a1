"""Receding-horizon controller on the LPV prediction model.

The optimizer works in velocity form: decision variables are the input
increments over the control horizon, the predicted output trail starts at
the measured output, and state differences propagate through the frozen
per-step matrices.  Tracking and move terms are scaled per channel by the
constraint spans so the weighting factors compare like with like.  The
condensed problem is a strictly convex QP in 2*Nc variables: input box
limits enter as hard linear inequalities handled by Hildreth dual
coordinate ascent, output limits as quadratic penalties activated by a
short working-set refinement loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import ControlInput
from .fan import KGF, FanGeometry
from .lpv import LpvModel, build_lpv
from .networks import RbfModel


@dataclass(frozen=True)
class MpcConfig:
    n1: int = 1
    n2: int = 8
    nc: int = 3
    eps: float = 0.8                  # tracking weight
    xi: float = 0.5                   # move-suppression weight
    tps_bounds: tuple = (5.0, 90.0)            # %
    mf_bounds: tuple = (0.0011, 0.0055)        # kg/s
    thrust_bounds: tuple = (0.0, 150.0 * KGF)  # N
    lambda_bounds: tuple = (0.68, 1.26)
    soft_weight: float = 1.0e3        # output-violation penalty, times eps
    qp_max_iter: int = 500
    qp_tol: float = 1.0e-8

    def __post_init__(self):
        if not (1 <= self.n1 <= self.n2 and 1 <= self.nc <= self.n2):
            raise ValueError("need 1 <= N1 <= N2 and 1 <= Nc <= N2")
        if self.eps <= 0 or self.xi <= 0:
            raise ValueError("weights must be positive")

    @property
    def output_scale(self) -> np.ndarray:
        """1/span for [thrust, lambda]; makes the two error channels commensurate."""
        return np.array([1.0 / (self.thrust_bounds[1] - self.thrust_bounds[0]),
                         1.0 / (self.lambda_bounds[1] - self.lambda_bounds[0])])

    @property
    def input_scale(self) -> np.ndarray:
        """1/span for [tps, m_fi]."""
        return np.array([1.0 / (self.tps_bounds[1] - self.tps_bounds[0]),
                         1.0 / (self.mf_bounds[1] - self.mf_bounds[0])])

    @property
    def u_lower(self) -> np.ndarray:
        return np.array([self.tps_bounds[0], self.mf_bounds[0]])

    @property
    def u_upper(self) -> np.ndarray:
        return np.array([self.tps_bounds[1], self.mf_bounds[1]])


@dataclass(frozen=True)
class Measurement:
    """Sensor bundle fed to the controller each step (may carry noise)."""

    state: np.ndarray    # [Q_eng, n, lambda]
    output: np.ndarray   # [T_DF, lambda]


@dataclass(frozen=True)
class HorizonSolution:
    du: np.ndarray            # (Nc, 2) optimal input increments
    predicted: np.ndarray     # (N2, 2) absolute predicted outputs
    cost: float               # solver objective (tracking + moves + penalties)
    iterations: int
    kkt_residual: float
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    capped: bool = False


def predict_horizon(lpv: LpvModel, y0: np.ndarray, dx0: np.ndarray,
                    du_seq: np.ndarray, n2: int) -> np.ndarray:
    """Propagate output predictions over n2 steps in velocity form.

    dx(k+1) = A dx(k) + B du(k), dy(k) = C dx(k), with inputs frozen after
    the increment sequence runs out; absolute outputs accumulate from the
    measured y0.  With zero increments and zero initial state difference
    every prediction equals y0.
    """
    du_seq = np.atleast_2d(du_seq)
    dx = np.asarray(dx0, dtype=float).copy()
    y = np.asarray(y0, dtype=float).copy()
    out = np.empty((n2, 2))
    for k in range(n2):
        du = du_seq[k] if k < len(du_seq) else np.zeros(2)
        dx = lpv.a @ dx + lpv.b @ du
        y = y + lpv.c @ dx
        out[k] = y
    return out


def _impulse_matrix(lpv: LpvModel, nc: int, n2: int) -> np.ndarray:
    """(2*n2, 2*nc) map from stacked increments to stacked output deviations."""
    g = np.empty((2 * n2, 2 * nc))
    y0 = np.zeros(2)
    dx0 = np.zeros(3)
    for col in range(2 * nc):
        du = np.zeros((nc, 2))
        du[col // 2, col % 2] = 1.0
        g[:, col] = predict_horizon(lpv, y0, dx0, du, n2).ravel()
    return g


def cost(config: MpcConfig, refs: np.ndarray, predicted: np.ndarray,
         du_seq: np.ndarray) -> float:
    """Tracking-plus-move objective over the horizon (span-scaled channels)."""
    refs = np.atleast_2d(refs)
    predicted = np.atleast_2d(predicted)
    du_seq = np.atleast_2d(du_seq)
    w_y = config.output_scale
    w_u = config.input_scale
    track = 0.0
    for j in range(config.n1 - 1, config.n2):
        err = (refs[j] - predicted[j]) * w_y
        track += float(err @ err)
    moves = 0.0
    for k in range(min(config.nc, len(du_seq))):
        step = du_seq[k] * w_u
        moves += float(step @ step)
    return config.eps * track + config.xi * moves


def hildreth(e_mat: np.ndarray, f_vec: np.ndarray, m_mat: np.ndarray,
             gamma: np.ndarray, max_iter: int = 500, tol: float = 1e-8):
    """Minimize 0.5 z'Ez + f'z subject to M z <= gamma, E positive definite.

    Dual coordinate ascent on the constraint multipliers; when the
    unconstrained minimizer is interior it is returned outright, which makes
    the interior case bit-identical to the dense closed-form solve.
    Returns (z, multipliers, iterations, kkt_residual, capped).
    """
    e_inv = np.linalg.inv(e_mat)
    z_free = -e_inv @ f_vec
    slack = m_mat @ z_free - gamma
    n_con = len(gamma)
    if np.all(slack <= tol):
        return z_free, np.zeros(n_con), 0, float(max(slack.max(), 0.0)), False

    p_mat = m_mat @ e_inv @ m_mat.T
    d_vec = gamma + m_mat @ e_inv @ f_vec
    lam = np.zeros(n_con)
    capped = True
    iterations = max_iter
    for it in range(1, max_iter + 1):
        delta = 0.0
        for i in range(n_con):
            if p_mat[i, i] <= 0.0:
                continue
            w = -(d_vec[i] + p_mat[i] @ lam - p_mat[i, i] * lam[i]) / p_mat[i, i]
            new = max(0.0, w)
            delta = max(delta, abs(new - lam[i]))
            lam[i] = new
        if delta <= tol * max(1.0, float(np.max(np.abs(lam)))):
            iterations = it
            capped = False
            break
    z = -e_inv @ (f_vec + m_mat.T @ lam)
    resid = m_mat @ z - gamma
    kkt = max(float(np.max(resid, initial=0.0)),
              float(np.max(np.abs(lam * resid), initial=0.0)))
    return z, lam, iterations, kkt, capped


def _box_constraints(config: MpcConfig, u_prev: np.ndarray):
    """Cumulative-increment box: lb <= u_prev + sum du <= ub at every step."""
    nc = config.nc
    rows = []
    rhs = []
    for k in range(nc):
        for ch in range(2):
            row = np.zeros(2 * nc)
            row[[2 * i + ch for i in range(k + 1)]] = 1.0
            rows.append(row.copy())
            rhs.append(config.u_upper[ch] - u_prev[ch])
            rows.append(-row)
            rhs.append(u_prev[ch] - config.u_lower[ch])
    return np.array(rows), np.array(rhs)


def solve_qp(lpv: LpvModel, meas: Measurement, refs: np.ndarray,
             u_prev: np.ndarray, config: MpcConfig) -> HorizonSolution:
    """Condense the horizon into a 2*Nc-variable QP and solve it.

    Output limits are enforced softly: predicted violations add quadratic
    pull-back terms and the QP is re-solved, at most three refinement
    rounds.  The returned increments always satisfy the input box.
    """
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    u_prev = np.asarray(u_prev, dtype=float)
    y0 = np.asarray(meas.output, dtype=float)
    nc, n2 = config.nc, config.n2

    g = _impulse_matrix(lpv, nc, n2)
    sel = slice(2 * (config.n1 - 1), 2 * n2)
    g_s = g[sel]
    y0_s = np.tile(y0, n2)[sel]
    ref_s = refs[:n2].ravel()[sel]

    w_y = np.tile(config.output_scale, n2)[sel]
    q_diag = config.eps * w_y ** 2
    r_diag = config.xi * np.tile(config.input_scale, nc) ** 2

    e_base = 2.0 * (g_s.T @ (q_diag[:, None] * g_s) + np.diag(r_diag))
    f_base = 2.0 * g_s.T @ (q_diag * (y0_s - ref_s))
    m_mat, gamma = _box_constraints(config, u_prev)

    y_lo = np.tile([config.thrust_bounds[0], config.lambda_bounds[0]], n2)[sel]
    y_hi = np.tile([config.thrust_bounds[1], config.lambda_bounds[1]], n2)[sel]
    rho = config.soft_weight * config.eps * w_y ** 2

    penalties: set = set()
    z = np.zeros(2 * nc)
    iterations = 0
    kkt = 0.0
    capped = False
    for _ in range(3):
        e_mat = e_base.copy()
        f_vec = f_base.copy()
        for (row, bound) in sorted(penalties):
            g_row = g_s[row]
            e_mat += 2.0 * rho[row] * np.outer(g_row, g_row)
            f_vec += 2.0 * rho[row] * (y0_s[row] - bound) * g_row
        z, lam, iterations, kkt, capped = hildreth(
            e_mat, f_vec, m_mat, gamma, config.qp_max_iter, config.qp_tol)
        y_pred = y0_s + g_s @ z
        new_penalties = set(penalties)
        for row in range(len(y_pred)):
            if y_pred[row] > y_hi[row] + 1e-12:
                new_penalties.add((row, y_hi[row]))
            elif y_pred[row] < y_lo[row] - 1e-12:
                new_penalties.add((row, y_lo[row]))
        if new_penalties == penalties:
            break
        penalties = new_penalties

    du = z.reshape(nc, 2)
    predicted = predict_horizon(lpv, y0, np.zeros(3), du, n2)
    base_cost = cost(config, refs, predicted, du)
    pen_cost = 0.0
    y_pred = y0_s + g_s @ z
    for (row, bound) in sorted(penalties):
        pen_cost += rho[row] * float(y_pred[row] - bound) ** 2
    active = (m_mat @ z - gamma) > -1e-9
    return HorizonSolution(du=du, predicted=predicted,
                           cost=base_cost + pen_cost, iterations=iterations,
                           kkt_residual=kkt, active=active, capped=capped)


def _apply_first_move(u_prev: np.ndarray, solution: HorizonSolution,
                      config: MpcConfig) -> ControlInput:
    u = u_prev + solution.du[0]
    u = np.minimum(np.maximum(u, config.u_lower), config.u_upper)
    return ControlInput(tps=float(u[0]), m_fi=float(u[1]))


def ampc_step(meas: Measurement, refs: np.ndarray, rbf: RbfModel,
              geom: FanGeometry, config: MpcConfig, u_prev: np.ndarray,
              t: float = 0.0):
    """One adaptive step: relinearize at the measurement, optimize, apply.

    Returns (input to apply, horizon solution, the LPV model used).  Only
    the first increment of the optimal sequence ever reaches the plant.
    """
    lpv = build_lpv(rbf, geom, np.asarray(meas.state, dtype=float), u_prev, t=t)
    solution = solve_qp(lpv, meas, refs, u_prev, config)
    return _apply_first_move(u_prev, solution, config), solution, lpv


def linear_mpc_step(fixed_lpv: LpvModel, meas: Measurement, refs: np.ndarray,
                    config: MpcConfig, u_prev: np.ndarray):
    """Baseline with the prediction model frozen at its initial point."""
    solution = solve_qp(fixed_lpv, meas, refs, u_prev, config)
    return _apply_first_move(u_prev, solution, config), solution
