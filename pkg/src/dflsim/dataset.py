"""Identification data for the engine network models.

Excites the coupled engine + fan plant with multi-level pseudo-random input
steps, records one-step (input, state) -> next-state pairs at the 0.1 s
control rate, and adds Gaussian noise of a prescribed SNR to the training
targets.  Columns are min/max normalized to [-1, 1] using training-split
statistics only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (TWO_PI, ControlInput, EngineParams, EngineStallError,
                     air_mass_flow, friction_power, make_initial_state,
                     step_engine, thermal_efficiency)
from .fan import FanGeometry, fan_load_power

INPUT_COLUMNS = ("tps", "m_fi", "n", "lambda")
TARGET_COLUMNS = ("Q_next", "n_next", "lambda_next")
CSV_HEADER = "tps,m_fi,n,lambda,Q_next,n_next,lambda_next"

TPS_RANGE = (5.0, 90.0)
MF_RANGE = (0.0011, 0.0055)
CONTROL_DT = 0.1


@dataclass(frozen=True)
class NormStats:
    """Per-column affine map to [-1, 1], frozen from the training split."""

    in_min: np.ndarray
    in_max: np.ndarray
    out_min: np.ndarray
    out_max: np.ndarray


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray          # (N, 4): tps %, m_fi kg/s, n rev/s, lambda
    targets: np.ndarray         # (N, 3): Q N*m, n rev/s, lambda (train rows noisy)
    targets_clean: np.ndarray   # (N, 3): noiseless plant outputs
    n_train: int
    stats: NormStats

    @property
    def train_inputs(self):
        return self.inputs[:self.n_train]

    @property
    def train_targets(self):
        return self.targets[:self.n_train]

    @property
    def val_inputs(self):
        return self.inputs[self.n_train:]

    @property
    def val_targets(self):
        return self.targets[self.n_train:]


def normalize(x: np.ndarray, col_min: np.ndarray, col_max: np.ndarray) -> np.ndarray:
    """Affine map of columns onto [-1, 1]; constant columns map to 0."""
    span = np.asarray(col_max) - np.asarray(col_min)
    safe = np.where(span == 0.0, 1.0, span)
    y = 2.0 * (x - col_min) / safe - 1.0
    return np.where(span == 0.0, 0.0, y)


def denormalize(y: np.ndarray, col_min: np.ndarray, col_max: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize`."""
    return col_min + 0.5 * (y + 1.0) * (col_max - col_min)


def compute_stats(inputs: np.ndarray, targets: np.ndarray, n_train: int) -> NormStats:
    tr_in = inputs[:n_train]
    tr_out = targets[:n_train]
    return NormStats(in_min=tr_in.min(axis=0), in_max=tr_in.max(axis=0),
                     out_min=tr_out.min(axis=0), out_max=tr_out.max(axis=0))


def _tps_for_lambda(lam: float, m_fi: float, n: float, params: EngineParams) -> float:
    """Static throttle position that would hold a target lambda at speed n.

    Inverts the speed-density flow for the needed manifold pressure, then the
    orifice flow for the throttle.  Used only to shape the excitation signal.
    """
    m_as = lam * params.stoich_afr * m_fi
    p_m = (m_as * params.gas_constant * params.manifold_temp
           / (params.volumetric_eff * params.displacement * max(n, 1.0)))
    p_m = min(p_m, 0.985 * params.ambient_pressure)
    lo, hi = 0.0, 100.0
    if air_mass_flow(hi, p_m, n, params) <= m_as:
        return TPS_RANGE[1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if air_mass_flow(mid, p_m, n, params) < m_as:
            lo = mid
        else:
            hi = mid
    return min(max(0.5 * (lo + hi), TPS_RANGE[0]), TPS_RANGE[1])


def _settled_initial_state(params: EngineParams, geom: FanGeometry,
                           tps: float = 20.0, m_fi: float = 0.00125,
                           warmup_steps: int = 150):
    state = make_initial_state(params, n=40.0, manifold_pressure=6.0e4, m_fi=m_fi)
    u = ControlInput(tps=tps, m_fi=m_fi)
    for _ in range(warmup_steps):
        state = step_engine(state, u, fan_load_power(state.n, geom), params,
                            CONTROL_DT)
    return state


def generate_dataset(params: EngineParams, geom: FanGeometry,
                     sample_count: int = 1000, seed: int = 0,
                     snr_db: float = 5.0, n_train: int | None = None,
                     max_segment_retries: int = 400) -> Dataset:
    """Excite the coupled plant and assemble the identification dataset.

    Input levels hold 0.5 to 3 s.  The fuel rate performs a reflected random
    walk over its box (with occasional jumps) and each segment draws a fresh
    air-fuel-ratio target; the throttle tracks that target through the static
    air-path inverse with per-step dither, which keeps the mixture
    combustible while still covering the admissible input region.  Segments
    that stall the engine are rolled back and redrawn.  Gaussian white noise
    at ``snr_db`` (per-column signal variance over noise variance) is added
    to the training targets.
    """
    if n_train is None:
        n_train = max(1, sample_count - sample_count // 20)
    rng = np.random.default_rng(seed)
    state = _settled_initial_state(params, geom)

    inputs = np.empty((sample_count, 4))
    targets = np.empty((sample_count, 3))
    mf_lo, mf_hi = MF_RANGE
    mf_span = mf_hi - mf_lo
    filled = 0
    retries = 0

    def run_segment(hold, lam_target, m_fi, dither):
        """Advance one held segment, returning how many samples were taken."""
        nonlocal state, filled
        taken = 0
        for j in range(hold):
            if filled >= sample_count:
                break
            tps = _tps_for_lambda(lam_target, m_fi, state.n, params)
            tps = min(max(tps + float(dither[j]), TPS_RANGE[0]), TPS_RANGE[1])
            u = ControlInput(tps=tps, m_fi=m_fi)
            x_now = state.as_vector()
            state = step_engine(state, u, fan_load_power(state.n, geom),
                                params, CONTROL_DT)
            inputs[filled] = (u.tps, u.m_fi, x_now[1], x_now[2])
            targets[filled] = state.as_vector()
            filled += 1
            taken += 1
        return taken

    # coverage prologue: a deterministic bottom-up sweep of fuel levels and
    # mixture targets, guaranteeing support along the whole trim manifold
    # (the random walk below is biased toward higher torque and would
    # otherwise starve the idle corner)
    prologue_mf = (0.00125, 0.0016, 0.0021, 0.0027, 0.0033, 0.0040, 0.0047,
                   0.0054)
    prologue_lam = (0.82, 1.05, 0.92, 1.15, 0.85, 1.0, 0.88, 1.1)
    for m_fi, lam_target in zip(prologue_mf, prologue_lam):
        run_segment(12, lam_target, m_fi, rng.uniform(-1.5, 1.5, size=12))

    m_fi = prologue_mf[-1]
    while filled < sample_count:
        hold = int(rng.integers(5, 16))                      # 0.5 .. 1.5 s
        step_frac = 0.35 if rng.uniform() < 0.12 else 0.15
        # slight upward bias keeps torque's coefficient of variation low,
        # which keeps the injected-noise floor small relative to torque
        m_fi_new = m_fi + float(rng.uniform(-step_frac, step_frac + 0.08)) * mf_span
        if m_fi_new > mf_hi:
            m_fi_new = 2.0 * mf_hi - m_fi_new
        if m_fi_new < mf_lo:
            m_fi_new = 2.0 * mf_lo - m_fi_new
        lam_target = float(rng.uniform(0.78, 1.18))
        # keep combustion above friction plus a torque margin at the current
        # speed, otherwise downward fuel steps produce engine-braking samples
        # whose near-zero torque wrecks percentage metrics
        q_margin = 2.0  # N*m
        eta = thermal_efficiency(lam_target, state.n, params)
        p_need = friction_power(state.n, params) + TWO_PI * state.n * q_margin
        mf_floor = p_need / (params.lower_heating_value * max(eta, 1e-3)
                             * (1.0 - params.fuel_loss_coeff))
        m_fi_new = max(m_fi_new, min(mf_floor, mf_hi))
        m_fi_new = min(max(m_fi_new, mf_lo), mf_hi)
        dither = rng.uniform(-1.5, 1.5, size=hold)

        checkpoint = (state, filled, m_fi)
        m_fi = m_fi_new
        try:
            run_segment(hold, lam_target, m_fi, dither)
        except EngineStallError:
            state, filled, m_fi = checkpoint
            retries += 1
            if retries > max_segment_retries:
                raise
            continue

    targets_clean = targets.copy()
    if np.isfinite(snr_db):
        noise_std = targets[:n_train].std(axis=0) / 10.0 ** (snr_db / 20.0)
        targets = targets.copy()
        targets[:n_train] += rng.normal(size=(n_train, 3)) * noise_std

    stats = compute_stats(inputs, targets, n_train)
    return Dataset(inputs=inputs, targets=targets, targets_clean=targets_clean,
                   n_train=n_train, stats=stats)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_dataset_csv(dataset: Dataset, path) -> None:
    """Write the dataset as CSV (training-row targets keep their noise)."""
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row_in, row_out in zip(dataset.inputs, dataset.targets):
            cells = [repr(float(v)) for v in (*row_in, *row_out)]
            fh.write(",".join(cells) + "\n")


def load_dataset_csv(path, n_train: int | None = None) -> Dataset:
    """Read a dataset CSV; normalization stats are rebuilt from the train split."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim == 1:
        data = data[None, :]
    inputs, targets = data[:, :4], data[:, 4:]
    if n_train is None:
        n_train = max(1, len(inputs) - len(inputs) // 20)
    stats = compute_stats(inputs, targets, n_train)
    return Dataset(inputs=inputs, targets=targets, targets_clean=targets.copy(),
                   n_train=n_train, stats=stats)
