"""Engine network models: multi-layer perceptron, Elman recurrent network,
and Gaussian radial-basis-function network.

All models map a normalized 4-vector [tps, m_fi, n, lambda] at one sample to
the normalized state triple [Q_eng, n, lambda] one sample ahead.  The MLP and
Elman nets train by gradient descent on mean squared error; the RBF trains
its centers by k-means, its radii by a nearest-co-center heuristic, and its
output weights by a ridge-regularized batch least-squares solve followed by
optional normalized-LMS refinement passes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset, NormStats, denormalize, normalize


class TrainingDivergedError(RuntimeError):
    """Loss blew up during gradient training."""


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpModel:
    iw: np.ndarray   # (hidden, 4)
    lw: np.ndarray   # (3, hidden)
    b1: np.ndarray   # (hidden,)
    b2: np.ndarray   # (3,)
    stats: NormStats


def init_mlp(stats: NormStats, hidden: int = 26, seed: int = 0) -> MlpModel:
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(4.0)
    return MlpModel(iw=rng.uniform(-scale, scale, (hidden, 4)),
                    lw=rng.uniform(-scale, scale, (3, hidden)) / np.sqrt(hidden),
                    b1=rng.uniform(-scale, scale, hidden),
                    b2=np.zeros(3), stats=stats)


def mlp_forward(model: MlpModel, p: np.ndarray) -> np.ndarray:
    """Single normalized input -> normalized output, tanh hidden layer."""
    hidden = np.tanh(model.iw @ p + model.b1)
    return model.lw @ hidden + model.b2


def _mlp_forward_batch(model: MlpModel, p: np.ndarray):
    hidden = np.tanh(p @ model.iw.T + model.b1)
    return hidden @ model.lw.T + model.b2, hidden


def _mlp_gradients(model: MlpModel, p: np.ndarray, y: np.ndarray):
    """Mean-squared-error gradients for a batch (mean over samples and outputs)."""
    out, hidden = _mlp_forward_batch(model, p)
    err = out - y                                   # (N, 3)
    scale = 2.0 / err.size
    g_lw = scale * err.T @ hidden
    g_b2 = scale * err.sum(axis=0)
    back = (err @ model.lw) * (1.0 - hidden ** 2)   # (N, hidden)
    g_iw = scale * back.T @ p
    g_b1 = scale * back.sum(axis=0)
    mse = float(np.mean(err ** 2))
    return g_iw, g_lw, g_b1, g_b2, mse


def train_mlp(model: MlpModel, dataset: Dataset, lr_weights: float = 0.1,
              lr_bias: float = 0.1, max_epochs: int = 5000,
              mse_target: float = 1e-4):
    """Full-batch gradient descent; returns (trained model, per-epoch MSE)."""
    p = normalize(dataset.train_inputs, dataset.stats.in_min, dataset.stats.in_max)
    y = normalize(dataset.train_targets, dataset.stats.out_min, dataset.stats.out_max)
    iw, lw, b1, b2 = model.iw.copy(), model.lw.copy(), model.b1.copy(), model.b2.copy()
    losses = []
    for _ in range(max_epochs):
        cur = MlpModel(iw, lw, b1, b2, model.stats)
        g_iw, g_lw, g_b1, g_b2, mse = _mlp_gradients(cur, p, y)
        losses.append(mse)
        if mse > 1e3 or not np.isfinite(mse):
            raise TrainingDivergedError(f"MLP loss diverged: {mse}")
        if mse <= mse_target:
            break
        iw = iw - lr_weights * g_iw
        lw = lw - lr_weights * g_lw
        b1 = b1 - lr_bias * g_b1
        b2 = b2 - lr_bias * g_b2
    return MlpModel(iw, lw, b1, b2, model.stats), np.asarray(losses)


# ---------------------------------------------------------------------------
# Elman
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ElmanModel:
    iw: np.ndarray    # (hidden, 4)
    lw1: np.ndarray   # (hidden, hidden) context recurrence
    lw2: np.ndarray   # (3, hidden)
    b1: np.ndarray
    b2: np.ndarray
    stats: NormStats

    @property
    def hidden(self) -> int:
        return self.iw.shape[0]


def init_elman(stats: NormStats, hidden: int = 12, seed: int = 0) -> ElmanModel:
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(4.0 + hidden)
    return ElmanModel(iw=rng.uniform(-scale, scale, (hidden, 4)),
                      lw1=rng.uniform(-scale, scale, (hidden, hidden)),
                      lw2=rng.uniform(-scale, scale, (3, hidden)) / np.sqrt(hidden),
                      b1=rng.uniform(-scale, scale, hidden),
                      b2=np.zeros(3), stats=stats)


def elman_forward(model: ElmanModel, p: np.ndarray, context: np.ndarray):
    """One recurrent step: returns (normalized output, new context)."""
    a = np.tanh(model.iw @ p + model.lw1 @ context + model.b1)
    return model.lw2 @ a + model.b2, a


def train_elman(model: ElmanModel, dataset: Dataset, lr: float = 0.01,
                max_epochs: int = 1000, mse_target: float = 1e-4):
    """Sequential gradient training, context truncated at one step.

    The stored context enters each update as a constant input (classical
    Elman training); samples are visited in time order so the context
    threads through the excitation sequence.  Returns (model, MSE curve).
    """
    p_all = normalize(dataset.train_inputs, dataset.stats.in_min, dataset.stats.in_max)
    y_all = normalize(dataset.train_targets, dataset.stats.out_min, dataset.stats.out_max)
    iw, lw1, lw2 = model.iw.copy(), model.lw1.copy(), model.lw2.copy()
    b1, b2 = model.b1.copy(), model.b2.copy()
    n_out = y_all.shape[1]
    losses = []
    for _ in range(max_epochs):
        context = np.zeros(model.hidden)
        sq_sum = 0.0
        for p, y in zip(p_all, y_all):
            a = np.tanh(iw @ p + lw1 @ context + b1)
            err = (lw2 @ a + b2) - y
            sq_sum += float(err @ err)
            scale = 2.0 / n_out
            back = (err @ lw2) * (1.0 - a * a)
            lw2 -= lr * scale * np.outer(err, a)
            b2 -= lr * scale * err
            iw -= lr * scale * np.outer(back, p)
            lw1 -= lr * scale * np.outer(back, context)
            b1 -= lr * scale * back
            context = a
        mse = sq_sum / (len(p_all) * n_out)
        losses.append(mse)
        if mse > 1e3 or not np.isfinite(mse):
            raise TrainingDivergedError(f"Elman loss diverged: {mse}")
        if mse <= mse_target:
            break
    return ElmanModel(iw, lw1, lw2, b1, b2, model.stats), np.asarray(losses)


def elman_sequence_outputs(model: ElmanModel, inputs_norm: np.ndarray,
                           context: np.ndarray | None = None):
    """Run the net over a normalized input sequence, threading the context."""
    if context is None:
        context = np.zeros(model.hidden)
    outputs = np.empty((len(inputs_norm), 3))
    for i, p in enumerate(inputs_norm):
        outputs[i], context = elman_forward(model, p, context)
    return outputs, context


# ---------------------------------------------------------------------------
# RBF
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RbfModel:
    centers: np.ndarray   # (J, 4) in normalized input space
    radii: np.ndarray     # (J,) strictly positive
    lw: np.ndarray        # (3, J)
    stats: NormStats


def rbf_phi(p: np.ndarray, center: np.ndarray, radius: float) -> float:
    """Gaussian activation exp(-(||p - c|| / s)^2), in (0, 1]."""
    d = np.asarray(p) - np.asarray(center)
    return float(np.exp(-(d @ d) / radius ** 2))


def _phi_matrix(points: np.ndarray, centers: np.ndarray, radii: np.ndarray):
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / radii ** 2)


def rbf_forward(model: RbfModel, p: np.ndarray) -> np.ndarray:
    """Normalized input -> normalized output triple."""
    d2 = ((model.centers - p) ** 2).sum(axis=1)
    return model.lw @ np.exp(-d2 / model.radii ** 2)


def rbf_predict(model: RbfModel, x_phys: np.ndarray) -> np.ndarray:
    """Physical-unit convenience wrapper around :func:`rbf_forward`."""
    x = np.atleast_2d(x_phys)
    p = normalize(x, model.stats.in_min, model.stats.in_max)
    out = _phi_matrix(p, model.centers, model.radii) @ model.lw.T
    out = denormalize(out, model.stats.out_min, model.stats.out_max)
    return out[0] if np.ndim(x_phys) == 1 else out


def _kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = 100):
    """Lloyd iteration with greedy farthest-point seeding.

    Empty clusters are re-seeded from the point farthest from its assigned
    center.  Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        centers[j] = points[int(np.argmax(d2))]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    for _ in range(max_iter):
        dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = points[assign == j]
            if len(members) == 0:
                worst = int(np.argmax(dist[np.arange(n), assign]))
                new_centers[j] = points[worst]
            else:
                new_centers[j] = members.mean(axis=0)
        if np.allclose(new_centers, centers, atol=1e-12):
            centers = new_centers
            break
        centers = new_centers
    dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return centers, dist.argmin(axis=1)


def rbf_fit_centers(dataset: Dataset, k: int = 25, neighbors: int = 2,
                    seed: int = 0, overlap: float = 4.0):
    """Place centers by k-means on normalized training inputs; radius of each
    center is the mean distance to its ``neighbors`` nearest co-centers,
    widened by the ``overlap`` factor so neighboring kernels blend."""
    points = normalize(dataset.train_inputs, dataset.stats.in_min,
                       dataset.stats.in_max)
    k = min(k, len(points))
    centers, _ = _kmeans(points, k, seed)
    if k == 1:
        radii = np.array([1.0])
    else:
        gaps = np.sqrt(((centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2))
        np.fill_diagonal(gaps, np.inf)
        m = min(neighbors, k - 1)
        radii = overlap * np.sort(gaps, axis=1)[:, :m].mean(axis=1)
    radii = np.maximum(radii, 1e-6)
    return centers, radii


def rbf_train_weights(model: RbfModel, dataset: Dataset, ridge: float = 1e-8,
                      lms_passes: int = 1, lms_rate: float = 0.05) -> np.ndarray:
    """Solve the output weights.

    Batch ridge-regularized normal equations give the least-squares optimum;
    optional normalized-LMS sweeps over the training sequence then refine
    sample by sample (a no-op at the exact optimum).
    """
    p = normalize(dataset.train_inputs, dataset.stats.in_min, dataset.stats.in_max)
    y = normalize(dataset.train_targets, dataset.stats.out_min, dataset.stats.out_max)
    phi = _phi_matrix(p, model.centers, model.radii)          # (N, J)
    gram = phi.T @ phi + ridge * np.eye(phi.shape[1])
    lw = np.linalg.solve(gram, phi.T @ y).T                   # (3, J)
    for _ in range(lms_passes):
        for row, target in zip(phi, y):
            err = lw @ row - target
            lw -= lms_rate * np.outer(err, row) / (row @ row + 1e-12)
    return lw


def train_rbf(dataset: Dataset, k: int = 25, neighbors: int = 2, seed: int = 0,
              overlap: float = 4.0, ridge: float = 1e-8, lms_passes: int = 1,
              lms_rate: float = 0.005) -> RbfModel:
    """Full RBF pipeline: centers, radii, then output weights."""
    centers, radii = rbf_fit_centers(dataset, k=k, neighbors=neighbors,
                                     seed=seed, overlap=overlap)
    model = RbfModel(centers=centers, radii=radii,
                     lw=np.zeros((3, len(centers))), stats=dataset.stats)
    lw = rbf_train_weights(model, dataset, ridge=ridge, lms_passes=lms_passes,
                           lms_rate=lms_rate)
    return replace(model, lw=lw)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def mape(predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Mean absolute percentage error per output column, physical units."""
    predictions = np.atleast_2d(predictions)
    targets = np.atleast_2d(targets)
    return np.mean(np.abs(predictions - targets) / np.abs(targets), axis=0) * 100.0


@dataclass(frozen=True)
class ModelComparison:
    mape_table: dict            # model name -> (3,) validation MAPE %
    pe_series: dict             # model name -> (n_val, 3) proportional error %
    losses: dict                # model name -> training loss curve


def compare_models(dataset: Dataset, seed: int = 0,
                   mlp_hidden: int = 26, elman_hidden: int = 12,
                   rbf_centers: int = 25, mlp_epochs: int = 5000,
                   elman_epochs: int = 1000) -> ModelComparison:
    """Train MLP, Elman, and RBF on the same data and score validation MAPE.

    Validation targets are the clean plant outputs; proportional error is the
    signed per-sample percentage deviation.
    """
    stats = dataset.stats
    val_in = normalize(dataset.val_inputs, stats.in_min, stats.in_max)
    val_targets = dataset.targets_clean[dataset.n_train:]

    mlp, mlp_losses = train_mlp(init_mlp(stats, hidden=mlp_hidden, seed=seed),
                                dataset, max_epochs=mlp_epochs)
    elman, elman_losses = train_elman(
        init_elman(stats, hidden=elman_hidden, seed=seed), dataset,
        max_epochs=elman_epochs)
    rbf = train_rbf(dataset, k=rbf_centers, seed=seed + 1)

    preds = {}
    out, _ = _mlp_forward_batch(mlp, val_in)
    preds["mlp"] = denormalize(out, stats.out_min, stats.out_max)

    train_in = normalize(dataset.train_inputs, stats.in_min, stats.in_max)
    _, context = elman_sequence_outputs(elman, train_in)
    out, _ = elman_sequence_outputs(elman, val_in, context)
    preds["elman"] = denormalize(out, stats.out_min, stats.out_max)

    out = _phi_matrix(val_in, rbf.centers, rbf.radii) @ rbf.lw.T
    preds["rbf"] = denormalize(out, stats.out_min, stats.out_max)

    table = {name: mape(pred, val_targets) for name, pred in preds.items()}
    pe = {name: (pred - val_targets) / np.abs(val_targets) * 100.0
          for name, pred in preds.items()}
    return ModelComparison(mape_table=table, pe_series=pe,
                           losses={"mlp": mlp_losses, "elman": elman_losses})


# ---------------------------------------------------------------------------
# persistence: named matrix blocks, full-precision decimal
# ---------------------------------------------------------------------------

def save_blocks(path, blocks: dict) -> None:
    """Write named matrices as a human-readable block file.

    Each block is ``# NAME rows cols`` followed by one row per line with
    repr-formatted floats, which round-trip float64 exactly.
    """
    with open(path, "w") as fh:
        for name, mat in blocks.items():
            mat = np.atleast_2d(np.asarray(mat, dtype=float))
            fh.write(f"# {name} {mat.shape[0]} {mat.shape[1]}\n")
            for row in mat:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_blocks(path) -> dict:
    blocks = {}
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    i = 0
    while i < len(lines):
        if not lines[i].startswith("# "):
            i += 1
            continue
        name, rows, cols = lines[i][2:].rsplit(" ", 2)
        rows, cols = int(rows), int(cols)
        mat = np.array([[float(v) for v in lines[i + 1 + r].split()]
                        for r in range(rows)])
        blocks[name] = mat.reshape(rows, cols)
        i += 1 + rows
    return blocks


def save_rbf(model: RbfModel, path) -> None:
    stats = np.vstack([
        np.concatenate([model.stats.in_min, model.stats.out_min]),
        np.concatenate([model.stats.in_max, model.stats.out_max]),
    ])
    save_blocks(path, {"CENTERS": model.centers,
                       "RADII": model.radii[None, :],
                       "LW": model.lw,
                       "STATS": stats})


def load_rbf(path) -> RbfModel:
    blocks = load_blocks(path)
    stats_mat = blocks["STATS"]
    n_in = blocks["CENTERS"].shape[1]
    stats = NormStats(in_min=stats_mat[0, :n_in], in_max=stats_mat[1, :n_in],
                      out_min=stats_mat[0, n_in:], out_max=stats_mat[1, n_in:])
    return RbfModel(centers=blocks["CENTERS"], radii=blocks["RADII"][0],
                    lw=blocks["LW"], stats=stats)
