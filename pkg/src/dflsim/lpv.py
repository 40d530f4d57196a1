"""Linear parameter-varying prediction model from the trained RBF network.

The Gaussian network is linear in its output weights, so its input Jacobian
has a closed form sharing the centers, radii, and weights of the trained
model: a second "derivative" network that needs no training of its own.
Evaluated at the current operating point and rescaled through the
normalization maps, its entries populate the discrete A and B matrices; the
output matrix C comes from differentiating the fan's power-matching thrust
map.  The current engine torque never influences the next state (it is an
output of the power balance, not a memory), so the first column of A is
structurally zero, as are D and the thrust row's lambda entry in C.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import NormStats
from .engine import ControlInput
from .fan import FanGeometry, thrust_jacobian
from .networks import RbfModel


@dataclass(frozen=True)
class LpvModel:
    """Discrete linearized dynamics at one operating point, physical units."""

    a: np.ndarray          # (3, 3), column 0 exactly zero
    b: np.ndarray          # (3, 2)
    c: np.ndarray          # (2, 3), [[dT/dQ, dT/dn, 0], [0, 0, 1]]
    d: np.ndarray          # (2, 2), exactly zero
    x0: np.ndarray         # state triple [Q_eng, n, lambda] at linearization
    u0: np.ndarray         # input pair [tps, m_fi] at linearization
    t: float = 0.0         # simulation time of linearization, s


def assoc_jacobian(rbf: RbfModel, p: np.ndarray) -> np.ndarray:
    """Exact Jacobian of the RBF forward map at a normalized input point.

    Row j of the derivative stack is phi_j(p) * (-2/s_j^2) * (p - c_j); the
    3x4 Jacobian is the output weights applied to that stack.
    """
    p = np.asarray(p, dtype=float)
    diff = p - rbf.centers                                   # (J, 4)
    phi = np.exp(-np.sum(diff * diff, axis=1) / rbf.radii ** 2)
    stack = (phi * (-2.0 / rbf.radii ** 2))[:, None] * diff  # (J, 4)
    return rbf.lw @ stack                                    # (3, 4)


def rescale_jacobian(j_norm: np.ndarray, stats: NormStats) -> np.ndarray:
    """Chain-rule a normalized-space Jacobian into physical units.

    Outputs stretch by half their column range, inputs shrink by theirs
    (both normalization maps are affine, so this is exact).
    """
    out_scale = 0.5 * (stats.out_max - stats.out_min)        # dy_phys/dy_norm
    in_scale = 2.0 / (stats.in_max - stats.in_min)           # dp_norm/dx_phys
    return j_norm * out_scale[:, None] * in_scale[None, :]


def build_lpv(rbf: RbfModel, geom: FanGeometry, x0: np.ndarray,
              u0: ControlInput | np.ndarray, t: float = 0.0) -> LpvModel:
    """Assemble the discrete LPV matrices at a measured operating point.

    The network input order is [tps, m_fi, n, lambda]; its Jacobian columns
    split into the B matrix (input pair) and A columns 2..3 (speed and
    lambda), with A's torque column pinned to zero.  C's thrust row comes
    from the fan map's finite-difference sensitivities at (Q_eng, n).
    """
    x0 = np.asarray(x0, dtype=float)
    if isinstance(u0, ControlInput):
        u0 = np.array([u0.tps, u0.m_fi])
    else:
        u0 = np.asarray(u0, dtype=float)

    p_phys = np.array([u0[0], u0[1], x0[1], x0[2]])
    p_norm = 2.0 * (p_phys - rbf.stats.in_min) / (rbf.stats.in_max
                                                  - rbf.stats.in_min) - 1.0
    j_phys = rescale_jacobian(assoc_jacobian(rbf, p_norm), rbf.stats)

    a = np.zeros((3, 3))
    a[:, 1] = j_phys[:, 2]      # d(next state)/dn
    a[:, 2] = j_phys[:, 3]      # d(next state)/dlambda
    b = j_phys[:, :2].copy()    # d(next state)/d[tps, m_fi]

    dt_dq, dt_dn = thrust_jacobian(x0[0], x0[1], geom)
    c = np.zeros((2, 3))
    c[0, 0] = dt_dq
    c[0, 1] = dt_dn
    c[1, 2] = 1.0
    return LpvModel(a=a, b=b, c=c, d=np.zeros((2, 2)), x0=x0, u0=u0, t=t)


def lpv_csv_row(lpv: LpvModel) -> str:
    """Flatten one model to a CSV row (time, x0, u0, A, B, C, D row-major)."""
    cells = [lpv.t, *lpv.x0, *lpv.u0, *lpv.a.ravel(), *lpv.b.ravel(),
             *lpv.c.ravel(), *lpv.d.ravel()]
    return ",".join(repr(float(v)) for v in cells)


LPV_CSV_HEADER = ",".join(
    ["t", "q0", "n0", "lam0", "tps0", "mfi0"]
    + [f"a{i}{j}" for i in range(3) for j in range(3)]
    + [f"b{i}{j}" for i in range(3) for j in range(2)]
    + [f"c{i}{j}" for i in range(2) for j in range(3)]
    + [f"d{i}{j}" for i in range(2) for j in range(2)])
