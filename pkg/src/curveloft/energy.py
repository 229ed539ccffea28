"""Loss terms for the variational surfacing objective.

Four ingredients: an Eikonal penalty driving the field toward unit gradient,
an on-curve Dirichlet penalty pinning the zero set to the constraint points,
an off-curve penalty discouraging spurious zero crossings, and a thin-plate
smoothness energy evaluated on zero-level-set samples.  The thin-plate
density is kappa_1^2 + kappa_2^2 = 4H^2 - 2K, with mean and Gaussian
curvature taken from the general implicit-field formulas (the trained field
is only approximately a distance field, so SDF-specific shortcuts are
deliberately avoided).  Near user-flagged feature curves the density is
down-weighted by squared distance so that no smoothness constraint acts
across a feature curve.

Besides the scalar losses, this module provides their adjoints with respect
to the jet components, which the trainer feeds into reverse accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DegenerateBatchError, DegenerateGradientError

# samples with ||grad f|| below this are dropped from curvature evaluation:
# both curvature formulas divide by powers of the gradient norm
GRAD_FLOOR = 1e-6

# cap on the squared feature distance; the normalized box has squared
# diagonal 3, so the weight never needs to exceed it
FEATURE_WEIGHT_CAP = 3.0


@dataclass(frozen=True)
class LossWeights:
    lambda_eikonal: float = 0.1
    lambda_on_curve: float = 100.0
    lambda_off_curve: float = 10.0
    lambda_smooth: float = 5e-4
    alpha: float = 100.0
    cycle_length: int = 1000

    def validate(self) -> None:
        for name in ("lambda_eikonal", "lambda_on_curve", "lambda_off_curve",
                     "lambda_smooth"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be non-negative")
        if self.alpha <= 0:
            raise ContractError("alpha must be positive")
        if self.cycle_length < 1:
            raise ContractError("cycle_length must be >= 1")


@dataclass(frozen=True)
class LossBreakdown:
    """Raw component values plus the weighted total of one iteration."""

    eikonal: float
    dirichlet_on: float
    dirichlet_off: float
    smooth: float
    tau: float
    total: float

    @staticmethod
    def combine(weights: LossWeights, eikonal: float, dirichlet_on: float,
                dirichlet_off: float, smooth: float, tau: float) -> "LossBreakdown":
        # single canonical combination expression; the logged total must be
        # reproducible bit for bit from the logged components
        total = (weights.lambda_eikonal * eikonal
                 + weights.lambda_on_curve * dirichlet_on
                 + weights.lambda_off_curve * dirichlet_off
                 + tau * weights.lambda_smooth * smooth)
        return LossBreakdown(float(eikonal), float(dirichlet_on),
                             float(dirichlet_off), float(smooth), float(tau),
                             float(total))


# ---------------------------------------------------------------------------
# array kernels (value + adjoint); the spec-level operations wrap these
# ---------------------------------------------------------------------------

def eikonal_kernel(grads: np.ndarray, with_adjoint: bool = False):
    """mean |1 - ||g||| over gradient rows; adjoint w.r.t. the gradients."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] == 0:
        raise ContractError("gradient batch must be non-empty (B, 3)")
    norms = np.linalg.norm(grads, axis=1)
    residual = 1.0 - norms
    value = float(np.mean(np.abs(residual)))
    if not with_adjoint:
        return value, None
    safe = np.where(norms > 0.0, norms, 1.0)
    d = (-np.sign(residual) / safe)[:, None] * grads / grads.shape[0]
    d[norms == 0.0] = 0.0
    return value, d


def on_curve_kernel(values: np.ndarray, with_adjoint: bool = False):
    """mean |f| over curve samples; adjoint w.r.t. the values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("value batch must be non-empty")
    value = float(np.mean(np.abs(values)))
    if not with_adjoint:
        return value, None
    return value, np.sign(values) / values.size


def off_curve_kernel(values: np.ndarray, alpha: float, with_adjoint: bool = False):
    """mean exp(-alpha |f|) over box samples; adjoint w.r.t. the values."""
    if alpha <= 0:
        raise ContractError(f"alpha must be positive, got {alpha}")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("value batch must be non-empty")
    e = np.exp(-alpha * np.abs(values))
    value = float(np.mean(e))
    if not with_adjoint:
        return value, None
    return value, (-alpha * np.sign(values) * e) / values.size


def curvature_kernel(grads: np.ndarray, hess: np.ndarray):
    """Mean/Gaussian curvature and thin-plate density for a jet batch.

    Returns (H, K, density, valid) where valid marks rows whose gradient
    norm clears GRAD_FLOOR; outputs on invalid rows are zero-filled.
    The Gaussian curvature is the negated bordered determinant
        | Hess  grad^T |
        | grad    0    |
    over ||grad||^4, written out as an explicit cofactor expansion of that
    fixed 4x4 shape.
    """
    grads = np.asarray(grads, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    a, b, c = grads[:, 0], grads[:, 1], grads[:, 2]
    m11, m22, m33 = hess[:, 0, 0], hess[:, 1, 1], hess[:, 2, 2]
    m12, m13, m23 = hess[:, 0, 1], hess[:, 0, 2], hess[:, 1, 2]

    n2 = a * a + b * b + c * c
    n = np.sqrt(n2)
    valid = n >= GRAD_FLOOR
    n_safe = np.where(valid, n, 1.0)
    n2_safe = np.where(valid, n2, 1.0)

    trace = m11 + m22 + m33
    gMg = (a * (m11 * a + m12 * b + m13 * c)
           + b * (m12 * a + m22 * b + m23 * c)
           + c * (m13 * a + m23 * b + m33 * c))
    mean_c = (gMg - n2 * trace) / (2.0 * n_safe ** 3)

    # cofactor expansion of the bordered determinant: det = -g^T adj(Hess) g
    quad = (a * a * (m22 * m33 - m23 * m23)
            + b * b * (m11 * m33 - m13 * m13)
            + c * c * (m11 * m22 - m12 * m12)
            + 2.0 * a * b * (m13 * m23 - m12 * m33)
            + 2.0 * a * c * (m12 * m23 - m13 * m22)
            + 2.0 * b * c * (m12 * m13 - m11 * m23))
    gauss_c = quad / n2_safe ** 2

    density = 4.0 * mean_c * mean_c - 2.0 * gauss_c
    mean_c = np.where(valid, mean_c, 0.0)
    gauss_c = np.where(valid, gauss_c, 0.0)
    density = np.where(valid, density, 0.0)
    return mean_c, gauss_c, density, valid


def curvature_adjoints(grads: np.ndarray, hess: np.ndarray, d_density: np.ndarray):
    """Adjoints of sum_i d_density[i] * density_i w.r.t. gradients and Hessians.

    Rows below the gradient floor get zero adjoints.  Hessian adjoints use
    the full-matrix convention dL = sum_jk adj[j,k] dHess[j,k].
    """
    grads = np.asarray(grads, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    mean_c, gauss_c, _, valid = curvature_kernel(grads, hess)

    a, b, c = grads[:, 0], grads[:, 1], grads[:, 2]
    m11, m22, m33 = hess[:, 0, 0], hess[:, 1, 1], hess[:, 2, 2]
    m12, m13, m23 = hess[:, 0, 1], hess[:, 0, 2], hess[:, 1, 2]
    n2 = a * a + b * b + c * c
    n = np.where(valid, np.sqrt(n2), 1.0)
    n2 = np.where(valid, n2, 1.0)
    n3 = n * n2
    n4 = n2 * n2
    n5 = n2 * n3

    trace = m11 + m22 + m33
    gMg = 2.0 * mean_c * n3 + n2 * trace  # recover g.M.g without recomputation
    Mg = np.stack([m11 * a + m12 * b + m13 * c,
                   m12 * a + m22 * b + m23 * c,
                   m13 * a + m23 * b + m33 * c], axis=1)

    # dH/dg = (Mg - tr g)/n^3 - 3 (g.M.g - n^2 tr) g / (2 n^5)
    A = gMg - n2 * trace
    dH_dg = (Mg - trace[:, None] * grads) / n3[:, None] \
        - (1.5 * A / n5)[:, None] * grads

    # dH/dM = (g g^T - n^2 I)/(2 n^3)
    gouter = grads[:, :, None] * grads[:, None, :]
    dH_dM = gouter / (2.0 * n3)[:, None, None]
    idx = np.arange(3)
    dH_dM[:, idx, idx] -= (n2 / (2.0 * n3))[:, None]

    # adj(Hess) g, for dK/dg = 2 adj(M) g / n^4 - 4 K g / n^2
    adj11 = m22 * m33 - m23 * m23
    adj22 = m11 * m33 - m13 * m13
    adj33 = m11 * m22 - m12 * m12
    adj12 = m13 * m23 - m12 * m33
    adj13 = m12 * m23 - m13 * m22
    adj23 = m12 * m13 - m11 * m23
    adjg = np.stack([adj11 * a + adj12 * b + adj13 * c,
                     adj12 * a + adj22 * b + adj23 * c,
                     adj13 * a + adj23 * b + adj33 * c], axis=1)
    dK_dg = 2.0 * adjg / n4[:, None] - (4.0 * gauss_c / n2)[:, None] * grads

    # d(g^T adj g)/dM per unique entry, halved onto symmetric off-diagonals
    dq11 = b * b * m33 + c * c * m22 - 2.0 * b * c * m23
    dq22 = a * a * m33 + c * c * m11 - 2.0 * a * c * m13
    dq33 = a * a * m22 + b * b * m11 - 2.0 * a * b * m12
    dq12 = -c * c * m12 - a * b * m33 + a * c * m23 + b * c * m13
    dq13 = -b * b * m13 - a * c * m22 + a * b * m23 + b * c * m12
    dq23 = -a * a * m23 - b * c * m11 + a * b * m13 + a * c * m12
    dK_dM = np.empty_like(hess)
    dK_dM[:, 0, 0] = dq11
    dK_dM[:, 1, 1] = dq22
    dK_dM[:, 2, 2] = dq33
    dK_dM[:, 0, 1] = dK_dM[:, 1, 0] = dq12
    dK_dM[:, 0, 2] = dK_dM[:, 2, 0] = dq13
    dK_dM[:, 1, 2] = dK_dM[:, 2, 1] = dq23
    dK_dM /= n4[:, None, None]

    # density = 4 H^2 - 2 K
    scale = np.where(valid, np.asarray(d_density, dtype=np.float64), 0.0)
    coefH = (8.0 * mean_c * scale)[:, None]
    d_grads = coefH * dH_dg - 2.0 * scale[:, None] * dK_dg
    d_hess = coefH[:, :, None] * dH_dM - 2.0 * scale[:, None, None] * dK_dM
    d_grads[~valid] = 0.0
    d_hess[~valid] = 0.0
    return d_grads, d_hess


def smooth_kernel(grads: np.ndarray, hess: np.ndarray, weights: np.ndarray,
                  with_adjoint: bool = False):
    """Feature-weighted mean thin-plate density over a zero-set sample batch.

    Samples under the gradient floor are excluded from numerator and count.
    Returns (value, d_grads, d_hess, valid).
    """
    weights = np.asarray(weights, dtype=np.float64)
    _, _, density, valid = curvature_kernel(grads, hess)
    kept = int(valid.sum())
    if kept == 0:
        raise DegenerateBatchError("all smoothness samples under the gradient floor")
    # density is a sum of squared principal curvatures; tiny negatives are
    # cancellation dust and are clamped (with the adjoint zeroed there)
    neg = float(density[valid].min())
    if neg < -1e-9 * max(1.0, float(np.abs(density).max())):
        raise AssertionError(f"thin-plate density significantly negative: {neg}")
    positive = density > 0.0
    density = np.maximum(density, 0.0)
    value = float(np.sum(density * weights * valid) / kept)
    if not with_adjoint:
        return value, None, None, valid
    d_density = weights * (valid & positive) / kept
    d_grads, d_hess = curvature_adjoints(grads, hess, d_density)
    return value, d_grads, d_hess, valid


# ---------------------------------------------------------------------------
# spec-level operations on jets
# ---------------------------------------------------------------------------

def _stack_grads(jets) -> np.ndarray:
    if len(jets) == 0:
        raise ContractError("jet list must be non-empty")
    return np.stack([np.asarray(j.grad, dtype=np.float64) for j in jets])


def eikonal_loss(jets: Sequence) -> float:
    """Mean |1 - ||grad f||| over the jets."""
    value, _ = eikonal_kernel(_stack_grads(jets))
    return value


def dirichlet_on_loss(values: Sequence[float]) -> float:
    """Mean |f| over constraint-point values."""
    value, _ = on_curve_kernel(np.asarray(list(values), dtype=np.float64))
    return value


def dirichlet_off_loss(values: Sequence[float], alpha: float) -> float:
    """Mean exp(-alpha |f|) over box-sample values."""
    value, _ = off_curve_kernel(np.asarray(list(values), dtype=np.float64), alpha)
    return value


def curvatures(jet) -> tuple[float, float, float]:
    """(mean curvature, Gaussian curvature, thin-plate density) of one jet."""
    grads = np.asarray(jet.grad, dtype=np.float64)[None, :]
    hess = np.asarray(jet.hess, dtype=np.float64)[None, :, :]
    mean_c, gauss_c, density, valid = curvature_kernel(grads, hess)
    if not valid[0]:
        raise DegenerateGradientError(
            f"gradient norm {np.linalg.norm(grads):.3e} below floor {GRAD_FLOOR}")
    return float(mean_c[0]), float(gauss_c[0]), float(density[0])


def feature_weight(point, feature_index) -> float:
    """Squared distance from the point to the nearest feature-curve sample.

    Returns 1 when there are no feature curves (pure-smoothness mode) and is
    capped at the squared box diagonal.
    """
    if feature_index is None:
        return 1.0
    d2 = feature_index.query_sq(np.asarray(point, dtype=np.float64)[None, :])[0]
    return float(min(d2, FEATURE_WEIGHT_CAP))


def feature_weights(points: np.ndarray, feature_index) -> np.ndarray:
    """Vectorized feature_weight over a point batch."""
    points = np.atleast_2d(points)
    if feature_index is None:
        return np.ones(points.shape[0])
    d2 = feature_index.query_sq(points)
    return np.minimum(d2, FEATURE_WEIGHT_CAP)


def smooth_loss(jets: Sequence, points, feature_index) -> float:
    """Mean feature-weighted thin-plate density over zero-set samples."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(jets) != points.shape[0]:
        raise ContractError("jets and points must align")
    grads = _stack_grads(jets)
    hess = np.stack([np.asarray(j.hess, dtype=np.float64) for j in jets])
    w = feature_weights(points, feature_index)
    value, _, _, _ = smooth_kernel(grads, hess, w)
    return value


def cosine_factor(iteration: int, cycle_length: int) -> float:
    """Periodic modulation of the smoothness weight: one full cosine per cycle.

    Starts at 1, reaches 0 halfway through the cycle, returns to 1 at the
    cycle boundary (hard restart).
    """
    if iteration < 0:
        raise ContractError("iteration must be >= 0")
    if cycle_length < 1:
        raise ContractError("cycle_length must be >= 1")
    phase = (iteration % cycle_length) / cycle_length
    return float(0.5 * (1.0 + np.cos(2.0 * np.pi * phase)))


def total_loss(eikonal: float, dirichlet_on: float, dirichlet_off: float,
               smooth: float, weights: LossWeights, iteration: int) -> LossBreakdown:
    """Combine the four components with their weights and the cosine factor."""
    weights.validate()
    tau = cosine_factor(iteration, weights.cycle_length)
    return LossBreakdown.combine(weights, eikonal, dirichlet_on, dirichlet_off,
                                 smooth, tau)
