"""Per-iteration point populations for training.

Three sets are maintained: a batch of curve-constraint points, fresh uniform
samples of the bounding box, and samples of the current zero-level set.  The
zero-set samples are regenerated by marching cubes + Poisson-disk thinning on
a fixed schedule and are cheaply dragged along by Newton-style projection in
between, exploiting that the level set barely moves per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import field as nf
from . import geometry
from .errors import ContractError, EmptyLevelSetError, EmptyMeshError, InputError
from .energy import GRAD_FLOOR

# grid slightly larger than the data box so surfaces touching the boundary
# still close
GRID_LO, GRID_HI = -0.55, 0.55
# projected samples drifting past this are discarded until the next refresh
DOMAIN_BOUND = 0.6


@dataclass
class SampleBuffers:
    p_batch: np.ndarray
    p_flags: np.ndarray
    q_box: np.ndarray
    q_zero: np.ndarray
    iteration_of_last_extraction: int = -1


def _field_jets(params, pts: np.ndarray, order: int):
    """Jet evaluation that also accepts any object with a .jets method.

    Lets analytic fields (exact SDFs) drive the samplers directly, which the
    tests use as oracles.
    """
    if hasattr(params, "jets"):
        return params.jets(np.atleast_2d(np.asarray(pts, dtype=np.float64)), order)
    return nf.forward_jets(params, pts, order)


def sample_box_uniform(n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent uniform samples of [-0.5, 0.5]^3."""
    if n < 1:
        raise ContractError(f"need n >= 1 box samples, got {n}")
    return rng.uniform(-0.5, 0.5, size=(n, 3))


def sample_curve_batch(curves, n: int, rng: np.random.Generator):
    """Up to n constraint points with their feature flags.

    Returns all points when the curve set is small enough, otherwise a
    uniform random subset without replacement.
    """
    points = curves.points
    flags = curves.flags
    if points.shape[0] == 0:
        raise InputError("curve set has no points")
    if points.shape[0] <= n:
        return points.copy(), flags.copy()
    idx = rng.choice(points.shape[0], size=n, replace=False)
    return points[idx], flags[idx]


def evaluate_grid(params: nf.MlpParams, resolution: int,
                  chunk: int = 65536) -> geometry.ScalarGrid:
    """Field values on the extraction lattice, evaluated in chunks."""
    pts = geometry.ScalarGrid.points(resolution, GRID_LO, GRID_HI)
    values = np.empty(pts.shape[0])
    for s in range(0, pts.shape[0], chunk):
        values[s:s + chunk] = _field_jets(params, pts[s:s + chunk], 0)[0]
    return geometry.ScalarGrid.from_values(values, resolution, GRID_LO, GRID_HI)


def refresh_zero_samples(params: nf.MlpParams, resolution: int, n: int,
                         rng: np.random.Generator, return_mesh: bool = False):
    """Fresh zero-level-set samples: marching cubes then Poisson-disk thinning."""
    if resolution < 8:
        raise ContractError(f"extraction resolution must be >= 8, got {resolution}")
    if n < 1:
        raise ContractError(f"need n >= 1 zero-set samples, got {n}")
    grid = evaluate_grid(params, resolution)
    try:
        mesh = geometry.marching_cubes(grid, 0.0)
    except EmptyMeshError as exc:
        raise EmptyLevelSetError(str(exc)) from exc
    samples = geometry.poisson_disk_sample(mesh, n, rng)
    return (samples, mesh) if return_mesh else samples


def project_to_zero_set(params: nf.MlpParams, points: np.ndarray,
                        steps: int = 1, return_values: bool = False):
    """Move points onto the zero-level set: x' = x - f(x) grad/||grad||.

    Points whose gradient norm is under the curvature floor are left
    unmoved for that step.  On an exact distance field one step lands on
    the surface.  With return_values, also returns the field values at the
    input points (before the first step).
    """
    if steps < 1:
        raise ContractError("steps must be >= 1")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64)).copy()
    first_values = None
    for k in range(steps):
        values, grads, _ = _field_jets(params, pts, 1)
        if k == 0:
            first_values = values
        norms = np.linalg.norm(grads, axis=1)
        ok = norms >= GRAD_FLOOR
        step = np.zeros_like(pts)
        step[ok] = grads[ok] / norms[ok, None] * values[ok, None]
        pts -= step
    return (pts, first_values) if return_values else pts


def prune_to_domain(points: np.ndarray, bound: float = DOMAIN_BOUND) -> np.ndarray:
    """Drop points outside [-bound, bound]^3 (replaced at the next refresh)."""
    inside = np.all(np.abs(points) <= bound, axis=1)
    return points[inside]
