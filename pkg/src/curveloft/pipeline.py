"""Training loop, metric reports and experiment sweeps.

Each iteration draws the three sample populations, evaluates the weighted
objective and its jet adjoints, reverse-accumulates parameter gradients and
takes one Adam step.  Zero-set samples are re-extracted on a fixed period
and projected back onto the moving level set on every other iteration.
Runs are deterministic end to end for a given seed.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Optional

import numpy as np

from . import field as nf
from . import geometry, sampling
from .curves import CurveSet, perturb_curves
from .energy import (LossBreakdown, LossWeights, cosine_factor, curvature_kernel,
                     eikonal_kernel, feature_weights, off_curve_kernel,
                     on_curve_kernel, smooth_kernel)
from .errors import (ConfigurationError, ContractError, CurveloftError,
                     EmptyLevelSetError, EvaluationError, InputError,
                     NumericalError, OptimizerError, TopologyError)

LOG_HEADER = ["iter", "eikonal", "dirichlet_on", "dirichlet_off", "smooth",
              "tau", "total", "ms"]


@dataclass
class NetworkConfig:
    width: int = 64
    depth: int = 4
    beta: float = 100.0
    skip: bool = True


@dataclass
class TrainConfig:
    """Desk-scale defaults; paper_scale() gives the full-size configuration.

    Training runs in float32 by default: the interpolation targets sit far
    above single precision and the desk-scale CPU budget is bandwidth-bound.
    """

    weights: LossWeights = dc_field(default_factory=LossWeights)
    network: NetworkConfig = dc_field(default_factory=NetworkConfig)
    lr: float = 1e-3
    iterations: int = 2000
    mc_train_resolution: int = 64
    mc_export_resolution: int = 128
    n_p: int = 2000
    n_q: int = 2000
    n_qzero: int = 2000
    refresh_period: int = 100
    init_radius: float = 0.3
    seed: int = 0
    dtype: str = "float32"

    def validate(self) -> None:
        self.weights.validate()
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.refresh_period < 1:
            raise ConfigurationError("refresh_period must be >= 1")
        if self.mc_train_resolution < 8 or self.mc_export_resolution < 8:
            raise ConfigurationError("marching-cubes resolutions must be >= 8")
        if min(self.n_p, self.n_q, self.n_qzero) < 1:
            raise ConfigurationError("sample counts must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError("dtype must be 'float32' or 'float64'")

    @staticmethod
    def paper_scale() -> "TrainConfig":
        return TrainConfig(
            network=NetworkConfig(width=256, depth=8),
            lr=5e-5, iterations=10_000,
            mc_train_resolution=128, mc_export_resolution=512,
            n_p=10_000, n_q=10_000, n_qzero=10_000,
        )

    def to_dict(self) -> dict:
        return {
            "weights": {
                "lambda_eikonal": self.weights.lambda_eikonal,
                "lambda_on_curve": self.weights.lambda_on_curve,
                "lambda_off_curve": self.weights.lambda_off_curve,
                "lambda_smooth": self.weights.lambda_smooth,
                "alpha": self.weights.alpha,
                "cycle_length": self.weights.cycle_length,
            },
            "network": {
                "width": self.network.width,
                "depth": self.network.depth,
                "beta": self.network.beta,
                "skip": self.network.skip,
            },
            "lr": self.lr,
            "iterations": self.iterations,
            "mc_train_resolution": self.mc_train_resolution,
            "mc_export_resolution": self.mc_export_resolution,
            "n_p": self.n_p,
            "n_q": self.n_q,
            "n_qzero": self.n_qzero,
            "refresh_period": self.refresh_period,
            "init_radius": self.init_radius,
            "seed": self.seed,
            "dtype": self.dtype,
        }

    @staticmethod
    def from_dict(doc: dict) -> "TrainConfig":
        cfg = TrainConfig()
        weights = dict(doc.get("weights", {}))
        network = dict(doc.get("network", {}))
        try:
            cfg = replace(
                cfg,
                weights=replace(cfg.weights, **weights),
                network=replace(cfg.network, **network),
                **{k: v for k, v in doc.items() if k not in ("weights", "network")},
            )
        except TypeError as exc:
            raise ConfigurationError(f"unknown config field: {exc}") from exc
        cfg.validate()
        return cfg

    @staticmethod
    def from_json(path) -> "TrainConfig":
        with open(path) as fh:
            return TrainConfig.from_dict(json.load(fh))


@dataclass
class TrainLog:
    rows: list = dc_field(default_factory=list)          # LossBreakdown per iteration
    ms: list = dc_field(default_factory=list)            # wall time per iteration
    refresh_events: list = dc_field(default_factory=list)  # (iteration, genus or None)
    projection_stats: list = dc_field(default_factory=list)  # (iter, n, improved frac)
    aborted_at: Optional[int] = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_HEADER)
            for i, (row, ms) in enumerate(zip(self.rows, self.ms)):
                writer.writerow([i, repr(row.eikonal), repr(row.dirichlet_on),
                                 repr(row.dirichlet_off), repr(row.smooth),
                                 repr(row.tau), repr(row.total), f"{ms:.3f}"])


def _check_normalized(curves: CurveSet) -> None:
    pts = curves.points
    if np.abs(pts).max() > 0.5 + 1e-9:
        raise InputError(
            "curve points must lie in [-0.5, 0.5]^3; run normalize_curves first")


def train(config: TrainConfig, curves: CurveSet,
          progress: Optional[Callable[[int, LossBreakdown], None]] = None
          ) -> tuple[nf.MlpParams, TrainLog]:
    """Fit the signed-distance field to the curve constraints.

    Returns the trained parameters and the per-iteration log.  On a
    non-finite loss or gradient the loop aborts, the log records the
    iteration, and the parameters of the last finite-loss iteration are
    returned.
    """
    config.validate()
    _check_normalized(curves)

    seed_root = np.random.SeedSequence(config.seed)
    s_init, s_batch, s_refresh = seed_root.spawn(3)
    rng_batch = np.random.default_rng(s_batch)
    rng_refresh = np.random.default_rng(s_refresh)

    params = nf.init_geometric(
        config.network.width, config.network.depth, config.init_radius,
        int(s_init.generate_state(1)[0]), beta=config.network.beta,
        skip=config.network.skip, dtype=np.dtype(config.dtype))
    adam = nf.AdamState.for_params(params)

    feat_pts = curves.feature_points
    feature_index = geometry.NearestIndex(feat_pts) if len(feat_pts) else None

    weights = config.weights
    log = TrainLog()
    buffers = None
    last_good = params
    values_before = None

    for it in range(config.iterations):
        t0 = time.perf_counter()
        p_pts, p_flags = sampling.sample_curve_batch(curves, config.n_p, rng_batch)
        q_box = sampling.sample_box_uniform(config.n_q, rng_batch)

        if it % config.refresh_period == 0:
            try:
                q_zero, mesh = sampling.refresh_zero_samples(
                    params, config.mc_train_resolution, config.n_qzero,
                    rng_refresh, return_mesh=True)
                last_extraction = it
                try:
                    genus = geometry.mesh_genus(mesh)
                except TopologyError:
                    genus = None
                log.refresh_events.append((it, genus))
            except EmptyLevelSetError:
                if buffers is None:
                    raise NumericalError(
                        "empty level set at iteration 0; geometric init failed")
                q_zero = buffers.q_zero  # keep stale buffer
                last_extraction = buffers.iteration_of_last_extraction
                log.refresh_events.append((it, None))
            values_before = None
        else:
            q_zero, values_before = sampling.project_to_zero_set(
                params, buffers.q_zero, steps=1, return_values=True)
            keep = np.all(np.abs(q_zero) <= sampling.DOMAIN_BOUND, axis=1)
            q_zero = q_zero[keep]
            values_before = values_before[keep]
            last_extraction = buffers.iteration_of_last_extraction
            if len(q_zero) == 0:  # every surface sample left the domain
                log.aborted_at = it
                break
        buffers = sampling.SampleBuffers(p_pts, p_flags, q_box, q_zero,
                                         last_extraction)

        tau = cosine_factor(it, weights.cycle_length)
        w_z = feature_weights(buffers.q_zero, feature_index)

        f_p, _, _, tape_p = nf.jets_with_tape(params, buffers.p_batch, order=0)
        f_q, g_q, _, tape_q = nf.jets_with_tape(params, buffers.q_box, order=1)
        f_z, g_z, h_z, tape_z = nf.jets_with_tape(params, buffers.q_zero, order=2)

        if values_before is not None and len(values_before):
            improved = np.abs(f_z) < np.abs(values_before)
            log.projection_stats.append(
                (it, len(values_before), float(improved.mean())))

        e_val, e_adj = eikonal_kernel(g_q, with_adjoint=True)
        on_val, on_adj = on_curve_kernel(f_p, with_adjoint=True)
        off_val, off_adj = off_curve_kernel(f_q, weights.alpha, with_adjoint=True)
        s_val, s_dg, s_dh, _ = smooth_kernel(g_z, h_z, w_z, with_adjoint=True)
        row = LossBreakdown.combine(weights, e_val, on_val, off_val, s_val, tau)

        if not np.isfinite(row.total):
            log.aborted_at = it
            break
        last_good = params

        grads = nf.backprop_tape(params, tape_p, len(buffers.p_batch),
                                 d_value=weights.lambda_on_curve * on_adj)
        grads.add_(nf.backprop_tape(params, tape_q, len(buffers.q_box),
                                    d_value=weights.lambda_off_curve * off_adj,
                                    d_grad=weights.lambda_eikonal * e_adj))
        smooth_scale = tau * weights.lambda_smooth
        if smooth_scale != 0.0:
            grads.add_(nf.backprop_tape(params, tape_z, len(buffers.q_zero),
                                        d_grad=smooth_scale * s_dg,
                                        d_hess=smooth_scale * s_dh))
        try:
            params, adam = nf.adam_step(params, grads, adam, config.lr)
        except OptimizerError:
            log.aborted_at = it
            break

        log.rows.append(row)
        log.ms.append((time.perf_counter() - t0) * 1e3)
        if progress is not None:
            progress(it, row)

    if log.aborted_at is not None:
        return last_good, log
    return params, log


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    mean_abs_f: float
    max_abs_f: float
    eikonal_mean: float
    eikonal_max: float
    density_mean: float
    density_median: float
    density_max: float
    genus: Optional[int]
    n_vertices: int
    n_triangles: int
    deviation_median: Optional[float] = None
    deviation_max: Optional[float] = None
    hausdorff_raw: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def evaluate_metrics(params: nf.MlpParams, curves: CurveSet,
                     gt_mesh: Optional[geometry.TriangleMesh] = None,
                     resolution: int = 64, n_surface: int = 2000,
                     n_box: int = 4096, seed: int = 12345) -> EvalReport:
    """Interpolation, Eikonal, thin-plate and topology metrics for a field."""
    if resolution < 8:
        raise ContractError("resolution must be >= 8")
    grid = sampling.evaluate_grid(params, resolution)
    try:
        mesh = geometry.marching_cubes(grid, 0.0)
    except CurveloftError as exc:
        raise EvaluationError(f"empty level set at resolution {resolution}") from exc

    f_curve = nf.forward_values(params, curves.points)
    rng = np.random.default_rng(seed)
    box = sampling.sample_box_uniform(n_box, rng)
    _, g_box, _ = nf.forward_jets(params, box, order=1)
    residual = np.abs(1.0 - np.linalg.norm(g_box, axis=1))

    surf = geometry.poisson_disk_sample(mesh, n_surface, rng)
    _, g_s, h_s = nf.forward_jets(params, surf, order=2)
    _, _, density, valid = curvature_kernel(g_s, h_s)
    density = density[valid]
    if density.size == 0:
        density = np.array([np.nan])

    try:
        genus = geometry.mesh_genus(mesh)
    except TopologyError:
        genus = None

    report = EvalReport(
        mean_abs_f=float(np.mean(np.abs(f_curve))),
        max_abs_f=float(np.max(np.abs(f_curve))),
        eikonal_mean=float(residual.mean()),
        eikonal_max=float(residual.max()),
        density_mean=float(density.mean()),
        density_median=float(np.median(density)),
        density_max=float(density.max()),
        genus=genus,
        n_vertices=mesh.n_vertices,
        n_triangles=mesh.n_triangles,
    )
    if gt_mesh is not None:
        h = geometry.hausdorff_distance(mesh, gt_mesh)
        report.deviation_median = h.median
        report.deviation_max = h.symmetric
        report.hausdorff_raw = h.symmetric_raw
    return report


# ---------------------------------------------------------------------------
# experiment sweeps
# ---------------------------------------------------------------------------

SUITE_NAMES = ("weight_sweep", "qzero_sweep", "noise_sweep", "genus_curve")

WEIGHT_SWEEP_VALUES = (5e-6, 5e-5, 5e-4, 5e-2)
QZERO_SWEEP_VALUES = (200, 1000, 2000)
NOISE_SWEEP_VALUES = (0.0, 0.05, 0.1)


def run_experiment_suite(name: str, config: TrainConfig, curves: CurveSet,
                         gt_mesh: Optional[geometry.TriangleMesh] = None,
                         values=None) -> list[dict]:
    """Run one of the fixed desk-scale sweeps; one metrics row per setting.

    A row that fails to train records its error and the sweep continues.
    """
    if name not in SUITE_NAMES:
        raise ConfigurationError(
            f"unknown suite {name!r}; expected one of {SUITE_NAMES}")

    rows: list[dict] = []

    def eval_row(params, cv, **extra) -> dict:
        report = evaluate_metrics(params, cv, gt_mesh=gt_mesh,
                                  resolution=config.mc_train_resolution)
        row = {**extra, "genus": report.genus,
               "mean_abs_f": report.mean_abs_f,
               "eikonal_mean": report.eikonal_mean}
        if gt_mesh is not None:
            row["hausdorff"] = report.deviation_max
        return row

    if name == "weight_sweep":
        for lam in (values or WEIGHT_SWEEP_VALUES):
            cfg = replace(config, weights=replace(config.weights, lambda_smooth=lam))
            try:
                params, _ = train(cfg, curves)
                rows.append(eval_row(params, curves, lambda_smooth=lam))
            except CurveloftError as exc:
                rows.append({"lambda_smooth": lam, "genus": None,
                             "error": str(exc)})
    elif name == "qzero_sweep":
        for n in (values or QZERO_SWEEP_VALUES):
            cfg = replace(config, n_qzero=int(n))
            try:
                params, _ = train(cfg, curves)
                rows.append(eval_row(params, curves, n_qzero=int(n)))
            except CurveloftError as exc:
                rows.append({"n_qzero": int(n), "genus": None, "error": str(exc)})
    elif name == "noise_sweep":
        for sigma in (values or NOISE_SWEEP_VALUES):
            noisy = perturb_curves(curves, float(sigma), seed=config.seed + 1)
            # perturbation can push points outside the box; clip back
            noisy = noisy.map_points(lambda p: np.clip(p, -0.5, 0.5))
            try:
                params, _ = train(config, noisy)
                rows.append(eval_row(params, noisy, sigma=float(sigma)))
            except CurveloftError as exc:
                rows.append({"sigma": float(sigma), "genus": None,
                             "error": str(exc)})
    else:  # genus_curve
        params, log = train(config, curves)
        for iteration, genus in log.refresh_events:
            rows.append({"iteration": iteration, "genus": genus})
    return rows


def write_rows_csv(rows: list[dict], path) -> None:
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
