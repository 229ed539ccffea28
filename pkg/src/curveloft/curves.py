"""Curve-constraint ingestion: file formats, normalization, perturbation.

Inputs are polylines with a per-curve feature flag (sharp crease) and a
closed flag.  Two on-disk forms are accepted: a JSON schema

    { "curves": [ { "points": [[x,y,z], ...],
                    "feature": bool, "closed": bool } ] }

and Wavefront OBJ, where ``l`` records define polylines over ``v`` records.
OBJ files with only vertices are treated as a sparse point cloud
(one-sample polylines).  Default flags: OBJ polylines are feature curves,
bare point clouds are smooth; both can be overridden.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ContractError, DegenerateExtentError, InputError, ParseError


@dataclass
class Polyline:
    points: np.ndarray
    is_feature: bool = False
    is_closed: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 0:
            raise InputError("polyline with no points")
        if len(self.points) == 1 and self.is_feature:
            raise InputError("a standalone point cannot be a feature curve")


@dataclass
class CurveSet:
    curves: list

    def __post_init__(self):
        if not self.curves:
            raise InputError("curve set must contain at least one curve")

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([c.points for c in self.curves])

    @property
    def flags(self) -> np.ndarray:
        return np.concatenate([
            np.full(len(c.points), c.is_feature, dtype=bool) for c in self.curves])

    @property
    def feature_points(self) -> np.ndarray:
        pts, flags = self.points, self.flags
        return pts[flags]

    @property
    def n_points(self) -> int:
        return sum(len(c.points) for c in self.curves)

    def map_points(self, fn) -> "CurveSet":
        return CurveSet([
            Polyline(fn(c.points), c.is_feature, c.is_closed) for c in self.curves])


@dataclass(frozen=True)
class NormalizationTransform:
    """normalized = scale * p + translation (uniform, invertible)."""

    scale: float
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.translation

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) / self.scale

    @staticmethod
    def identity() -> "NormalizationTransform":
        return NormalizationTransform(1.0, np.zeros(3))


def load_curves(path, default_feature: Optional[bool] = None) -> CurveSet:
    """Read a curve set from JSON or OBJ.

    ``default_feature`` overrides the per-format default flag (OBJ only;
    JSON carries explicit flags).
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    if path.suffix.lower() == ".json":
        return _load_json(path)
    return _load_obj(path, default_feature)


def _load_json(path: Path) -> CurveSet:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "curves" not in doc:
        raise ParseError(f"{path}: top-level object must contain 'curves'")
    curves = []
    for i, entry in enumerate(doc["curves"]):
        try:
            pts = np.asarray(entry["points"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: curve {i}: bad or missing 'points'") from exc
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ParseError(f"{path}: curve {i}: points must be Nx3")
        curves.append(Polyline(pts, bool(entry.get("feature", False)),
                               bool(entry.get("closed", False))))
    if not curves:
        raise InputError(f"{path}: empty geometry")
    return CurveSet(curves)


def _load_obj(path: Path, default_feature: Optional[bool]) -> CurveSet:
    verts = []
    lines = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "v":
                try:
                    verts.append([float(p) for p in parts[1:4]])
                except ValueError as exc:
                    raise ParseError(f"{path}:{ln}: bad vertex") from exc
            elif parts[0] == "l":
                try:
                    idx = [int(p) - 1 for p in parts[1:]]
                except ValueError as exc:
                    raise ParseError(f"{path}:{ln}: bad polyline index") from exc
                if len(idx) < 2:
                    raise ParseError(f"{path}:{ln}: polyline needs >= 2 vertices")
                lines.append(idx)
    if not verts:
        raise InputError(f"{path}: empty geometry")
    verts = np.asarray(verts)
    if lines:
        feat = True if default_feature is None else default_feature
        curves = []
        for idx in lines:
            if max(idx) >= len(verts) or min(idx) < 0:
                raise ParseError(f"{path}: polyline index out of range")
            closed = idx[0] == idx[-1]
            pts = verts[idx[:-1]] if closed else verts[idx]
            curves.append(Polyline(pts, feat, closed))
        return CurveSet(curves)
    # bare point cloud: one-sample polylines, smooth by default
    feat = False if default_feature is None else default_feature
    if feat:
        raise InputError(f"{path}: standalone points cannot be feature curves")
    return CurveSet([Polyline(v[None, :], False, False) for v in verts])


def save_curves(curves: CurveSet, path) -> None:
    doc = {"curves": [{
        "points": c.points.tolist(),
        "feature": bool(c.is_feature),
        "closed": bool(c.is_closed),
    } for c in curves.curves]}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def normalize_curves(curves: CurveSet) -> tuple[CurveSet, NormalizationTransform]:
    """Center the tight bounding box at the origin with longest axis exactly 1."""
    pts = curves.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateExtentError("all input points coincide")
    scale = 1.0 / extent
    center = 0.5 * (lo + hi)
    transform = NormalizationTransform(scale, -scale * center)
    return curves.map_points(transform.apply), transform


def perturb_curves(curves: CurveSet, sigma: float, seed: int) -> CurveSet:
    """Add i.i.d. zero-mean Gaussian displacement of std sigma to every point."""
    if sigma < 0:
        raise ContractError("sigma must be >= 0")
    if sigma == 0:
        return curves.map_points(lambda p: p.copy())
    rng = np.random.default_rng(seed)
    return curves.map_points(lambda p: p + rng.normal(0.0, sigma, size=p.shape))
