"""Discrete geometry services: isosurface extraction, spatial queries, metrics.

Marching cubes is delegated to scikit-image's topologically consistent
(Lewiner) extractor behind this module's grid/mesh types; everything else
(exact nearest-neighbor squared distances via a KD-tree, area-weighted
surface sampling, Poisson-disk thinning by greedy sample elimination,
point-to-triangle Hausdorff distances, genus, dihedral statistics, OBJ I/O)
is implemented here.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .errors import ContractError, EmptyMeshError, TopologyError

# offset added to grid values that tie the iso level exactly, so every cube
# corner has a definite sign
ISO_TIE_BREAK = 1e-12


# ---------------------------------------------------------------------------
# grids and meshes
# ---------------------------------------------------------------------------

@dataclass
class ScalarGrid:
    """Cubic lattice of field samples, values stored x-fastest."""

    resolution: int
    origin: np.ndarray
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.spacing <= 0:
            raise ContractError("grid spacing must be positive")
        if self.values.size != self.resolution ** 3:
            raise ContractError(
                f"value count {self.values.size} != resolution^3 "
                f"{self.resolution ** 3}")

    @staticmethod
    def points(resolution: int, lo: float = -0.55, hi: float = 0.55) -> np.ndarray:
        """Lattice coordinates in x-fastest order, shape (res^3, 3)."""
        axis = np.linspace(lo, hi, resolution)
        zz, yy, xx = np.meshgrid(axis, axis, axis, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    @staticmethod
    def from_values(values: np.ndarray, resolution: int, lo: float = -0.55,
                    hi: float = 0.55) -> "ScalarGrid":
        spacing = (hi - lo) / (resolution - 1)
        return ScalarGrid(resolution, np.full(3, lo), spacing, values)


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and self.triangles.max() >= len(self.vertices):
            raise ContractError("triangle index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        tri = self.vertices[self.triangles]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def area(self) -> float:
        return float(self.triangle_areas().sum())

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _refine_edge_vertices(verts: np.ndarray, volume: np.ndarray,
                          iso: float) -> np.ndarray:
    """Redo the linear edge interpolation in float64.

    The extraction backend interpolates in float32; every regular vertex
    lies on exactly one lattice edge, so the fractional axis identifies the
    edge and the crossing parameter can be recomputed exactly.  Vertices
    not on an edge (rare interior points of tunnel configurations) pass
    through unchanged.
    """
    res = volume.shape[0]
    rounded = np.round(verts)
    frac = verts - rounded
    off_axis = np.abs(frac) > 1e-5
    on_edge = off_axis.sum(axis=1) == 1
    if not on_edge.any():
        return verts
    idx = np.where(on_edge)[0]
    axis = np.argmax(off_axis[idx], axis=1)
    base = rounded[idx].astype(np.int64)
    base[np.arange(len(idx)), axis] = np.floor(verts[idx, axis]).astype(np.int64)
    base = np.clip(base, 0, res - 2)

    upper = base.copy()
    upper[np.arange(len(idx)), axis] += 1
    v0 = volume[base[:, 0], base[:, 1], base[:, 2]]
    v1 = volume[upper[:, 0], upper[:, 1], upper[:, 2]]
    denom = v0 - v1
    ok = np.abs(denom) > 0
    t = np.where(ok, (v0 - iso) / np.where(ok, denom, 1.0), 0.5)
    good = ok & (t >= 0.0) & (t <= 1.0)

    refined = verts.copy()
    rows = idx[good]
    refined[rows] = base[good]
    refined[rows, axis[good]] += t[good]
    return refined


def marching_cubes(grid: ScalarGrid, iso: float = 0.0) -> TriangleMesh:
    """Extract the iso-level triangle mesh from a scalar grid.

    Values exactly equal to iso are nudged by +1e-12 before table lookup.
    Triangles are wound so normals point outward for the negative-inside
    sign convention.  Raises EmptyMeshError when the grid has no sign
    change.
    """
    if grid.resolution < 2:
        raise ContractError("grid resolution must be >= 2")
    values = grid.values.copy()
    values[values == iso] += ISO_TIE_BREAK
    if values.min() > iso or values.max() < iso:
        raise EmptyMeshError(
            f"no zero crossing: field range [{values.min():.4g}, {values.max():.4g}]")
    res = grid.resolution
    # x-fastest flat order -> volume[ix, iy, iz]
    volume = values.reshape(res, res, res, order="F")
    verts, faces, _, _ = measure.marching_cubes(
        volume, iso, method="lewiner", allow_degenerate=False)
    verts = _refine_edge_vertices(verts.astype(np.float64), volume, iso)
    verts = verts * grid.spacing + grid.origin
    return TriangleMesh(verts, faces)


# ---------------------------------------------------------------------------
# exact nearest neighbor
# ---------------------------------------------------------------------------

class NearestIndex:
    """Exact nearest-neighbor squared distances over a fixed point set."""

    def __init__(self, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[0] == 0:
            raise ContractError("index needs at least one point")
        self.points = points
        self._tree = cKDTree(points)

    def __len__(self) -> int:
        return len(self.points)

    def query_sq(self, queries: np.ndarray) -> np.ndarray:
        """Squared Euclidean distance to the nearest indexed point."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        d, _ = self._tree.query(queries, k=1)
        return d * d


def nearest_sq_distance(index: NearestIndex, x) -> float:
    if index is None or len(index) == 0:
        raise ContractError("empty index")
    return float(index.query_sq(np.asarray(x, dtype=np.float64)[None, :])[0])


# ---------------------------------------------------------------------------
# surface sampling
# ---------------------------------------------------------------------------

def sample_mesh_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """n area-weighted uniform samples on the mesh surface."""
    if n < 1:
        raise ContractError("need n >= 1 samples")
    if mesh.n_triangles == 0:
        raise ContractError("mesh has no triangles")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise ContractError("mesh has zero surface area")
    tri_idx = rng.choice(mesh.n_triangles, size=n, p=areas / total)
    tri = mesh.vertices[mesh.triangles[tri_idx]]
    # square-root trick for uniform barycentric coordinates
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    u = 1.0 - r1
    v = r1 * (1.0 - r2)
    w = r1 * r2
    return (u[:, None] * tri[:, 0] + v[:, None] * tri[:, 1] + w[:, None] * tri[:, 2])


def poisson_disk_sample(mesh: TriangleMesh, n: int, rng: np.random.Generator,
                        oversample: int = 4) -> np.ndarray:
    """n Poisson-disk-distributed surface points by greedy sample elimination.

    Draws oversample*n area-weighted candidates, then repeatedly removes the
    candidate most crowded by its surviving neighbors until n remain.  The
    crowding weight of a point is sum over neighbors within 2*r_max of
    (1 - d/(2 r_max))^8, with r_max the hexagonal-packing radius for n
    points on the measured surface area.  Deterministic given the generator
    state; output count is exact.
    """
    if n < 1:
        raise ContractError("need n >= 1 samples")
    m = max(n * oversample, n + 1)
    candidates = sample_mesh_surface(mesh, m, rng)
    area = mesh.area()
    r_max = np.sqrt(area / (2.0 * np.sqrt(3.0) * n))
    radius = 2.0 * r_max

    tree = cKDTree(candidates)
    neighbor_lists = tree.query_ball_point(candidates, radius)
    weights = np.zeros(m)
    for i, nbrs in enumerate(neighbor_lists):
        if len(nbrs) <= 1:
            continue
        idx = np.array([j for j in nbrs if j != i])
        d = np.linalg.norm(candidates[idx] - candidates[i], axis=1)
        weights[i] = np.sum((1.0 - d / radius) ** 8)

    alive = np.ones(m, dtype=bool)
    heap = [(-weights[i], i) for i in range(m)]
    heapq.heapify(heap)
    remaining = m
    while remaining > n:
        w_neg, i = heapq.heappop(heap)
        if not alive[i]:
            continue
        if -w_neg != weights[i]:  # stale entry, reinsert with current weight
            heapq.heappush(heap, (-weights[i], i))
            continue
        alive[i] = False
        remaining -= 1
        for j in neighbor_lists[i]:
            if j == i or not alive[j]:
                continue
            d = np.linalg.norm(candidates[j] - candidates[i])
            weights[j] -= (1.0 - d / radius) ** 8
            heapq.heappush(heap, (-weights[j], j))
    return candidates[alive]


# ---------------------------------------------------------------------------
# point-to-triangle distance and Hausdorff
# ---------------------------------------------------------------------------

def _closest_point_on_triangles(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distance from points[i] to triangle tri[i] (paired), vectorized."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    ap = points - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = points - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = points - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    closest = np.empty_like(points)
    done = np.zeros(len(points), dtype=bool)

    region = (d1 <= 0) & (d2 <= 0)
    closest[region] = a[region]
    done |= region

    region = ~done & (d3 >= 0) & (d4 <= d3)
    closest[region] = b[region]
    done |= region

    vc = d1 * d4 - d3 * d2
    region = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    denom = np.where(d1 - d3 != 0, d1 - d3, 1.0)
    t = d1 / denom
    closest[region] = a[region] + t[region, None] * ab[region]
    done |= region

    region = ~done & (d6 >= 0) & (d5 <= d6)
    closest[region] = c[region]
    done |= region

    vb = d5 * d2 - d1 * d6
    region = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    denom = np.where(d2 - d6 != 0, d2 - d6, 1.0)
    t = d2 / denom
    closest[region] = a[region] + t[region, None] * ac[region]
    done |= region

    va = d3 * d6 - d5 * d4
    region = ~done & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    denom = np.where(denom != 0, denom, 1.0)
    t = (d4 - d3) / denom
    closest[region] = b[region] + t[region, None] * (c - b)[region]
    done |= region

    inside = ~done
    denom = np.where(va + vb + vc != 0, va + vb + vc, 1.0)
    v = vb / denom
    w = vc / denom
    closest[inside] = (a[inside] + v[inside, None] * ab[inside]
                       + w[inside, None] * ac[inside])
    return np.linalg.norm(points - closest, axis=1)


def point_mesh_distances(points: np.ndarray, mesh: TriangleMesh,
                         chunk: int = 20000) -> np.ndarray:
    """Exact Euclidean distance from each point to the mesh surface.

    A centroid KD-tree supplies an upper bound per query; all triangles
    whose centroid can still beat that bound are then checked exactly.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if mesh.n_triangles == 0:
        raise ContractError("mesh has no triangles")
    tri = mesh.vertices[mesh.triangles]
    centroids = tri.mean(axis=1)
    # max distance centroid -> farthest vertex, uniform bound
    spread = np.linalg.norm(tri - centroids[:, None, :], axis=2).max()
    tree = cKDTree(centroids)

    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        pts = points[s:s + chunk]
        _, nearest = tree.query(pts, k=1)
        upper = _closest_point_on_triangles(pts, tri[nearest])
        radii = upper + spread + 1e-12
        hits = tree.query_ball_point(pts, radii)
        counts = np.array([len(h) for h in hits])
        flat = np.concatenate([np.asarray(h) for h in hits]) if counts.sum() else \
            np.empty(0, dtype=int)
        rep = np.repeat(np.arange(len(pts)), counts)
        d = _closest_point_on_triangles(pts[rep], tri[flat])
        best = upper.copy()
        np.minimum.at(best, rep, d)
        out[s:s + chunk] = best
    return out


@dataclass(frozen=True)
class HausdorffResult:
    forward: float
    backward: float
    symmetric: float
    diagonal: float
    median: float

    @property
    def symmetric_raw(self) -> float:
        """Symmetric Hausdorff in input units (undo diagonal normalization)."""
        return self.symmetric * self.diagonal


def hausdorff_distance(a: Union[TriangleMesh, np.ndarray], b: TriangleMesh,
                       n_samples: int = 100_000, seed: int = 0) -> HausdorffResult:
    """Two-sided sampled Hausdorff distance, normalized by the union bbox diagonal.

    ``a`` may be a mesh (sampled area-weighted like ``b``) or a raw point
    set.  forward is max over a-samples of the distance to b; backward the
    reverse; symmetric their max.  ``median`` is the median of all sampled
    deviations pooled from both directions.
    """
    if b.n_triangles == 0:
        raise ContractError("mesh b is empty")
    rng = np.random.default_rng(seed)
    if isinstance(a, TriangleMesh):
        if a.n_triangles == 0:
            raise ContractError("mesh a is empty")
        a_pts = sample_mesh_surface(a, n_samples, rng)
        a_lo, a_hi = a.bbox()
    else:
        a_pts = np.atleast_2d(np.asarray(a, dtype=np.float64))
        if a_pts.shape[0] == 0:
            raise ContractError("point set a is empty")
        a_lo, a_hi = a_pts.min(axis=0), a_pts.max(axis=0)
    b_pts = sample_mesh_surface(b, n_samples, rng)

    b_lo, b_hi = b.bbox()
    lo = np.minimum(a_lo, b_lo)
    hi = np.maximum(a_hi, b_hi)
    diag = float(np.linalg.norm(hi - lo))
    if diag == 0.0:
        diag = 1.0

    d_fwd = point_mesh_distances(a_pts, b)
    if isinstance(a, TriangleMesh):
        d_bwd = point_mesh_distances(b_pts, a)
    else:
        tree = cKDTree(a_pts)
        d_bwd, _ = tree.query(b_pts, k=1)
    forward = float(d_fwd.max()) / diag
    backward = float(d_bwd.max()) / diag
    median = float(np.median(np.concatenate([d_fwd, d_bwd]))) / diag
    return HausdorffResult(forward, backward, max(forward, backward), diag, median)


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------

def _mesh_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                        triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0, return_counts=True)


def mesh_genus(mesh: TriangleMesh) -> int:
    """Total genus of a closed edge-manifold mesh, summed over components."""
    if mesh.n_triangles == 0:
        raise ContractError("mesh is empty")
    edges, counts = _mesh_edges(mesh.triangles)
    bad = edges[counts != 2]
    if len(bad):
        kinds = "boundary" if counts[counts != 2].min() == 1 else "non-manifold"
        raise TopologyError(
            f"{len(bad)} {kinds} edge(s), e.g. {bad[:5].tolist()}",
            bad_edges=bad.tolist())

    # union-find over vertices referenced by faces
    parent = np.arange(mesh.n_vertices)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv

    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.triangles.ravel()] = True
    comp_of = np.array([find(i) if used[i] else -1 for i in range(mesh.n_vertices)])
    comps = np.unique(comp_of[comp_of >= 0])
    genus = 0
    for comp in comps:
        vset = comp_of == comp
        n_v = int(vset.sum())
        n_e = int(np.sum(comp_of[edges[:, 0]] == comp))
        n_f = int(np.sum(comp_of[mesh.triangles[:, 0]] == comp))
        chi = n_v - n_e + n_f
        if (2 - chi) % 2 != 0:
            raise TopologyError(f"component has odd Euler defect (chi={chi})")
        genus += (2 - chi) // 2
    return genus


# ---------------------------------------------------------------------------
# dihedral statistics along a polyline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DihedralStats:
    median_deg: float
    p90_deg: float
    n_samples: int
    n_covered: int
    angles_deg: np.ndarray = field(repr=False, default=None)


def dihedral_profile(mesh: TriangleMesh, polyline: np.ndarray,
                     probe_radius: float) -> DihedralStats:
    """Angle between the two surface wings meeting along a polyline.

    For each polyline sample, nearby faces (centroid within probe_radius)
    are split into the two sides of the local crease by the sign of their
    offset across the mean offset direction; the reported angle is between
    the two sides' average normals.  Samples with faces on only one side
    are excluded from the statistics.
    """
    if probe_radius <= 0:
        raise ContractError("probe_radius must be positive")
    polyline = np.atleast_2d(np.asarray(polyline, dtype=np.float64))
    if polyline.shape[0] == 0:
        raise ContractError("polyline must be non-empty")
    if mesh.n_triangles == 0:
        raise ContractError("mesh is empty")

    tri = mesh.vertices[mesh.triangles]
    centroids = tri.mean(axis=1)
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norms = np.linalg.norm(normals, axis=1)
    keep = norms > 0
    normals = normals[keep] / norms[keep, None]
    centroids = centroids[keep]
    tree = cKDTree(centroids)

    n_pts = polyline.shape[0]
    angles = []
    covered = 0
    for i in range(n_pts):
        s = polyline[i]
        nxt = polyline[min(i + 1, n_pts - 1)]
        prv = polyline[max(i - 1, 0)]
        tangent = nxt - prv
        t_norm = np.linalg.norm(tangent)
        if t_norm == 0:
            continue
        tangent /= t_norm
        near = tree.query_ball_point(s, probe_radius)
        if len(near) < 2:
            continue
        near = np.asarray(near)
        off = centroids[near] - s
        off -= np.outer(off @ tangent, tangent)  # project off the tangent
        lens = np.linalg.norm(off, axis=1)
        ok = lens > 1e-12
        if ok.sum() < 2:
            continue
        off = off[ok] / lens[ok, None]
        nrm = normals[near][ok]
        mean_dir = off.mean(axis=0)
        md_norm = np.linalg.norm(mean_dir)
        if md_norm >= 1e-3:
            # split across the bisector plane spanned by tangent and mean
            side = np.cross(mean_dir / md_norm, off) @ tangent
        else:
            # wings are antipodal (flat surface); split against one wing
            side = off @ off[0]
        left = side >= 0
        right = ~left
        if left.sum() == 0 or right.sum() == 0:
            continue
        n_left = nrm[left].mean(axis=0)
        n_right = nrm[right].mean(axis=0)
        ln, rn = np.linalg.norm(n_left), np.linalg.norm(n_right)
        if ln == 0 or rn == 0:
            continue
        cosang = np.clip(n_left @ n_right / (ln * rn), -1.0, 1.0)
        angles.append(np.degrees(np.arccos(cosang)))
        covered += 1

    angles = np.asarray(angles)
    if covered == 0:
        return DihedralStats(float("nan"), float("nan"), n_pts, 0, angles)
    return DihedralStats(float(np.median(angles)),
                         float(np.percentile(angles, 90)),
                         n_pts, covered, angles)


# ---------------------------------------------------------------------------
# OBJ I/O
# ---------------------------------------------------------------------------

def write_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def read_obj(path) -> TriangleMesh:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan-triangulate
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise ContractError(f"{path}: no vertices")
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64)
                        if faces else np.empty((0, 3), dtype=np.int64))
