"""Canonical demo inputs: parametric curve sets and reference meshes.

These are the shapes used by the test suite and the experiment sweeps:
a single circle (surfaces to a ball), three orthogonal great circles of a
sphere, a torus curve network, and a cube wireframe whose edges can be
flagged as sharp features.
"""

from __future__ import annotations

import numpy as np

from .curves import CurveSet, Polyline
from .geometry import TriangleMesh


def _ring(n: int) -> np.ndarray:
    t = np.arange(n) * (2.0 * np.pi / n)
    return t


def make_circle(radius: float = 0.5, n: int = 400, feature: bool = False) -> CurveSet:
    """One closed circle in the z=0 plane, centered at the origin."""
    t = _ring(n)
    pts = np.stack([radius * np.cos(t), radius * np.sin(t), np.zeros(n)], axis=1)
    return CurveSet([Polyline(pts, feature, True)])


def make_great_circles(radius: float = 0.35, n: int = 200) -> CurveSet:
    """Three orthogonal great circles of a sphere, all smooth."""
    t = _ring(n)
    c, s = np.cos(t), np.sin(t)
    z = np.zeros(n)
    rings = [
        np.stack([radius * c, radius * s, z], axis=1),
        np.stack([radius * c, z, radius * s], axis=1),
        np.stack([z, radius * c, radius * s], axis=1),
    ]
    return CurveSet([Polyline(p, False, True) for p in rings])


def make_torus_curves(major: float = 0.35, minor: float = 0.15,
                      n_meridians: int = 8, meridian_samples: int = 48,
                      n_parallels: int = 4, parallel_samples: int = 96) -> CurveSet:
    """Meridian and parallel circles of a torus around the z axis."""
    curves = []
    for k in range(n_meridians):
        u = 2.0 * np.pi * k / n_meridians
        v = _ring(meridian_samples)
        rad = major + minor * np.cos(v)
        pts = np.stack([rad * np.cos(u), rad * np.sin(u), minor * np.sin(v)], axis=1)
        curves.append(Polyline(pts, False, True))
    for k in range(n_parallels):
        v = 2.0 * np.pi * k / n_parallels
        u = _ring(parallel_samples)
        rad = major + minor * np.cos(v)
        pts = np.stack([rad * np.cos(u), rad * np.sin(u),
                        np.full(parallel_samples, minor * np.sin(v))], axis=1)
        curves.append(Polyline(pts, False, True))
    return CurveSet(curves)


def make_cube_wireframe(side: float = 0.8, samples_per_edge: int = 24,
                        feature: bool = True) -> CurveSet:
    """The 12 edges of an axis-aligned cube centered at the origin."""
    h = side / 2.0
    corners = np.array([[sx, sy, sz] for sx in (-h, h)
                        for sy in (-h, h) for sz in (-h, h)])
    edge_pairs = [(0, 1), (2, 3), (4, 5), (6, 7),   # z-direction
                  (0, 2), (1, 3), (4, 6), (5, 7),   # y-direction
                  (0, 4), (1, 5), (2, 6), (3, 7)]   # x-direction
    t = np.linspace(0.0, 1.0, samples_per_edge)
    curves = []
    for i, j in edge_pairs:
        pts = corners[i] + t[:, None] * (corners[j] - corners[i])
        curves.append(Polyline(pts, feature, False))
    return CurveSet(curves)


def torus_sdf(points: np.ndarray, major: float = 0.35, minor: float = 0.15) -> np.ndarray:
    """Exact signed distance to the torus surface (negative inside the tube)."""
    points = np.atleast_2d(points)
    rho = np.sqrt(points[:, 0] ** 2 + points[:, 1] ** 2)
    return np.sqrt((rho - major) ** 2 + points[:, 2] ** 2) - minor


def icosphere(radius: float, subdivisions: int = 4) -> TriangleMesh:
    """Geodesic sphere mesh by repeated subdivision of an icosahedron."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)

    for _ in range(subdivisions):
        edge_mid = {}
        new_faces = []
        verts_list = list(verts)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in edge_mid:
                m = verts_list[i] + verts_list[j]
                m /= np.linalg.norm(m)
                edge_mid[key] = len(verts_list)
                verts_list.append(m)
            return edge_mid[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    return TriangleMesh(verts * radius, faces)
