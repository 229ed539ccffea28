"""Fixture geometry sanity: the canonical demo inputs."""

import numpy as np
import pytest

from curveloft import fixtures
from curveloft.geometry import mesh_genus, point_mesh_distances


class TestCurveFixtures:
    def test_circle_radius_and_flags(self):
        curves = fixtures.make_circle(radius=0.5, n=100)
        pts = curves.points
        assert len(pts) == 100
        np.testing.assert_allclose(np.linalg.norm(pts[:, :2], axis=1), 0.5,
                                   atol=1e-12)
        assert not curves.flags.any()
        assert curves.curves[0].is_closed

    def test_great_circles_on_sphere(self):
        curves = fixtures.make_great_circles(radius=0.35, n=64)
        assert len(curves.curves) == 3
        radii = np.linalg.norm(curves.points, axis=1)
        np.testing.assert_allclose(radii, 0.35, atol=1e-12)

    def test_torus_points_on_torus(self):
        major, minor = 0.27, 0.15
        curves = fixtures.make_torus_curves(major=major, minor=minor)
        sdf = fixtures.torus_sdf(curves.points, major, minor)
        assert np.abs(sdf).max() < 1e-12
        assert np.abs(curves.points).max() <= major + minor + 1e-12

    def test_cube_wireframe_edges(self):
        curves = fixtures.make_cube_wireframe(side=0.8, feature=True)
        assert len(curves.curves) == 12
        pts = curves.points
        # every sample sits on an edge: at least two coordinates at +-0.4
        at_face = np.isclose(np.abs(pts), 0.4)
        assert (at_face.sum(axis=1) >= 2).all()
        assert curves.flags.all()

    def test_cube_wireframe_smooth_variant(self):
        curves = fixtures.make_cube_wireframe(side=0.8, feature=False)
        assert not curves.flags.any()


class TestIcosphere:
    def test_genus_zero_closed(self):
        mesh = fixtures.icosphere(0.35, 3)
        assert mesh_genus(mesh) == 0

    def test_vertices_on_sphere(self):
        mesh = fixtures.icosphere(0.35, 3)
        radii = np.linalg.norm(mesh.vertices, axis=1)
        np.testing.assert_allclose(radii, 0.35, atol=1e-12)

    def test_mesh_approximates_sphere(self):
        mesh = fixtures.icosphere(0.4, 4)
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(500, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        d = point_mesh_distances(dirs * 0.4, mesh)
        assert d.max() < 1e-3  # chord error at subdivision 4
