"""Loss terms: hand-computed values, curvature oracles, invariances."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curveloft.energy import (FEATURE_WEIGHT_CAP, LossBreakdown, LossWeights,
                              cosine_factor, curvature_kernel, curvatures,
                              dirichlet_off_loss, dirichlet_on_loss,
                              eikonal_loss, feature_weight, feature_weights,
                              smooth_loss, total_loss)
from curveloft.errors import (ContractError, DegenerateBatchError,
                              DegenerateGradientError)
from curveloft.field import Jet3
from curveloft.geometry import NearestIndex

from helpers import random_rotation


def jet(grad, hess=None, value=0.0) -> Jet3:
    hess = np.zeros((3, 3)) if hess is None else np.asarray(hess, dtype=float)
    return Jet3(value, np.asarray(grad, dtype=float), Jet3.pack_hess(hess))


SPHERE_JET = jet([1.0, 0.0, 0.0], np.diag([0.0, 1.0, 1.0]))


class TestEikonal:
    def test_unit_gradients(self):
        assert eikonal_loss([jet([1, 0, 0]), jet([0, 1, 0])]) == 0.0

    def test_hand_value(self):
        assert eikonal_loss([jet([1, 0, 0]), jet([0, 2, 0])]) == pytest.approx(0.5)

    def test_zero_gradient(self):
        assert eikonal_loss([jet([0, 0, 0])]) == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            eikonal_loss([])

    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3)),
                    min_size=1, max_size=10))
    def test_nonnegative(self, grads):
        assert eikonal_loss([jet(g) for g in grads]) >= 0.0


class TestDirichlet:
    def test_on_surface(self):
        assert dirichlet_on_loss([0.0, 0.0, 0.0]) == 0.0

    def test_on_hand_values(self):
        assert dirichlet_on_loss([0.1, -0.3]) == pytest.approx(0.2)
        assert dirichlet_on_loss([-0.5]) == pytest.approx(0.5)

    def test_off_saturates_at_zero(self):
        assert dirichlet_off_loss([0.0], alpha=100.0) == pytest.approx(1.0)

    def test_off_hand_values(self):
        assert dirichlet_off_loss([0.1], alpha=100.0) == pytest.approx(np.exp(-10))
        assert dirichlet_off_loss([0.0, 0.1], alpha=100.0) == pytest.approx(
            0.5 * (1 + np.exp(-10)))

    def test_off_alpha_validated(self):
        with pytest.raises(ContractError):
            dirichlet_off_loss([0.1], alpha=0.0)

    @given(st.floats(0.01, 1.0), st.floats(1.01, 3.0))
    def test_off_strictly_decreasing_in_magnitude(self, v, factor):
        low = dirichlet_off_loss([v * factor], alpha=50.0)
        high = dirichlet_off_loss([v], alpha=50.0)
        assert low < high < 1.0


class TestCurvatures:
    def test_unit_sphere_exact(self):
        h, k, density = curvatures(SPHERE_JET)
        assert abs(abs(h) - 1.0) < 1e-12
        assert abs(k - 1.0) < 1e-12
        assert abs(density - 2.0) < 1e-12

    def test_plane(self):
        assert curvatures(jet([0, 0, 1])) == (0.0, 0.0, 0.0)

    def test_scaled_plane(self):
        assert curvatures(jet([0, 0, 2])) == (0.0, 0.0, 0.0)

    def test_degenerate_gradient_rejected(self):
        with pytest.raises(DegenerateGradientError):
            curvatures(jet([1e-9, 0, 0], np.eye(3)))

    def test_matches_shape_operator_eigenvalues(self):
        # independent oracle: principal curvatures are the negated tangent
        # eigenvalues of the projected Hessian P (M/|g|) P
        rng = np.random.default_rng(42)
        for _ in range(300):
            g = rng.normal(size=3)
            m = rng.normal(size=(3, 3))
            m = 0.5 * (m + m.T)
            h, k, density = curvatures(jet(g, m))
            n = np.linalg.norm(g)
            ghat = g / n
            proj = np.eye(3) - np.outer(ghat, ghat)
            lam, vec = np.linalg.eigh(proj @ (m / n) @ proj)
            normal_axis = np.argmax(np.abs(vec.T @ ghat))
            k1, k2 = [-lam[i] for i in range(3) if i != normal_axis]
            assert h == pytest.approx((k1 + k2) / 2, abs=1e-8)
            assert k == pytest.approx(k1 * k2, abs=1e-8)
            assert density == pytest.approx(k1 ** 2 + k2 ** 2, abs=1e-8)

    def test_density_nonnegative_random(self):
        rng = np.random.default_rng(7)
        g = rng.normal(size=(10_000, 3))
        m = rng.normal(size=(10_000, 3, 3))
        m = 0.5 * (m + m.transpose(0, 2, 1))
        _, _, density, valid = curvature_kernel(g, m)
        assert valid.all()
        assert (density >= 0.0).all()

    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_field_scaling_invariance(self, c):
        rng = np.random.default_rng(11)
        for _ in range(50):
            g = rng.normal(size=3)
            m = rng.normal(size=(3, 3))
            m = 0.5 * (m + m.T)
            h0, k0, d0 = curvatures(jet(g, m))
            h1, k1, d1 = curvatures(jet(c * g, c * m))
            assert h1 == pytest.approx(h0, rel=1e-10, abs=1e-10)
            assert k1 == pytest.approx(k0, rel=1e-10, abs=1e-10)
            assert d1 == pytest.approx(d0, rel=1e-10, abs=1e-10)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(13)
        for trial in range(50):
            g = rng.normal(size=3)
            m = rng.normal(size=(3, 3))
            m = 0.5 * (m + m.T)
            rot = random_rotation(seed=trial)
            h0, k0, d0 = curvatures(jet(g, m))
            h1, k1, d1 = curvatures(jet(rot @ g, rot @ m @ rot.T))
            scale = max(abs(h0), abs(k0), abs(d0), 1.0)
            assert abs(h1 - h0) < 1e-10 * scale
            assert abs(k1 - k0) < 1e-10 * scale
            assert abs(d1 - d0) < 1e-10 * scale


class TestFeatureWeight:
    def test_on_feature_point(self):
        index = NearestIndex(np.array([[0.1, 0.2, 0.3]]))
        assert feature_weight([0.1, 0.2, 0.3], index) == 0.0

    def test_empty_features_default(self):
        assert feature_weight([0.1, 0.2, 0.3], None) == 1.0

    def test_squared_distance(self):
        index = NearestIndex(np.array([[0.0, 0.0, 0.0]]))
        assert feature_weight([0.2, 0.0, 0.0], index) == pytest.approx(0.04)

    def test_cap(self):
        index = NearestIndex(np.array([[-10.0, 0.0, 0.0]]))
        assert feature_weight([10.0, 0.0, 0.0], index) == FEATURE_WEIGHT_CAP

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        index = NearestIndex(rng.uniform(-0.5, 0.5, (20, 3)))
        pts = rng.uniform(-0.5, 0.5, (10, 3))
        batch = feature_weights(pts, index)
        for p, w in zip(pts, batch):
            assert feature_weight(p, index) == pytest.approx(w)


class TestSmoothLoss:
    def test_planar_jets(self):
        jets = [jet([0, 0, 1]), jet([1, 0, 0])]
        assert smooth_loss(jets, np.zeros((2, 3)), None) == 0.0

    def test_sphere_jet_no_features(self):
        assert smooth_loss([SPHERE_JET], np.zeros((1, 3)), None) == pytest.approx(2.0)

    def test_feature_point_kills_smoothness(self):
        index = NearestIndex(np.array([[1.0, 0.0, 0.0]]))
        value = smooth_loss([SPHERE_JET], np.array([[1.0, 0.0, 0.0]]), index)
        assert value == 0.0

    def test_degenerate_samples_excluded_from_count(self):
        jets = [SPHERE_JET, jet([0, 0, 0], np.eye(3))]
        value = smooth_loss(jets, np.zeros((2, 3)), None)
        assert value == pytest.approx(2.0)  # mean over the single kept sample

    def test_all_degenerate_rejected(self):
        with pytest.raises(DegenerateBatchError):
            smooth_loss([jet([0, 0, 0], np.eye(3))], np.zeros((1, 3)), None)


class TestCosineFactor:
    def test_schedule_endpoints(self):
        assert cosine_factor(0, 1000) == 1.0
        assert cosine_factor(500, 1000) == 0.0
        assert cosine_factor(1000, 1000) == 1.0

    def test_periodic(self):
        for it in (3, 777, 1003, 250_000):
            assert cosine_factor(it, 1000) == cosine_factor(it + 1000, 1000)

    @given(st.integers(0, 10 ** 9), st.integers(1, 10 ** 6))
    @settings(max_examples=300)
    def test_in_unit_interval(self, iteration, cycle):
        tau = cosine_factor(iteration, cycle)
        assert 0.0 <= tau <= 1.0

    def test_preconditions(self):
        with pytest.raises(ContractError):
            cosine_factor(-1, 1000)
        with pytest.raises(ContractError):
            cosine_factor(0, 0)


class TestTotalLoss:
    def test_all_zero(self):
        weights = LossWeights()
        row = total_loss(0.0, 0.0, 0.0, 0.0, weights, iteration=0)
        assert row.total == 0.0

    def test_eikonal_weighting(self):
        weights = LossWeights(lambda_eikonal=0.1, lambda_on_curve=0,
                              lambda_off_curve=0, lambda_smooth=0)
        row = total_loss(1.0, 0.0, 0.0, 0.0, weights, iteration=0)
        assert row.total == pytest.approx(0.1)

    def test_smooth_weighting_at_tau_one(self):
        weights = LossWeights(lambda_eikonal=0, lambda_on_curve=0,
                              lambda_off_curve=0, lambda_smooth=5e-4)
        row = total_loss(0.0, 0.0, 0.0, 2.0, weights, iteration=0)
        assert row.tau == 1.0
        assert row.total == pytest.approx(1e-3)

    def test_total_recombines_exactly(self):
        weights = LossWeights()
        rng = np.random.default_rng(5)
        for it in (0, 3, 499, 500, 1700):
            e, d_on, d_off, s = rng.uniform(0, 2, 4)
            row = total_loss(e, d_on, d_off, s, weights, iteration=it)
            again = LossBreakdown.combine(weights, row.eikonal, row.dirichlet_on,
                                          row.dirichlet_off, row.smooth, row.tau)
            assert row.total == again.total  # bitwise

    def test_weight_validation(self):
        with pytest.raises(ContractError):
            total_loss(0, 0, 0, 0, LossWeights(lambda_eikonal=-1), 0)
