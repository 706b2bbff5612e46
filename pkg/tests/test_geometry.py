import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperqf.geometry import (
    BallConfig, clip_features, conformal_factor, expmap, expmap0, in_ball, mobius_add,
    pairwise_poincare_dist, poincare_dist, project_to_ball, radius,
)

from conftest import ball_points

# mpmath, 30 digits
LAMBDA_HALF = 2.66666666666666666666666666667
TANH_1 = 0.761594155955764888119458282605
DIST_HALF = 1.09861228866810969139524523692

C1 = BallConfig(curvature=1.0)


class TestBallConfig:
    @pytest.mark.parametrize("kw", [{"curvature": 0.0}, {"curvature": -1.0}, {"dim": 0},
                                    {"eps_boundary": 0.0}, {"eps_boundary": 2e-3}])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            BallConfig(**kw)

    def test_dim_checked(self):
        with pytest.raises(ValueError):
            radius(np.zeros(3), BallConfig(dim=2))


class TestConformalFactor:
    def test_origin(self):
        assert float(conformal_factor(np.zeros(2), C1)) == 2.0

    @pytest.mark.parametrize("x", [(0.5, 0.0), (0.3, 0.4)])
    def test_quarter_norm(self, x):
        assert float(conformal_factor(np.array(x), C1)) == pytest.approx(LAMBDA_HALF, rel=1e-14)

    def test_at_least_two(self, rng):
        lam = conformal_factor(ball_points(rng, 200, 5), C1)
        assert np.all(lam >= 2.0)


class TestMobiusAdd:
    def test_left_identity(self):
        np.testing.assert_array_equal(mobius_add(np.zeros(2), np.array([0.4, 0.0]), C1), [0.4, 0.0])

    def test_inverse(self):
        np.testing.assert_allclose(mobius_add(np.array([0.3, 0.0]), np.array([-0.3, 0.0]), C1), 0.0, atol=1e-15)

    def test_collinear(self):
        np.testing.assert_allclose(mobius_add(np.array([0.3, 0.0]), np.array([0.4, 0.0]), C1), [0.625, 0.0],
                                   rtol=1e-14)

    @pytest.mark.parametrize("c", [0.1, 1.0, 2.0])
    def test_collinear_closed_form(self, rng, c):
        ball = BallConfig(curvature=c)
        a, b = rng.uniform(-0.9, 0.9, size=(2, 500)) / math.sqrt(c)
        out = mobius_add(np.stack([a, np.zeros_like(a)], 1), np.stack([b, np.zeros_like(b)], 1), ball)
        np.testing.assert_allclose(out[:, 0], (a + b) / (1 + c * a * b), atol=1e-12)
        np.testing.assert_array_equal(out[:, 1], 0.0)

    def test_closure_near_boundary(self, rng):
        h = ball_points(rng, 1000, 4, max_frac=0.999999)
        w = ball_points(rng, 1000, 4, max_frac=0.999999)
        assert in_ball(mobius_add(h, w, C1), C1)


class TestExpmap:
    def test_zero_vector(self):
        np.testing.assert_array_equal(expmap(np.zeros(2), np.zeros(2), C1), 0.0)
        np.testing.assert_array_equal(expmap0(np.zeros(2), C1), 0.0)

    def test_zero_vector_returns_base(self):
        x = np.array([0.2, -0.1])
        np.testing.assert_array_equal(expmap(x, np.zeros(2), C1), x)

    def test_unit_axis(self):
        for f in (lambda v: expmap(np.zeros(2), v, C1), lambda v: expmap0(v, C1)):
            np.testing.assert_allclose(f(np.array([1.0, 0.0])), [TANH_1, 0.0], rtol=1e-14)

    def test_rotational_symmetry(self):
        out = expmap0(np.array([0.6, 0.8]), C1)
        assert np.linalg.norm(out) == pytest.approx(TANH_1, rel=1e-14)
        np.testing.assert_allclose(out / np.linalg.norm(out), [0.6, 0.8], rtol=1e-14)

    def test_expmap_at_origin_matches_expmap0(self, rng):
        v = rng.standard_normal((100, 3))
        np.testing.assert_allclose(expmap(np.zeros(3), v, C1), expmap0(v, C1), atol=1e-15)

    def test_stays_inside(self, rng):
        x = ball_points(rng, 300, 3, max_frac=0.99)
        v = 10 * rng.standard_normal((300, 3))
        assert in_ball(expmap(x, v, C1), C1)


class TestDistance:
    def test_self_distance(self, rng):
        x = ball_points(rng, 50, 3)
        np.testing.assert_allclose(poincare_dist(x, x, C1), 0.0, atol=1e-12)

    def test_origin_closed_form(self):
        assert float(poincare_dist(np.zeros(2), np.array([0.5, 0.0]), C1)) == pytest.approx(DIST_HALF, rel=1e-14)
        assert float(poincare_dist(np.array([0.5, 0.0]), np.zeros(2), C1)) == pytest.approx(DIST_HALF, rel=1e-14)

    @pytest.mark.parametrize("c", [0.1, 1.0, 2.0])
    def test_pairwise_matches_direct(self, rng, c):
        ball = BallConfig(curvature=c)
        x = ball_points(rng, 20, 6, c, 0.9)
        y = ball_points(rng, 15, 6, c, 0.9)
        direct = poincare_dist(x[:, None, :], y[None, :, :], ball)
        np.testing.assert_allclose(pairwise_poincare_dist(x, y, ball), direct, rtol=1e-9, atol=1e-9)

    def test_monotone_in_norm(self):
        d = np.array([0.6, -0.8])
        r = radius(np.linspace(0, 0.999, 400)[:, None] * d, C1)
        assert np.all(np.diff(r) > 0)


class TestRadius:
    def test_origin(self):
        assert float(radius(np.zeros(3), C1)) == 0.0

    def test_half(self):
        assert float(radius(np.array([0.5, 0.0]), C1)) == pytest.approx(DIST_HALF, rel=1e-14)

    @pytest.mark.parametrize("c", [0.1, 1.0, 2.0])
    def test_round_trip(self, rng, c):
        ball = BallConfig(curvature=c)
        v = rng.standard_normal((500, 4))
        v *= rng.uniform(0.01, 3.0, size=(500, 1)) / np.linalg.norm(v, axis=1, keepdims=True)
        np.testing.assert_allclose(radius(expmap0(v, ball), ball), 2 * np.linalg.norm(v, axis=1), rtol=1e-8)

    def test_equals_distance_from_origin(self, rng):
        x = ball_points(rng, 100, 3)
        np.testing.assert_allclose(radius(x, C1), poincare_dist(np.zeros(3), x, C1), rtol=1e-12)


class TestClipAndProject:
    def test_clip(self):
        np.testing.assert_array_equal(clip_features(np.array([0.3, 0.0]), 1.0), [0.3, 0.0])
        np.testing.assert_allclose(clip_features(np.array([3.0, 4.0]), 1.0), [0.6, 0.8], rtol=1e-15)
        np.testing.assert_array_equal(clip_features(np.zeros(2), 1.0), 0.0)

    def test_clip_batch_only_touches_long_rows(self):
        v = np.array([[0.3, 0.0], [3.0, 4.0]])
        out = clip_features(v, 1.0)
        np.testing.assert_array_equal(out[0], [0.3, 0.0])
        np.testing.assert_allclose(out[1], [0.6, 0.8])

    def test_project(self):
        ball = BallConfig(eps_boundary=1e-5)
        np.testing.assert_array_equal(project_to_ball(np.array([0.1, 0.1]), ball), [0.1, 0.1])
        np.testing.assert_allclose(project_to_ball(np.array([1.0, 0.0]), ball), [0.99999, 0.0], rtol=1e-15)
        out = project_to_ball(np.array([0.8, 0.6]), ball)
        assert np.linalg.norm(out) == pytest.approx(0.99999, rel=1e-15)
        np.testing.assert_allclose(out / np.linalg.norm(out), [0.8, 0.6], rtol=1e-15)

    def test_project_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            project_to_ball(np.array([np.nan, 0.0]), C1)


finite = st.floats(-0.6, 0.6, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3),
       st.lists(finite, min_size=3, max_size=3))
def test_triangle_inequality_hypothesis(a, b, c):
    x, y, z = (np.array(v) for v in (a, b, c))
    dxz = float(poincare_dist(x, z, C1))
    assert dxz <= float(poincare_dist(x, y, C1)) + float(poincare_dist(y, z, C1)) + 1e-9
