import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from hyperqf.geometry import BallConfig, poincare_dist
from hyperqf.losses import (
    LossConfig, align_euclidean, align_hyper_cosine, align_hyper_poincare, align_rqs, contrastive_loss,
    cosine_dist, infonce_batch, rqs_select,
)

from conftest import ball_points


class TestCosine:
    @pytest.mark.parametrize("a,b,expected", [((1, 0), (1, 0), 0.0), ((1, 0), (0, 1), 1.0), ((1, 0), (-2, 0), 2.0)])
    def test_values(self, a, b, expected):
        assert float(cosine_dist(np.array(a, float), np.array(b, float))) == pytest.approx(expected, abs=1e-15)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            cosine_dist(np.zeros(2), np.ones(2))


class TestAlign:
    def test_exact_match_first(self):
        u = np.array([0.3, 0.1])
        loss, j = align_euclidean(np.stack([u, [-0.1, 0.3]]), u)
        assert j == 0 and float(loss) == pytest.approx(0.0, abs=1e-15)

    def test_single_antiparallel(self):
        e = np.array([0.2, 0.5])
        loss, j = align_euclidean(e[None], -e)
        assert j == 0 and float(loss) == pytest.approx(2.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            align_euclidean(np.zeros((0, 2)), np.ones(2))

    def test_ties_lowest_index(self):
        u = np.array([1.0, 0.0])
        _, j = align_euclidean(np.array([[0.0, 1.0], [0.0, -1.0]]), u)
        assert j == 0

    def test_brute_force_min(self, rng):
        ball = BallConfig()
        for _ in range(200):
            E = ball_points(rng, 4, 3)
            u = ball_points(rng, 1, 3)[0]
            cos = [float(cosine_dist(e, u)) for e in E]
            poin = [float(poincare_dist(e, u, ball)) for e in E]
            l1, j1 = align_euclidean(E, u)
            l2, j2 = align_hyper_cosine(E, u)
            l3, j3 = align_hyper_poincare(E, u, ball)
            assert (float(l1), j1) == (min(cos), cos.index(min(cos)))
            assert (float(l2), j2) == (min(cos), cos.index(min(cos)))
            assert float(l3) == pytest.approx(min(poin), abs=1e-12) and j3 == poin.index(min(poin))
            assert all(float(l1) <= c for c in cos)

    def test_poincare_coincident_and_single(self, rng):
        E = ball_points(rng, 3, 2)
        loss, j = align_hyper_poincare(E, E[1])
        assert j == 1 and float(loss) == pytest.approx(0.0, abs=1e-7)
        loss, _ = align_hyper_poincare(E[:1], E[2])
        assert float(loss) == float(poincare_dist(E[0], E[2]))

    def test_cosine_ignores_radius(self):
        u = np.array([0.1, 0.2])
        E = np.array([[0.3, 0.6], [0.2, -0.1]])
        loss, j = align_hyper_cosine(E, u)
        assert j == 0 and float(loss) == pytest.approx(0.0, abs=1e-15)
        loss, _ = align_hyper_cosine(np.array([[0.2, -0.1], [-0.4, 0.2]]), u)
        assert float(loss) == pytest.approx(1.0)

    def test_argmin_invariant_to_positive_rescaling(self, rng):
        for _ in range(200):
            E = rng.standard_normal((5, 4))
            u = rng.standard_normal(4)
            _, j = align_euclidean(E, u)
            scaled = E * rng.uniform(0.01, 10, size=(5, 1))
            assert align_euclidean(scaled, u)[1] == j


class TestRQS:
    def test_p_one_is_deterministic(self, rng):
        for _ in range(100):
            E = ball_points(rng, 6, 3)
            u = ball_points(rng, 1, 3)[0]
            for sim, det in (("cosine", align_euclidean(E, u)), ("poincare", align_hyper_poincare(E, u))):
                loss, j = align_rqs(E, u, 1.0, rng, sim)
                assert j == det[1] and float(loss) == float(det[0])

    def test_p_zero_uniform_chi_square(self):
        rng = np.random.default_rng(7)
        sel = rqs_select(np.zeros(80_000, dtype=int), 8, 0.0, rng)
        freq = np.bincount(sel, minlength=8) / sel.size
        assert np.all(np.abs(freq - 0.125) <= 0.005)
        assert stats.chisquare(np.bincount(sel, minlength=8)).pvalue > 0.001

    def test_mixture_half(self):
        rng = np.random.default_rng(8)
        E = np.array([[1.0, 0.0], [0.0, 1.0]])
        u = np.array([1.0, 0.1])
        hits = sum(align_rqs(E, u, 0.5, rng)[1] == 0 for _ in range(20_000))
        assert abs(hits / 20_000 - 0.75) <= 0.01

    def test_invalid_p(self, rng):
        with pytest.raises(ValueError):
            rqs_select(np.zeros(2, int), 4, 1.5, rng)


def _mp_infonce(E, U, tau):
    """Independent evaluation in 40-digit arithmetic with plain loops."""
    mpmath.mp.dps = 40
    B = len(U)

    def cos(a, b):
        a = [mpmath.mpf(float(x)) for x in a]
        b = [mpmath.mpf(float(x)) for x in b]
        dot = mpmath.fsum(x * y for x, y in zip(a, b))
        return 1 - dot / (mpmath.sqrt(mpmath.fsum(x * x for x in a)) * mpmath.sqrt(mpmath.fsum(y * y for y in b)))

    S = [[-min(cos(e, U[t]) for e in E[i]) / tau for t in range(B)] for i in range(B)]
    i2t = mpmath.fsum(mpmath.log(mpmath.fsum(mpmath.exp(s) for s in S[i])) - S[i][i] for i in range(B)) / B
    t2i = mpmath.fsum(mpmath.log(mpmath.fsum(mpmath.exp(S[i][t]) for i in range(B))) - S[t][t] for t in range(B)) / B
    return float((i2t + t2i) / 2)


class TestInfoNCE:
    def test_single_pair_is_zero(self, rng):
        E = rng.standard_normal((1, 3, 4))
        U = rng.standard_normal((1, 4))
        assert float(infonce_batch(E, U, LossConfig())) == 0.0

    def test_perfect_orthogonal_pairs(self):
        E = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])]
        U = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        losses = [float(infonce_batch(E, U, LossConfig(space="euclidean", temperature=t))) for t in (1.0, 0.1, 0.01)]
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-40

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_high_precision(self, seed):
        rng = np.random.default_rng(seed)
        E = rng.standard_normal((3, 4, 5))
        U = rng.standard_normal((3, 5))
        got = float(infonce_batch(list(E), list(U), LossConfig(space="euclidean", temperature=0.3)))
        assert got == pytest.approx(_mp_infonce(E, U, 0.3), rel=1e-12)

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            infonce_batch([rng.standard_normal((2, 3))], [], LossConfig())

    def test_non_negative(self, rng):
        for _ in range(50):
            E = ball_points(rng, 12, 3).reshape(4, 3, 3)
            U = ball_points(rng, 4, 3)
            for sim in ("cosine", "poincare"):
                assert float(infonce_batch(E, U, LossConfig(similarity=sim))) >= 0.0

    def test_rqs_only_touches_diagonal(self):
        rng = np.random.default_rng(3)
        E = ball_points(rng, 32, 3).reshape(4, 8, 3)
        U = ball_points(rng, 4, 3)
        _, det = contrastive_loss(E, U, LossConfig())
        _, chosen = contrastive_loss(E, U, LossConfig(rqs=True, rqs_probability=0.0), np.random.default_rng(0))
        assert chosen.shape == det.shape == (4,)
        with pytest.raises(ValueError):
            contrastive_loss(E, U, LossConfig(rqs=True))

    def test_positive_only_is_mean_of_alignments(self, rng):
        E = ball_points(rng, 12, 3).reshape(4, 3, 3)
        U = ball_points(rng, 4, 3)
        loss, _ = contrastive_loss(E, U, LossConfig(mode="positive-only", similarity="poincare"))
        expect = np.mean([float(align_hyper_poincare(E[i], U[i])[0]) for i in range(4)])
        assert float(loss) == pytest.approx(expect, rel=1e-9)


class TestLossConfig:
    def test_poincare_needs_hyperbolic(self):
        with pytest.raises(ValueError):
            LossConfig(space="euclidean", similarity="poincare")

    @pytest.mark.parametrize("kw", [{"rqs_probability": -0.1}, {"temperature": 0.0}, {"mode": "x"}, {"space": "x"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LossConfig(**kw)
