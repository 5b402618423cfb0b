"""Channel attention tests: pooling and bottleneck against scalar-loop
oracles, score range, and the homogeneity contrast with linear attention."""

import math

import numpy as np
import pytest

from linatt.matrixlib import ContractViolation, Matrix, Rng
from linatt.projections import FeatureMap, init_projections, random_feature_map, rank_one_projections
from linatt.channel_attention import (
    CAWeights,
    ca_forward,
    compare_channel_mechanisms,
    global_average_pool,
    init_ca_weights,
)
from linatt.attention import linear_sa_forward_linear


# ---------------------------------------------------------------------------
# Scalar-loop oracle for the whole squeeze path
# ---------------------------------------------------------------------------


def loop_ca_forward(x_rows, w1, w2):
    n, c = len(x_rows), len(x_rows[0])
    k = len(w1[0])
    pooled = [sum(row[j] for row in x_rows) / n for j in range(c)]
    hidden = [sum(pooled[i] * w1[i][t] for i in range(c)) for t in range(k)]
    act = [max(h, 0.0) for h in hidden]
    pre = [sum(act[t] * w2[t][j] for t in range(k)) for j in range(c)]
    scores = [1.0 / (1.0 + math.exp(-v)) for v in pre]
    out = [[row[j] * scores[j] for j in range(c)] for row in x_rows]
    return pooled, scores, out


class TestGlobalAveragePool:
    def test_constant_channel(self):
        x = FeatureMap(Matrix(3, 2, [[7.0, -1.0]] * 3))
        pooled = global_average_pool(x)
        np.testing.assert_array_equal(pooled.data, [[7.0, -1.0]])

    def test_hand_mean(self):
        x = FeatureMap(Matrix(4, 1, [[1.0], [2.0], [3.0], [4.0]]))
        assert global_average_pool(x).data[0, 0] == 2.5

    def test_against_loop_oracle(self):
        x = random_feature_map(32, 8, Rng(21))
        pooled, _, _ = loop_ca_forward(x.values.tolist(), [[0.0]] * 8, [[0.0] * 8])
        np.testing.assert_allclose(global_average_pool(x).data[0], pooled, rtol=0, atol=1e-12)


class TestCAForward:
    def test_zero_input_gives_half_scores_zero_output(self):
        w = init_ca_weights(4, 2, Rng(0))
        x = FeatureMap(Matrix.zeros(5, 4))
        s, out = ca_forward(x, w)
        np.testing.assert_array_equal(s.data, np.full((1, 4), 0.5))
        assert not out.values.data.any()

    def test_zero_weights_halve_the_input(self):
        w = CAWeights(w1=Matrix.zeros(4, 2), w2=Matrix.zeros(2, 4), rho=2)
        x = random_feature_map(6, 4, Rng(1))
        s, out = ca_forward(x, w)
        np.testing.assert_array_equal(s.data, np.full((1, 4), 0.5))
        np.testing.assert_array_equal(out.values.data, x.values.data / 2.0)

    def test_against_loop_oracle(self):
        rng = Rng(22)
        w = init_ca_weights(8, 4, rng)
        x = random_feature_map(12, 8, rng)
        s, out = ca_forward(x, w)
        _, scores, expected = loop_ca_forward(x.values.tolist(), w.w1.tolist(), w.w2.tolist())
        np.testing.assert_allclose(s.data[0], scores, rtol=0, atol=1e-10)
        np.testing.assert_allclose(out.values.data, expected, rtol=0, atol=1e-10)

    def test_scores_strictly_inside_unit_interval(self):
        for seed in range(10):
            rng = Rng(seed)
            w = init_ca_weights(8, 2, rng)
            x = random_feature_map(9, 8, rng)
            s, _ = ca_forward(x, w)
            assert (s.data > 0.0).all() and (s.data < 1.0).all()

    def test_channel_mismatch_rejected(self):
        w = init_ca_weights(4, 2, Rng(0))
        with pytest.raises(ContractViolation):
            ca_forward(random_feature_map(3, 6, Rng(0)), w)

    def test_bad_bottleneck_shapes_rejected(self):
        with pytest.raises(ContractViolation):
            CAWeights(w1=Matrix.zeros(4, 3), w2=Matrix.zeros(3, 4), rho=2)
        with pytest.raises(ContractViolation):
            init_ca_weights(6, 4, Rng(0))


class TestHomogeneityContrast:
    def test_linear_attention_is_degree_three(self):
        rng = Rng(23)
        p = init_projections(8, 2, rng)
        x = random_feature_map(16, 8, rng)
        base = linear_sa_forward_linear(x, p).output.data
        for alpha in (0.5, 2.0, 3.0):
            xa = FeatureMap(Matrix(16, 8, alpha * x.values.data))
            out = linear_sa_forward_linear(xa, p).output.data
            expected = alpha**3 * base
            denom = max(np.abs(out).max(), np.abs(expected).max(), 1e-300)
            assert np.abs(out - expected).max() / denom <= 1e-9

    def test_channel_attention_is_not_homogeneous(self):
        rng = Rng(24)
        w = init_ca_weights(8, 2, rng)
        x = random_feature_map(16, 8, rng)
        _, base = ca_forward(x, w)
        x2 = FeatureMap(Matrix(16, 8, 2.0 * x.values.data))
        _, scaled = ca_forward(x2, w)
        expected = 2.0 * base.values.data
        denom = max(np.abs(scaled.values.data).max(), np.abs(expected).max())
        assert np.abs(scaled.values.data - expected).max() / denom > 1e-3


class TestCompareChannelMechanisms:
    @pytest.fixture
    def setup(self):
        rng = Rng(25)
        c = 4
        base = rng.uniform(1, c).data[0]
        scales = rng.uniform(1, c, 0.5, 2.0).data[0]
        p = rank_one_projections(c, base, scales, rng)
        w = init_ca_weights(c, 2, rng)
        x = random_feature_map(20, c, rng)
        return x, p, w

    def test_alpha_one_is_identity(self, setup):
        x, p, w = setup
        comp = compare_channel_mechanisms(x, p, w, alphas=(1.0,))
        res = comp.alpha_results[0]
        assert res.ca_score_shift == 0.0
        assert res.sa_weight_scaling_error == 0.0
        assert res.sa_output_scaling_error == 0.0

    def test_ca_scores_move_under_scaling(self, setup):
        x, p, w = setup
        comp = compare_channel_mechanisms(x, p, w, alphas=(2.0,))
        assert comp.alpha_results[0].ca_score_shift > 1e-6

    def test_sa_weights_scale_quadratically_output_cubically(self, setup):
        x, p, w = setup
        comp = compare_channel_mechanisms(x, p, w, alphas=(2.0, 3.0))
        for res in comp.alpha_results:
            assert res.sa_weight_scaling_error <= 1e-9
            assert res.sa_output_scaling_error <= 1e-9

    def test_reports_both_weight_vectors(self, setup):
        x, p, w = setup
        comp = compare_channel_mechanisms(x, p, w)
        assert len(comp.sa_weights) == 4
        assert len(comp.ca_scores) == 4
        assert all(0.0 < s < 1.0 for s in comp.ca_scores)
