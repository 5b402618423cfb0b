"""Projection tests: embedding identities, seeded initialization, and the
rank-one construction that forces proportional z-channels."""

import numpy as np
import pytest

from linatt.matrixlib import ContractViolation, Matrix, Rng
from linatt.projections import (
    FeatureMap,
    ProjectionSet,
    embed,
    init_projections,
    random_feature_map,
    rank_one_projections,
)


def loop_matmul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            s = 0.0
            for k in range(inner):
                s += a[i][k] * b[k][j]
            out[i][j] = s
    return out


class TestEmbed:
    def test_zero_input_gives_zero_embeddings(self):
        p = init_projections(4, 2, Rng(0))
        x = FeatureMap(Matrix.zeros(5, 4))
        for e in embed(x, p):
            assert not e.data.any()

    def test_identity_projection_reproduces_input(self):
        c = 3
        eye = Matrix.identity(c)
        p = ProjectionSet(w_z=eye, w_y=eye, w_phi=Matrix.identity(c), reduction=1)
        x = random_feature_map(4, c, Rng(1))
        z, y, phi = embed(x, p)
        np.testing.assert_array_equal(z.data, x.values.data)
        np.testing.assert_array_equal(y.data, x.values.data)
        np.testing.assert_array_equal(phi.data, x.values.data)

    def test_against_triple_loop_oracle(self):
        rng = Rng(42)
        p = init_projections(2, 1, rng)
        x = random_feature_map(4, 2, rng)
        z, y, phi = embed(x, p)
        xs = x.values.tolist()
        np.testing.assert_allclose(z.data, loop_matmul(xs, p.w_z.tolist()), rtol=0, atol=1e-14)
        np.testing.assert_allclose(y.data, loop_matmul(xs, p.w_y.tolist()), rtol=0, atol=1e-14)
        np.testing.assert_allclose(phi.data, loop_matmul(xs, p.w_phi.tolist()), rtol=0, atol=1e-14)

    def test_channel_mismatch_rejected(self):
        p = init_projections(4, 2, Rng(0))
        x = random_feature_map(3, 6, Rng(0))
        with pytest.raises(ContractViolation):
            embed(x, p)

    def test_linearity_in_input(self):
        rng = Rng(17)
        p = init_projections(8, 4, rng)
        x = random_feature_map(6, 8, rng)
        for alpha in (0.5, 2.0, -3.0):
            xa = FeatureMap(Matrix(6, 8, alpha * x.values.data))
            for scaled, base in zip(embed(xa, p), embed(x, p)):
                denom = max(np.abs(scaled.data).max(), np.abs(alpha * base.data).max(), 1e-300)
                assert np.abs(scaled.data - alpha * base.data).max() / denom <= 1e-12


class TestInitProjections:
    def test_deterministic_given_seed(self):
        a = init_projections(8, 2, Rng(5))
        b = init_projections(8, 2, Rng(5))
        np.testing.assert_array_equal(a.w_z.data, b.w_z.data)
        np.testing.assert_array_equal(a.w_y.data, b.w_y.data)
        np.testing.assert_array_equal(a.w_phi.data, b.w_phi.data)

    def test_full_reduction_shape(self):
        p = init_projections(8, 8, Rng(0))
        assert p.w_z.shape == (8, 1)

    def test_default_reduction_shapes(self):
        p = init_projections(64, 8, Rng(0))
        assert p.w_z.shape == (64, 8)
        assert p.w_y.shape == (64, 8)
        assert p.w_phi.shape == (64, 64)

    def test_entries_within_scaled_bound(self):
        c = 16
        p = init_projections(c, 4, Rng(3))
        bound = 1.0 / np.sqrt(c)
        for w in (p.w_z, p.w_y, p.w_phi):
            assert np.abs(w.data).max() <= bound

    def test_indivisible_reduction_rejected(self):
        with pytest.raises(ContractViolation):
            init_projections(10, 4, Rng(0))


class TestRankOneProjections:
    def test_equal_scales_make_identical_channels(self):
        rng = Rng(2)
        base = rng.uniform(1, 4).data[0]
        p = rank_one_projections(4, base, [2.0, 2.0, 2.0, 2.0], rng)
        x = random_feature_map(5, 4, rng)
        z, _, _ = embed(x, p)
        for j in range(1, 4):
            np.testing.assert_array_equal(z.data[:, j], z.data[:, 0])

    def test_scale_two_doubles_channel(self):
        rng = Rng(3)
        base = rng.uniform(1, 2).data[0]
        p = rank_one_projections(2, base, [1.0, 2.0], rng)
        x = random_feature_map(6, 2, rng)
        z, _, _ = embed(x, p)
        np.testing.assert_allclose(z.data[:, 1], 2.0 * z.data[:, 0], rtol=0, atol=1e-15)

    def test_signed_scale_ratio(self):
        """scales (1.5, -0.5): the channel ratio is -1/3 wherever defined."""
        rng = Rng(4)
        base = rng.uniform(1, 3).data[0]
        p = rank_one_projections(3, base, [1.5, -0.5, 1.0], rng)
        x = random_feature_map(7, 3, rng)
        z, _, _ = embed(x, p)
        nonzero = z.data[:, 0] != 0.0
        assert nonzero.any()
        ratios = z.data[nonzero, 1] / z.data[nonzero, 0]
        np.testing.assert_allclose(ratios, -1.0 / 3.0, rtol=1e-12, atol=0)

    def test_proportionality_over_all_pairs(self):
        rng = Rng(6)
        c = 6
        base = rng.uniform(1, c).data[0]
        scales = rng.uniform(1, c, 0.5, 2.0).data[0]
        p = rank_one_projections(c, base, scales, rng)
        x = random_feature_map(9, c, rng)
        z, _, _ = embed(x, p)
        for i in range(c):
            for j in range(c):
                expected = (scales[i] / scales[j]) * z.data[:, j]
                denom = max(np.abs(z.data[:, i]).max(), np.abs(expected).max(), 1e-300)
                assert np.abs(z.data[:, i] - expected).max() / denom <= 1e-12

    def test_zero_base_rejected(self):
        with pytest.raises(ContractViolation):
            rank_one_projections(3, [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], Rng(0))

    def test_scale_count_must_divide_channels(self):
        with pytest.raises(ContractViolation):
            rank_one_projections(4, [1.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0], Rng(0))

    def test_implied_reduction(self):
        p = rank_one_projections(8, [1.0] * 8, [1.0, 2.0], Rng(0))
        assert p.reduction == 4
        assert p.w_z.shape == (8, 2)


class TestFeatureMap:
    def test_dimensions_exposed(self):
        x = random_feature_map(5, 3, Rng(0))
        assert (x.n_positions, x.n_channels) == (5, 3)

    def test_seeded_and_bounded(self):
        a = random_feature_map(4, 4, Rng(11))
        b = random_feature_map(4, 4, Rng(11))
        np.testing.assert_array_equal(a.values.data, b.values.data)
        assert np.abs(a.values.data).max() < 1.0
