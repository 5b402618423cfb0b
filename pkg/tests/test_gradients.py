"""Backward-pass tests: every analytic gradient against central finite
differences, the dual-graph cross-check, allocation discipline of the
linear backward, and gradient homogeneity."""

import numpy as np
import pytest

from linatt.matrixlib import AllocationLedger, ContractViolation, Matrix, Rng, use_ledger
from linatt.projections import (
    FeatureMap,
    ProjectionSet,
    init_projections,
    random_feature_map,
)
from linatt.channel_attention import CAWeights, init_ca_weights
from linatt.gradients import (
    backward_ca,
    backward_linear,
    backward_linear_quadratic_order,
    backward_vanilla,
    finite_difference_oracle,
)
from linatt.bench import predict_peak_floats


def rel_err(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return (np.abs(analytic - numeric) / denom).max()


def make_instance(seed, n, c, r):
    rng = Rng(seed)
    p = init_projections(c, r, rng)
    x = random_feature_map(n, c, rng)
    upstream = rng.uniform(n, c)
    return x, p, upstream


def check_all_parameters(backward, x, p, upstream, h=1e-5, tol=1e-4):
    """Finite-difference every parameter matrix of one attention backward."""
    bundle = backward(x, p, upstream)
    probes = [
        (bundle.d_x, x.values,
         lambda th: backward(FeatureMap(th), p, upstream).loss),
        (bundle.d_wz, p.w_z,
         lambda th: backward(x, ProjectionSet(th, p.w_y, p.w_phi, p.reduction), upstream).loss),
        (bundle.d_wy, p.w_y,
         lambda th: backward(x, ProjectionSet(p.w_z, th, p.w_phi, p.reduction), upstream).loss),
        (bundle.d_wphi, p.w_phi,
         lambda th: backward(x, ProjectionSet(p.w_z, p.w_y, th, p.reduction), upstream).loss),
    ]
    worst = 0.0
    for analytic, theta, objective in probes:
        numeric = finite_difference_oracle(objective, theta, h)
        worst = max(worst, rel_err(analytic.data, numeric.data))
    assert worst <= tol, f"worst relative error {worst:.3e}"


class TestFiniteDifferenceOracle:
    def test_quadratic_objective(self):
        theta = Rng(1).uniform(3, 2)
        grad = finite_difference_oracle(lambda m: float((m.data**2).sum()), theta)
        np.testing.assert_allclose(grad.data, 2.0 * theta.data, rtol=0, atol=1e-8)

    def test_linear_objective_near_exact(self):
        theta = Rng(2).uniform(2, 2)
        weights = Rng(3).uniform(2, 2)
        grad = finite_difference_oracle(
            lambda m: float((m.data * weights.data).sum()), theta
        )
        np.testing.assert_allclose(grad.data, weights.data, rtol=0, atol=1e-10)

    def test_step_bounds_enforced(self):
        theta = Matrix.zeros(1, 1)
        with pytest.raises(ContractViolation):
            finite_difference_oracle(lambda m: 0.0, theta, h=1e-8)
        with pytest.raises(ContractViolation):
            finite_difference_oracle(lambda m: 0.0, theta, h=1e-2)

    def test_nonfinite_objective_rejected(self):
        theta = Matrix.zeros(1, 1)
        with pytest.raises(ContractViolation):
            finite_difference_oracle(lambda m: float("inf"), theta)


class TestBackwardVanilla:
    def test_zero_upstream_zero_gradients(self):
        x, p, _ = make_instance(0, 5, 4, 2)
        bundle = backward_vanilla(x, p, Matrix.zeros(5, 4))
        assert bundle.loss == 0.0
        for g in (bundle.d_x, bundle.d_wz, bundle.d_wy, bundle.d_wphi):
            assert not g.data.any()

    def test_single_position_degeneracy(self):
        """At N=1 the softmax map is [[1]] with zero Jacobian: only the
        value-transform path carries gradient."""
        x, p, upstream = make_instance(1, 1, 4, 2)
        bundle = backward_vanilla(x, p, upstream)
        assert not bundle.d_wz.data.any()
        assert not bundle.d_wy.data.any()
        expected_dwphi = x.values.data.T @ upstream.data
        np.testing.assert_allclose(bundle.d_wphi.data, expected_dwphi, rtol=0, atol=1e-15)

    def test_matches_finite_differences(self):
        x, p, upstream = make_instance(101, 6, 4, 2)
        check_all_parameters(backward_vanilla, x, p, upstream)


class TestBackwardLinear:
    def test_zero_upstream_zero_bundle(self):
        x, p, _ = make_instance(0, 5, 4, 2)
        bundle = backward_linear(x, p, Matrix.zeros(5, 4))
        assert bundle.loss == 0.0
        for g in (bundle.d_x, bundle.d_wz, bundle.d_wy, bundle.d_wphi):
            assert not g.data.any()

    def test_matches_finite_differences(self):
        x, p, upstream = make_instance(102, 6, 4, 2)
        check_all_parameters(backward_linear, x, p, upstream)

    def test_identity_projection_wphi_gradient(self):
        c = 2
        eye = Matrix.identity(c)
        p = ProjectionSet(w_z=eye, w_y=eye, w_phi=Matrix.identity(c), reduction=1)
        rng = Rng(7)
        x = random_feature_map(4, c, rng)
        upstream = rng.uniform(4, c)
        bundle = backward_linear(x, p, upstream)
        numeric = finite_difference_oracle(
            lambda th: backward_linear(x, ProjectionSet(eye, eye, th, 1), upstream).loss,
            p.w_phi,
        )
        assert rel_err(bundle.d_wphi.data, numeric.data) <= 1e-4

    def test_dual_graph_cross_check(self):
        """Pairwise-first and channels-first graphs produce the same
        gradients to rounding."""
        for seed in range(10):
            x, p, upstream = make_instance(200 + seed, 6, 4, 2)
            a = backward_linear(x, p, upstream)
            b = backward_linear_quadratic_order(x, p, upstream)
            for attr in ("d_x", "d_wz", "d_wy", "d_wphi"):
                diff = np.abs(getattr(a, attr).data - getattr(b, attr).data).max()
                assert diff <= 1e-9, (seed, attr, diff)

    def test_never_allocates_pairwise_matrix(self):
        n, c, r = 256, 4, 2
        x, p, upstream = make_instance(3, n, c, r)
        ledger = AllocationLedger()
        with use_ledger(ledger):
            backward_linear(x, p, upstream)
        assert ledger.peak_floats == predict_peak_floats("linear", n, c, r, "backward")
        assert ledger.peak_floats < n * n

    def test_input_gradient_is_degree_two_in_x(self):
        x, p, upstream = make_instance(104, 6, 4, 2)
        base = backward_linear(x, p, upstream).d_x.data
        x2 = FeatureMap(Matrix(6, 4, 2.0 * x.values.data))
        scaled = backward_linear(x2, p, upstream).d_x.data
        np.testing.assert_allclose(scaled, 4.0 * base, rtol=1e-12, atol=1e-15)


class TestBackwardCA:
    def test_zero_upstream_zero_gradients(self):
        rng = Rng(0)
        w = init_ca_weights(4, 2, rng)
        x = random_feature_map(5, 4, rng)
        bundle = backward_ca(x, w, Matrix.zeros(5, 4))
        assert bundle.loss == 0.0
        for g in (bundle.d_x, bundle.d_w1, bundle.d_w2):
            assert not g.data.any()

    def test_zero_weights_halve_upstream(self):
        """With both bottleneck weights zero the scores are frozen at 1/2
        and the bottleneck path carries nothing; the oracle confirms."""
        w = CAWeights(w1=Matrix.zeros(4, 2), w2=Matrix.zeros(2, 4), rho=2)
        rng = Rng(1)
        x = random_feature_map(5, 4, rng)
        upstream = rng.uniform(5, 4)
        bundle = backward_ca(x, w, upstream)
        np.testing.assert_allclose(bundle.d_x.data, 0.5 * upstream.data, rtol=0, atol=1e-15)
        numeric = finite_difference_oracle(
            lambda th: backward_ca(FeatureMap(th), w, upstream).loss, x.values
        )
        assert rel_err(bundle.d_x.data, numeric.data) <= 1e-4

    def test_matches_finite_differences_all_parameters(self):
        rng = Rng(105)
        w = init_ca_weights(4, 2, rng)
        x = random_feature_map(6, 4, rng)
        upstream = rng.uniform(6, 4)
        bundle = backward_ca(x, w, upstream)
        probes = [
            (bundle.d_x, x.values, lambda th: backward_ca(FeatureMap(th), w, upstream).loss),
            (bundle.d_w1, w.w1, lambda th: backward_ca(x, CAWeights(th, w.w2, w.rho), upstream).loss),
            (bundle.d_w2, w.w2, lambda th: backward_ca(x, CAWeights(w.w1, th, w.rho), upstream).loss),
        ]
        for analytic, theta, objective in probes:
            numeric = finite_difference_oracle(objective, theta)
            assert rel_err(analytic.data, numeric.data) <= 1e-4


class TestUpstreamValidation:
    def test_wrong_upstream_shape_rejected(self):
        x, p, _ = make_instance(0, 5, 4, 2)
        bad = Matrix.zeros(4, 5)
        for backward in (backward_vanilla, backward_linear, backward_linear_quadratic_order):
            with pytest.raises(ContractViolation):
                backward(x, p, bad)
