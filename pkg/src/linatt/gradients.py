"""Hand-derived backward passes, validated against central finite differences.

The scalar loss used throughout is loss = <output, upstream> (Frobenius
inner product against a fixed upstream matrix), which exercises every
output coordinate with a single scalar. Each backward returns the exact
gradients of that loss with respect to the input feature map and all
projection weights.

The linear variant's backward is all matrix products in the reassociated
order and never allocates an N x N intermediate; the vanilla backward pays
for three N x N matrices (the softmax map, its upstream, and the logit
gradient). The same chain rule through the pairwise-first order is kept as
``backward_linear_quadratic_order`` so the two computation graphs can
cross-check each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .matrixlib import (
    ContractViolation,
    Matrix,
    add,
    frobenius_dot,
    matmul,
    matmul_nt,
    matmul_tn,
    row_softmax_of_product,
)
from .projections import FeatureMap, ProjectionSet, embed
from .channel_attention import CAWeights, global_average_pool, _sigmoid

__all__ = [
    "GradientBundle",
    "CAGradientBundle",
    "backward_vanilla",
    "backward_linear",
    "backward_linear_quadratic_order",
    "backward_ca",
    "finite_difference_oracle",
]


@dataclass(frozen=True)
class GradientBundle:
    """Gradients of <output, upstream> for one attention forward."""

    d_x: Matrix
    d_wz: Matrix
    d_wy: Matrix
    d_wphi: Matrix
    loss: float


@dataclass(frozen=True)
class CAGradientBundle:
    """Gradients of <output, upstream> for the channel-attention forward."""

    d_x: Matrix
    d_w1: Matrix
    d_w2: Matrix
    loss: float


def _check_upstream(x: FeatureMap, upstream: Matrix) -> None:
    if upstream.shape != (x.n_positions, x.n_channels):
        raise ContractViolation(
            f"upstream must match the output shape {x.n_positions}x{x.n_channels}, "
            f"got {upstream.rows}x{upstream.cols}"
        )


def _input_gradient(dz: Matrix, dy: Matrix, dphi: Matrix, p: ProjectionSet) -> Matrix:
    # d_x = dz w_z^T + dy w_y^T + dphi w_phi^T, accumulated with library ops.
    t1 = matmul_nt(dz, p.w_z)
    t2 = matmul_nt(dy, p.w_y)
    t3 = matmul_nt(dphi, p.w_phi)
    return add(add(t1, t2), t3)


def _row_softmax_grad(a: Matrix, da: Matrix) -> Matrix:
    """Backprop through a row softmax: ds = a * (da - rowdot(da, a)).

    The per-row Jacobian diag(a_i) - a_i a_i^T is applied in closed form;
    only the N x N result is allocated (row dots are O(N) workspace).
    """
    inner = np.einsum("ij,ij->i", da.data, a.data)[:, None]
    return Matrix(a.rows, a.cols, a.data * (da.data - inner))


def backward_vanilla(x: FeatureMap, p: ProjectionSet, upstream: Matrix) -> GradientBundle:
    """Gradients through out = row_softmax(z y^T) phi."""
    _check_upstream(x, upstream)
    z, y, phi = embed(x, p)
    a = row_softmax_of_product(z, y)
    out = matmul(a, phi)
    loss = frobenius_dot(out, upstream)

    da = matmul_nt(upstream, phi)
    dphi = matmul_tn(a, upstream)
    ds = _row_softmax_grad(a, da)
    dz = matmul(ds, y)
    dy = matmul_tn(ds, z)

    return GradientBundle(
        d_x=_input_gradient(dz, dy, dphi, p),
        d_wz=matmul_tn(x.values, dz),
        d_wy=matmul_tn(x.values, dy),
        d_wphi=matmul_tn(x.values, dphi),
        loss=loss,
    )


def backward_linear(x: FeatureMap, p: ProjectionSet, upstream: Matrix) -> GradientBundle:
    """Gradients through out = z (y^T phi / N), channels-first order.

    Every intermediate is N x (C/r), N x C, or (C/r) x C; no N x N matrix
    is allocated in either the forward or the backward half.
    """
    _check_upstream(x, upstream)
    n = x.n_positions
    z, y, phi = embed(x, p)
    b = matmul_tn(y, phi, scale_by=1.0 / n)
    out = matmul(z, b)
    loss = frobenius_dot(out, upstream)

    dz = matmul_nt(upstream, b)
    db = matmul_tn(z, upstream)
    dy = matmul_nt(phi, db, scale_by=1.0 / n)
    dphi = matmul(y, db, scale_by=1.0 / n)

    return GradientBundle(
        d_x=_input_gradient(dz, dy, dphi, p),
        d_wz=matmul_tn(x.values, dz),
        d_wy=matmul_tn(x.values, dy),
        d_wphi=matmul_tn(x.values, dphi),
        loss=loss,
    )


def backward_linear_quadratic_order(
    x: FeatureMap, p: ProjectionSet, upstream: Matrix
) -> GradientBundle:
    """Gradients through out = (z y^T) phi / N, pairwise-first order.

    Mathematically identical to ``backward_linear``; kept as the
    independent computation graph (and as the costly baseline: it allocates
    two N x N matrices).
    """
    _check_upstream(x, upstream)
    n = x.n_positions
    z, y, phi = embed(x, p)
    s = matmul_nt(z, y)
    out = matmul(s, phi, scale_by=1.0 / n)
    loss = frobenius_dot(out, upstream)

    ds = matmul_nt(upstream, phi, scale_by=1.0 / n)
    dphi = matmul_tn(s, upstream, scale_by=1.0 / n)
    dz = matmul(ds, y)
    dy = matmul_tn(ds, z)

    return GradientBundle(
        d_x=_input_gradient(dz, dy, dphi, p),
        d_wz=matmul_tn(x.values, dz),
        d_wy=matmul_tn(x.values, dy),
        d_wphi=matmul_tn(x.values, dphi),
        loss=loss,
    )


def backward_ca(x: FeatureMap, w: CAWeights, upstream: Matrix) -> CAGradientBundle:
    """Gradients through the squeeze bottleneck and the channel rescale.

    relu' is taken as 0 at exactly 0 (the usual subgradient choice).
    """
    _check_upstream(x, upstream)
    n = x.n_positions
    m = global_average_pool(x)
    h = m.data @ w.w1.data
    act = np.maximum(h, 0.0)
    s_pre = act @ w.w2.data
    s = _sigmoid(s_pre)
    out = x.values.data * s
    loss = float(np.vdot(out, upstream.data))

    ds = np.einsum("ij,ij->j", upstream.data, x.values.data)[None, :]
    ds_pre = ds * s * (1.0 - s)
    d_w2 = act.T @ ds_pre
    d_act = ds_pre @ w.w2.data.T
    dh = d_act * (h > 0.0)
    d_w1 = m.data.T @ dh
    dm = dh @ w.w1.data.T
    d_x = upstream.data * s + np.broadcast_to(dm / n, (n, x.n_channels))

    return CAGradientBundle(
        d_x=Matrix(n, x.n_channels, d_x),
        d_w1=Matrix(w.w1.rows, w.w1.cols, d_w1),
        d_w2=Matrix(w.w2.rows, w.w2.cols, d_w2),
        loss=loss,
    )


def finite_difference_oracle(
    f: Callable[[Matrix], float], theta: Matrix, h: float = 1e-5
) -> Matrix:
    """Central-difference gradient of a scalar function of a matrix.

    Evaluates (f(theta + h e_k) - f(theta - h e_k)) / 2h for every
    coordinate. ``f`` must be deterministic and finite at all probe points;
    h is restricted to [1e-7, 1e-3] where the truncation/rounding tradeoff
    of float64 central differences is sane.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ContractViolation(f"step h={h} outside [1e-7, 1e-3]")
    grad = np.zeros((theta.rows, theta.cols))
    base = theta.data
    for i in range(theta.rows):
        for j in range(theta.cols):
            bumped = base.copy()
            bumped[i, j] = base[i, j] + h
            f_plus = f(Matrix(theta.rows, theta.cols, bumped))
            bumped[i, j] = base[i, j] - h
            f_minus = f(Matrix(theta.rows, theta.cols, bumped))
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ContractViolation(
                    f"non-finite objective at perturbed coordinate ({i}, {j})"
                )
            grad[i, j] = (f_plus - f_minus) / (2.0 * h)
    return Matrix(theta.rows, theta.cols, grad)
