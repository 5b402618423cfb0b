"""Self-attention forward passes in three evaluation strategies, plus oracles.

All strategies share the embeddings z = x w_z, y = x w_y, phi = x w_phi and
differ in how the weighted combination is evaluated:

- ``vanilla``:   out = row_softmax(z y^T) phi. The pairwise map is N x N.
- ``quadratic``: out = (z y^T) phi / N. Same N x N pairwise map, softmax
  replaced by a 1/N normalization; exists as the equivalence and
  performance baseline for the reassociated order.
- ``linear``:    out = z ((y^T phi) / N). The same product as ``quadratic``
  reassociated so the map is a compact (C/r) x C matrix; no N x N object
  is ever allocated.

``quadratic`` and ``linear`` compute one algebraic product two ways, so
their outputs agree to rounding error while the map allocation differs by
Theta(N^2) versus Theta(1). ``vanilla`` is semantically different (softmax
is nonlinear); no numeric equivalence with it is claimed. One observable
consequence: shifting every pairwise logit by a constant leaves the vanilla
output unchanged and does change the quadratic/linear output.

The ``elementwise_oracle_*`` functions recompute the forwards with plain
Python scalar loops (no vectorized calls) and are the ground truth the fast
paths are tested against. They are capped at 64 positions on purpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matrixlib import (
    ContractViolation,
    Matrix,
    matmul,
    matmul_nt,
    matmul_tn,
    row_softmax_of_product,
)
from .projections import FeatureMap, ProjectionSet, embed

__all__ = [
    "VANILLA",
    "QUADRATIC",
    "LINEAR",
    "VARIANTS",
    "ORACLE_MAX_POSITIONS",
    "AttentionArtifacts",
    "ChannelWeightReport",
    "vanilla_sa_forward",
    "linear_sa_forward_quadratic",
    "linear_sa_forward_linear",
    "elementwise_oracle_quadratic",
    "elementwise_oracle_linear",
    "channel_weight_report",
    "channel_weights_closed_form",
    "residual_combine",
]

VANILLA = "vanilla"
QUADRATIC = "quadratic"
LINEAR = "linear"
VARIANTS = (VANILLA, QUADRATIC, LINEAR)

ORACLE_MAX_POSITIONS = 64


@dataclass(frozen=True)
class AttentionArtifacts:
    """Result of one forward pass: the variant tag, its map, and the output.

    ``map`` is the N x N pairwise matrix for ``vanilla`` and ``quadratic``
    and the (C/r) x C compact matrix for ``linear``. ``output`` is always
    N x C.
    """

    variant: str
    map: Matrix
    output: Matrix


def vanilla_sa_forward(
    x: FeatureMap, p: ProjectionSet, logit_shift: float = 0.0
) -> AttentionArtifacts:
    """Softmax attention: out = row_softmax(z y^T) phi.

    The pairwise logits are normalized in their own buffer, so the N x N map
    is a single allocation. ``logit_shift`` adds a constant to every logit
    before the softmax; because softmax is shift-invariant the output is
    unaffected (a diagnostic hook, see module docstring).
    """
    z, y, phi = embed(x, p)
    a = row_softmax_of_product(z, y, shift=logit_shift)
    out = matmul(a, phi)
    return AttentionArtifacts(variant=VANILLA, map=a, output=out)


def linear_sa_forward_quadratic(
    x: FeatureMap, p: ProjectionSet, logit_shift: float = 0.0
) -> AttentionArtifacts:
    """Dot-product attention evaluated pairwise-first: out = (z y^T) phi / N.

    Deliberately allocates the N x N map; this is the baseline the
    reassociated order is compared against, in both value and cost.
    """
    z, y, phi = embed(x, p)
    s = matmul_nt(z, y)
    if logit_shift:
        np.add(s.data, logit_shift, out=s.data)  # construction-phase tweak, same buffer
    out = matmul(s, phi, scale_by=1.0 / x.n_positions)
    return AttentionArtifacts(variant=QUADRATIC, map=s, output=out)


def linear_sa_forward_linear(x: FeatureMap, p: ProjectionSet) -> AttentionArtifacts:
    """Dot-product attention evaluated channels-first: out = z ((y^T phi) / N).

    The compact map b = y^T phi / N has shape (C/r) x C regardless of N, so
    peak allocation stays linear in N: z + y + phi + out are the only
    N-proportional matrices.
    """
    z, y, phi = embed(x, p)
    b = matmul_tn(y, phi, scale_by=1.0 / x.n_positions)
    out = matmul(z, b)
    return AttentionArtifacts(variant=LINEAR, map=b, output=out)


def residual_combine(x: FeatureMap, out: Matrix, gamma: float = 1.0) -> FeatureMap:
    """Residual wrapper x + gamma * out, as a single new feature map."""
    if out.shape != x.values.shape:
        raise ContractViolation(
            f"residual_combine: output {out.rows}x{out.cols} does not match "
            f"feature map {x.n_positions}x{x.n_channels}"
        )
    return FeatureMap(Matrix(x.n_positions, x.n_channels, x.values.data + gamma * out.data))


# ---------------------------------------------------------------------------
# Scalar-loop oracles
# ---------------------------------------------------------------------------


def _check_oracle_size(n: int) -> None:
    if n > ORACLE_MAX_POSITIONS:
        raise ContractViolation(
            f"oracle refuses N={n}: scalar loops are capped at "
            f"{ORACLE_MAX_POSITIONS} positions"
        )


def _scalar_matmul(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for k in range(inner):
            aik = a[i][k]
            for j in range(cols):
                out[i][j] += aik * b[k][j]
    return out


def _scalar_embed(
    x: FeatureMap, p: ProjectionSet
) -> tuple[list[list[float]], list[list[float]], list[list[float]]]:
    xs = x.values.tolist()
    return (
        _scalar_matmul(xs, p.w_z.tolist()),
        _scalar_matmul(xs, p.w_y.tolist()),
        _scalar_matmul(xs, p.w_phi.tolist()),
    )


def elementwise_oracle_quadratic(
    x: FeatureMap, p: ProjectionSet, weighting: str = "softmax"
) -> Matrix:
    """Pairwise-map ground truth: out[i][j] = sum_k map[i][k] * phi[k][j].

    ``weighting`` selects the pairwise map: ``"softmax"`` reproduces the
    vanilla forward, ``"scaled_dot"`` uses z y^T / N and reproduces both
    linear forwards. Pure scalar loops throughout; refuses N > 64.
    """
    _check_oracle_size(x.n_positions)
    if weighting not in ("softmax", "scaled_dot"):
        raise ContractViolation(f"unknown weighting {weighting!r}")
    n = x.n_positions
    z, y, phi = _scalar_embed(x, p)
    k_dim = len(z[0])

    logits = [[sum(z[i][d] * y[j][d] for d in range(k_dim)) for j in range(n)] for i in range(n)]
    if weighting == "softmax":
        weights = []
        for row in logits:
            m = max(row)
            exps = [math.exp(v - m) for v in row]
            total = sum(exps)
            weights.append([e / total for e in exps])
    else:
        weights = [[v / n for v in row] for row in logits]

    return Matrix.from_rows(_scalar_matmul(weights, phi))


def elementwise_oracle_linear(x: FeatureMap, p: ProjectionSet) -> Matrix:
    """Channel-map ground truth: out[i][j] = sum_k t[k][j] * z[i][k].

    t[k][j] = (sum_i y[i][k] * phi[i][j]) / N is the compact channel-pair
    map; the combination runs over channels instead of positions. Pure
    scalar loops; refuses N > 64.
    """
    _check_oracle_size(x.n_positions)
    n = x.n_positions
    z, y, phi = _scalar_embed(x, p)
    k_dim = len(z[0])
    c = len(phi[0])

    t = [
        [sum(y[i][k] * phi[i][j] for i in range(n)) / n for j in range(c)]
        for k in range(k_dim)
    ]
    out = [[sum(t[k][j] * z[i][k] for k in range(k_dim)) for j in range(c)] for i in range(n)]
    return Matrix.from_rows(out)


# ---------------------------------------------------------------------------
# Channel-weight interpretation of the linear variant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelWeightReport:
    """Per-channel scaling extracted from a linear-variant forward.

    When every z-channel is a scalar multiple of one shared signal, each
    output channel of the linear variant collapses to out'_i = c_i * z'_i.
    ``weights`` holds the fitted c_i (None where z'_i is identically zero
    and the weight is undefined), ``t`` the compact channel-pair map, and
    ``residual`` the worst relative deviation of out'_i from c_i * z'_i
    over the defined channels.
    """

    weights: tuple[float | None, ...]
    t: Matrix
    residual: float


def _require_rank_one_z(p: ProjectionSet) -> None:
    w = p.w_z.data
    # Columns must be scalar multiples of one shared direction.
    ref_idx = int(np.argmax(np.abs(w).sum(axis=0) > 0.0))
    ref = w[:, ref_idx]
    if not np.any(ref != 0.0):
        raise ContractViolation("w_z is identically zero; no shared direction exists")
    norm_ref = float(np.abs(ref).max())
    pivot = int(np.argmax(np.abs(ref)))
    for j in range(w.shape[1]):
        col = w[:, j]
        alpha = col[pivot] / ref[pivot]
        if float(np.abs(col - alpha * ref).max()) > 1e-12 * max(norm_ref, 1.0):
            raise ContractViolation(
                "channel_weight_report requires rank-one z-projections "
                "(build them with rank_one_projections)"
            )


def channel_weight_report(x: FeatureMap, p: ProjectionSet) -> ChannelWeightReport:
    """Fit out'_i = c_i * z'_i per channel and report the worst residual.

    Requires projections built by ``rank_one_projections`` with one scale
    per channel (reduction 1), so z and the output have the same channel
    count. The fit is least squares per channel, which tolerates zeros in
    individual entries; channels whose z'_i is identically zero get weight
    None.
    """
    if p.reduction != 1:
        raise ContractViolation(
            "channel_weight_report needs one z-channel per output channel "
            f"(reduction 1), got reduction {p.reduction}"
        )
    _require_rank_one_z(p)

    z, y, phi = embed(x, p)
    t = matmul_tn(y, phi, scale_by=1.0 / x.n_positions)
    out = matmul(z, t)

    weights: list[float | None] = []
    worst = 0.0
    out_scale = max(float(np.abs(out.data).max()), 1e-300)
    for i in range(out.cols):
        zi = z.data[:, i]
        oi = out.data[:, i]
        denom = float(zi @ zi)
        if denom == 0.0:
            weights.append(None)
            continue
        ci = float(zi @ oi) / denom
        weights.append(ci)
        deviation = float(np.abs(oi - ci * zi).max())
        worst = max(worst, deviation / out_scale)
    return ChannelWeightReport(weights=tuple(weights), t=t, residual=worst)


def channel_weights_closed_form(
    channel_scales, t: Matrix
) -> tuple[float | None, ...]:
    """Closed-form per-channel weights c_i = sum_k (s_k / s_i) * t[k][i].

    Derived by substituting z'_k = (s_k / s_i) * z'_i into the channel-wise
    combination; the independent cross-check for the least-squares fit in
    ``channel_weight_report``. Channels with s_i == 0 are undefined (None).
    """
    scales = np.asarray(channel_scales, dtype=np.float64)
    if scales.ndim != 1 or scales.size != t.rows or t.rows != t.cols:
        raise ContractViolation(
            f"need one scale per channel and a square t; got {scales.size} scales "
            f"and t of {t.rows}x{t.cols}"
        )
    weights: list[float | None] = []
    for i in range(scales.size):
        if scales[i] == 0.0:
            weights.append(None)
            continue
        weights.append(float(np.sum((scales / scales[i]) * t.data[:, i])))
    return tuple(weights)
