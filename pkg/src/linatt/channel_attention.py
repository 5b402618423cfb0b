"""Squeeze-style channel attention, for contrast with the linear variant.

Pools each channel to a single mean, pushes the pooled vector through a
small relu/sigmoid bottleneck, and rescales every channel by its score:

    m = column means of x            (1 x C)
    s = sigmoid(relu(m w1) w2)       (1 x C), entries in (0, 1)
    out[:, k] = s[k] * x[:, k]

Unlike the linear attention variant, which is degree-3 homogeneous in x,
this map has no fixed scaling degree: the sigmoid makes the channel scores
input-level dependent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrixlib import ContractViolation, Matrix, Rng, matmul
from .projections import FeatureMap, ProjectionSet
from . import attention

__all__ = [
    "CAWeights",
    "init_ca_weights",
    "global_average_pool",
    "ca_forward",
    "MechanismComparison",
    "AlphaScalingResult",
    "compare_channel_mechanisms",
]


@dataclass(frozen=True)
class CAWeights:
    """Bottleneck weights: w1 squeezes C to C/rho, w2 expands back to C."""

    w1: Matrix
    w2: Matrix
    rho: int

    def __post_init__(self) -> None:
        c = self.w1.rows
        if c % self.rho != 0:
            raise ContractViolation(f"channels {c} not divisible by bottleneck rho {self.rho}")
        k = c // self.rho
        if self.w1.cols != k or self.w2.shape != (k, c):
            raise ContractViolation(
                f"expected w1 {c}x{k} and w2 {k}x{c}, got "
                f"{self.w1.rows}x{self.w1.cols} and {self.w2.rows}x{self.w2.cols}"
            )

    @property
    def n_channels(self) -> int:
        return self.w1.rows


def init_ca_weights(c: int, rho: int, rng: Rng) -> CAWeights:
    """Seeded bottleneck weights, uniform in [-1/sqrt(C), 1/sqrt(C)]."""
    if c < 1 or rho < 1 or c % rho != 0:
        raise ContractViolation(f"channels {c} must be a positive multiple of rho {rho}")
    bound = 1.0 / np.sqrt(c)
    return CAWeights(
        w1=rng.uniform(c, c // rho, -bound, bound),
        w2=rng.uniform(c // rho, c, -bound, bound),
        rho=rho,
    )


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def global_average_pool(x: FeatureMap) -> Matrix:
    """Per-channel mean over positions, as a 1 x C row vector."""
    return Matrix(1, x.n_channels, x.values.data.mean(axis=0, keepdims=True))


def ca_forward(x: FeatureMap, w: CAWeights) -> tuple[Matrix, FeatureMap]:
    """Channel scores and the rescaled map: (s, out) with out[:,k] = s[k] x[:,k]."""
    if x.n_channels != w.n_channels:
        raise ContractViolation(
            f"feature map has {x.n_channels} channels but weights expect {w.n_channels}"
        )
    m = global_average_pool(x)
    h = matmul(m, w.w1)
    a = Matrix(1, h.cols, np.maximum(h.data, 0.0))
    s = Matrix(1, w.n_channels, _sigmoid(matmul(a, w.w2).data))
    out = FeatureMap(Matrix(x.n_positions, x.n_channels, x.values.data * s.data))
    return s, out


@dataclass(frozen=True)
class AlphaScalingResult:
    """How both mechanisms respond to rescaling the input by alpha."""

    alpha: float
    ca_score_shift: float  # max |s(alpha x) - s(x)|; zero only for alpha == 1
    sa_weight_scaling_error: float  # rel. error of c_i(alpha x) vs alpha^2 c_i(x)
    sa_output_scaling_error: float  # rel. error of out(alpha x) vs alpha^3 out(x)


@dataclass(frozen=True)
class MechanismComparison:
    """Side-by-side channel weights plus scaling behavior of both mechanisms."""

    sa_weights: tuple[float | None, ...]
    ca_scores: tuple[float, ...]
    alpha_results: tuple[AlphaScalingResult, ...]


def _rel_max_diff(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.abs(a).max()), float(np.abs(b).max()), 1e-300)
    return float(np.abs(a - b).max()) / scale


def compare_channel_mechanisms(
    x: FeatureMap,
    p_rank1: ProjectionSet,
    w: CAWeights,
    alphas: tuple[float, ...] = (2.0,),
) -> MechanismComparison:
    """Compare per-channel weighting of linear attention and channel attention.

    The linear variant's weights scale as alpha^2 (its output as alpha^3)
    when the input is scaled by alpha; the sigmoid scores of channel
    attention follow no fixed power, which ``ca_score_shift`` witnesses.
    """
    report = attention.channel_weight_report(x, p_rank1)
    scores, _ = ca_forward(x, w)
    base_out = attention.linear_sa_forward_linear(x, p_rank1).output
    base_weights = np.array([c if c is not None else np.nan for c in report.weights])

    results = []
    for alpha in alphas:
        xa = FeatureMap(Matrix(x.n_positions, x.n_channels, alpha * x.values.data))
        scores_a, _ = ca_forward(xa, w)
        report_a = attention.channel_weight_report(xa, p_rank1)
        weights_a = np.array([c if c is not None else np.nan for c in report_a.weights])
        out_a = attention.linear_sa_forward_linear(xa, p_rank1).output

        defined = ~np.isnan(base_weights) & ~np.isnan(weights_a)
        if defined.any():
            weight_err = _rel_max_diff(weights_a[defined], alpha**2 * base_weights[defined])
        else:
            weight_err = 0.0
        results.append(
            AlphaScalingResult(
                alpha=alpha,
                ca_score_shift=float(np.abs(scores_a.data - scores.data).max()),
                sa_weight_scaling_error=weight_err,
                sa_output_scaling_error=_rel_max_diff(out_a.data, alpha**3 * base_out.data),
            )
        )

    return MechanismComparison(
        sa_weights=report.weights,
        ca_scores=tuple(float(v) for v in scores.data[0]),
        alpha_results=tuple(results),
    )
