"""Per-position channel projections of a feature map.

A feature map is an (N, C) matrix: N flattened spatial positions as rows and
C channels as columns. In that layout a 1x1 convolution is exactly
right-multiplication by a (C, C') weight matrix, so the three embeddings
used by the attention variants are plain matrix products. No bias terms:
the channel-weight interpretation relies on the embeddings being linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matrixlib import ContractViolation, Matrix, Rng, matmul

__all__ = [
    "FeatureMap",
    "ProjectionSet",
    "embed",
    "init_projections",
    "rank_one_projections",
    "random_feature_map",
]


@dataclass(frozen=True)
class FeatureMap:
    """An (N, C) activation matrix: positions as rows, channels as columns."""

    values: Matrix

    @property
    def n_positions(self) -> int:
        return self.values.rows

    @property
    def n_channels(self) -> int:
        return self.values.cols


@dataclass(frozen=True)
class ProjectionSet:
    """The three projection weights plus the channel-reduction factor.

    ``w_z`` and ``w_y`` map C channels down to C/reduction; ``w_phi`` is a
    square C x C transform.
    """

    w_z: Matrix
    w_y: Matrix
    w_phi: Matrix
    reduction: int

    def __post_init__(self) -> None:
        c = self.w_phi.rows
        if self.w_phi.cols != c:
            raise ContractViolation(f"w_phi must be square, got {self.w_phi.rows}x{self.w_phi.cols}")
        if self.w_z.shape != self.w_y.shape:
            raise ContractViolation("w_z and w_y must have identical shapes")
        if c % self.reduction != 0:
            raise ContractViolation(f"channels {c} not divisible by reduction {self.reduction}")
        if self.w_z.shape != (c, c // self.reduction):
            raise ContractViolation(
                f"w_z must be {c}x{c // self.reduction} for C={c}, r={self.reduction}; "
                f"got {self.w_z.rows}x{self.w_z.cols}"
            )

    @property
    def n_channels(self) -> int:
        return self.w_phi.rows


def embed(x: FeatureMap, p: ProjectionSet) -> tuple[Matrix, Matrix, Matrix]:
    """Apply the three projections: (x w_z, x w_y, x w_phi)."""
    if x.n_channels != p.n_channels:
        raise ContractViolation(
            f"feature map has {x.n_channels} channels but projections expect {p.n_channels}"
        )
    z = matmul(x.values, p.w_z)
    y = matmul(x.values, p.w_y)
    phi = matmul(x.values, p.w_phi)
    return z, y, phi


def init_projections(c: int, r: int, rng: Rng) -> ProjectionSet:
    """Seeded projection weights, entries i.i.d. uniform in [-1/sqrt(C), 1/sqrt(C)].

    The bound keeps embedding magnitudes O(1) regardless of C; no training
    happens in this library, so any bounded scheme works and this one is
    fixed for reproducibility.
    """
    if c < 1 or r < 1 or c % r != 0:
        raise ContractViolation(f"channels {c} must be a positive multiple of reduction {r}")
    bound = 1.0 / np.sqrt(c)
    w_z = rng.uniform(c, c // r, -bound, bound)
    w_y = rng.uniform(c, c // r, -bound, bound)
    w_phi = rng.uniform(c, c, -bound, bound)
    return ProjectionSet(w_z=w_z, w_y=w_y, w_phi=w_phi, reduction=r)


def rank_one_projections(
    c: int,
    base_direction: Sequence[float],
    channel_scales: Sequence[float],
    rng: Rng,
) -> ProjectionSet:
    """Projections whose z-channels are scalar multiples of one shared signal.

    Column j of ``w_z`` is channel_scales[j] * base_direction, so channel j
    of z = x w_z equals channel_scales[j] * (x . base_direction) for every
    input. That is the precondition under which the per-channel weight
    interpretation of the linear variant holds exactly. ``w_y`` and
    ``w_phi`` stay generic random transforms.

    ``channel_scales`` has one entry per z output channel and must divide C;
    the implied reduction is C / len(channel_scales).
    """
    base = np.asarray(base_direction, dtype=np.float64)
    scales = np.asarray(channel_scales, dtype=np.float64)
    if base.shape != (c,):
        raise ContractViolation(f"base_direction must have length {c}, got shape {base.shape}")
    if not np.any(base != 0.0):
        raise ContractViolation("base_direction must be nonzero")
    if scales.ndim != 1 or scales.size < 1:
        raise ContractViolation("channel_scales must be a nonempty vector")
    if c % scales.size != 0:
        raise ContractViolation(
            f"channel count {c} not divisible by number of scales {scales.size}"
        )
    r = c // scales.size
    bound = 1.0 / np.sqrt(c)
    w_z = Matrix(c, scales.size, np.outer(base, scales))
    w_y = rng.uniform(c, scales.size, -bound, bound)
    w_phi = rng.uniform(c, c, -bound, bound)
    return ProjectionSet(w_z=w_z, w_y=w_y, w_phi=w_phi, reduction=r)


def random_feature_map(n_positions: int, n_channels: int, rng: Rng) -> FeatureMap:
    """Seeded feature map with entries uniform in [-1, 1)."""
    return FeatureMap(rng.uniform(n_positions, n_channels, -1.0, 1.0))
