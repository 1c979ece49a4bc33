"""
Metric Head
Projection R = F·S, squash Q, positive/negative distances and the margin hinge loss
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from backbone import FeatureVec
from dcgpn import DiscriminantMatrix
from errors import ConfigError, DimensionError
from tensor_core import Function, Tensor, add, l2_norm, matmul, mean, relu, sub

logger = logging.getLogger(__name__)

BACKWARD_EPS = 1e-9

Scalar = Union[Tensor, float]


@dataclass
class MarginConfig:
    """Hinge offset m of the triplet loss"""
    m: float = 0.5

    def __post_init__(self):
        if not np.isfinite(self.m) or self.m < 0:
            raise ConfigError(f"margin must be a non-negative finite number, got {self.m}")


class Squash(Function):
    """Q(R) = (|R|² / (1 + |R|²)) · R / |R| row-wise, with Q(0) = 0"""

    def forward(self, x):
        self.x = x
        self.norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
        sq = self.norm * self.norm
        nonzero = self.norm > 0
        safe = np.where(nonzero, self.norm, 1)
        return np.where(nonzero, (sq / (1 + sq)) * (x / safe), 0)

    def backward(self, grad):
        # Q = g(r)·x with g(r) = r / (1 + r²)
        r = self.norm
        sq = r * r
        g = r / (1 + sq)
        dg_over_r = ((1 - sq) / ((1 + sq) ** 2)) / np.maximum(r, BACKWARD_EPS)
        radial = np.sum(self.x * grad, axis=-1, keepdims=True)
        return (g * grad + dg_over_r * radial * self.x,)


def _as_rows(features: Union[Tensor, FeatureVec]) -> Tensor:
    if isinstance(features, FeatureVec):
        return features.as_row()
    return features


def project(features: Union[Tensor, FeatureVec], s: DiscriminantMatrix) -> Tensor:
    """R = F·S; F is 1×f (or n×f), result 1×c (or n×c)"""
    rows = _as_rows(features)
    if rows.data.ndim != 2 or rows.shape[1] != s.feature_width:
        raise DimensionError(f"feature width {rows.shape[-1]} does not match S rows {s.feature_width}")
    return matmul(rows, s.values)


def squash(r: Tensor) -> Tensor:
    return Squash.apply(r)


def positive_distance(q_anchor: Tensor, q_positive: Tensor) -> Tensor:
    """D1 = |Q(R1) - Q(R3)|, one value per row"""
    return l2_norm(sub(q_anchor, q_positive), axis=-1)


def negative_distance(q_anchor: Tensor, q_negative: Tensor) -> Tensor:
    """D2 = |Q(R1) - Q(R2)|, one value per row"""
    return l2_norm(sub(q_anchor, q_negative), axis=-1)


def _as_tensor(value: Scalar) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def triplet_loss(d1: Scalar, d2: Scalar, cfg: MarginConfig) -> Tensor:
    """max(0, d1 - d2 + m) elementwise; zero gradient wherever the hinge is inactive"""
    d1, d2 = _as_tensor(d1), _as_tensor(d2)
    gap = sub(d1, d2)
    return relu(add(gap, Tensor.constant(cfg.m, gap.shape)))


def triplet_forward(f1: Union[Tensor, FeatureVec], f2: Union[Tensor, FeatureVec], f3: Union[Tensor, FeatureVec],
                    s: DiscriminantMatrix, cfg: MarginConfig) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Anchor f1, negative f2, positive f3 (n rows each) through
    project → squash → distances → hinge. Returns the batch-mean loss
    together with the per-row d1 and d2 diagnostics.
    """
    q1 = squash(project(f1, s))
    q2 = squash(project(f2, s))
    q3 = squash(project(f3, s))
    d1 = positive_distance(q1, q3)
    d2 = negative_distance(q1, q2)
    loss = mean(triplet_loss(d1, d2, cfg))
    return loss, d1, d2
