"""Supervised and consistency loss functions.

Supervised: cross entropy, frequency-weighted cross entropy, focal loss.
Consistency (unlabeled pairs): CL pulls the augmented prediction toward the
original one; SCL down-weights CL when the original prediction is a rare
class; ABCL pulls both predictions toward a frequency-compensated blend of
the two, so that whichever side predicted the rarer class dominates the
target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import PROB_FLOOR, Tensor
from .errors import ConfigError
from .model import predicted_class

CL = "cl"
SCL = "scl"
ABCL = "abcl"

ALWAYS_ON = "always_on"
SELECTIVE = "selective"


@dataclass
class ClassFrequencyTable:
    """Per-class frequency fractions of the (labeled) training split."""

    freqs: np.ndarray

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=np.float64)
        if self.freqs.ndim != 1 or self.freqs.size < 2:
            raise ConfigError(f"frequency table must be a vector of >= 2 classes, got {self.freqs.shape}")
        if np.any(self.freqs < 0) or abs(self.freqs.sum() - 1.0) > 1e-9:
            raise ConfigError("class frequencies must be non-negative and sum to 1")

    @property
    def n_classes(self) -> int:
        return self.freqs.size


@dataclass
class ConsistencyConfig:
    """Which consistency loss to apply on unlabeled pairs, and how."""

    kind: str = ABCL
    gamma: float = 0.4          # imbalance compensation strength for ABCL
    beta: float = 0.8           # suppression factor for SCL
    blending: str = ALWAYS_ON   # ABCL target blending mode
    unsup_weight: float = 1.0   # coefficient on the consistency term
    reduction: str = "mean"     # per-batch reduction of pairwise losses

    def __post_init__(self):
        if self.kind not in (CL, SCL, ABCL):
            raise ConfigError(f"unknown consistency kind {self.kind!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"beta must be in (0, 1], got {self.beta}")
        if self.blending not in (ALWAYS_ON, SELECTIVE):
            raise ConfigError(f"unknown blending mode {self.blending!r}")
        if self.unsup_weight < 0.0:
            raise ConfigError(f"unsup_weight must be >= 0, got {self.unsup_weight}")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"unknown reduction {self.reduction!r}")


# -- supervised losses -------------------------------------------------------


def cross_entropy(p: Tensor, label: int) -> Tensor:
    """-ln p[label], with the probability floored away from zero."""
    return -ad.log(ad.clip_min(ad.pick(p, label), PROB_FLOOR))


def weighted_ce(p: Tensor, label: int, table: ClassFrequencyTable) -> Tensor:
    """Cross entropy scaled by (1 - class frequency) of the true label."""
    return float(1.0 - table.freqs[int(label)]) * cross_entropy(p, label)


def focal_loss(p: Tensor, label: int, gamma_f: float = 1.0) -> Tensor:
    """-(1 - p[label])^gamma_f * ln p[label]; gamma_f = 0 reduces to CE."""
    if gamma_f < 0.0:
        raise ConfigError(f"focal gamma must be >= 0, got {gamma_f}")
    p_true = ad.pick(p, label)
    return ((1.0 - p_true) ** float(gamma_f)) * cross_entropy(p, label)


# -- consistency losses -------------------------------------------------------


def consistency_cl(z: Tensor, z_hat: Tensor) -> Tensor:
    """KL(stop_grad(z) || z_hat): the original prediction is a fixed target."""
    return ad.kl_div(ad.stop_gradient(z), z_hat)


def scl_weight(predicted: int, table: ClassFrequencyTable, beta: float) -> float:
    """Suppression factor: 1 for the most frequent class, beta for the rarest.

    The originating method is specified only behaviorally (suppress when a
    minor class is predicted); this linear interpolation over class frequency
    is the documented stand-in.
    """
    freqs = table.freqs
    lo, hi = freqs.min(), freqs.max()
    if hi == lo:
        return 1.0
    return float(beta + (1.0 - beta) * (freqs[int(predicted)] - lo) / (hi - lo))


def consistency_scl(z: Tensor, z_hat: Tensor, table: ClassFrequencyTable,
                    beta: float = 0.8) -> Tensor:
    if not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must be in (0, 1], got {beta}")
    return scl_weight(predicted_class(z), table, beta) * consistency_cl(z, z_hat)


def compute_k(n_orig: float, n_aug: float, gamma: float) -> float:
    """Blending weight: 0.5 shifted by the predicted-class frequency gap, clamped to [0, 1]."""
    return max(0.0, min(gamma * (n_orig - n_aug) + 0.5, 1.0))


def blend_target(z: Tensor, z_hat: Tensor, k: float) -> Tensor:
    """(1-k) z + k z_hat as a constant target (no gradient flows through it)."""
    if not 0.0 <= k <= 1.0:
        raise ConfigError(f"k must be in [0, 1], got {k}")
    if k == 0.0:
        return ad.stop_gradient(z)
    if k == 1.0:
        return ad.stop_gradient(z_hat)
    return ad.stop_gradient((1.0 - k) * z + k * z_hat)


def consistency_abcl(z: Tensor, z_hat: Tensor, table: ClassFrequencyTable,
                     cfg: ConsistencyConfig) -> Tensor:
    """KL(z_b || z) + KL(z_b || z_hat) with z_b the frequency-compensated blend.

    k > 0.5 (target nearer the augmented prediction) exactly when the original
    prediction is the more frequent class, and vice versa. In selective mode
    the blend is skipped when both predictions agree, falling back to CL.
    """
    c = predicted_class(z)
    c_hat = predicted_class(z_hat)
    if cfg.blending == SELECTIVE and c == c_hat:
        return consistency_cl(z, z_hat)
    k = compute_k(float(table.freqs[c]), float(table.freqs[c_hat]), cfg.gamma)
    z_b = blend_target(z, z_hat, k)
    return ad.kl_div(z_b, z) + ad.kl_div(z_b, z_hat)


def consistency_loss(z: Tensor, z_hat: Tensor, table: ClassFrequencyTable,
                     cfg: ConsistencyConfig) -> Tensor:
    """Dispatch on cfg.kind."""
    if cfg.kind == CL:
        return consistency_cl(z, z_hat)
    if cfg.kind == SCL:
        return consistency_scl(z, z_hat, table, cfg.beta)
    return consistency_abcl(z, z_hat, table, cfg)
