"""Training objectives: per-head cross-entropy, the attention-guidance
correlation loss, and their weighted combination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import tensor as T
from .engine.tensor import Tensor
from .errors import ConfigError, ShapeError

PROB_CLAMP = 1e-12
NCC_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Multipliers for the four loss terms; defaults are the tuned values."""

    w_base: float = 2.0
    w_feature: float = 1.0
    w_joint: float = 1.0
    w_ncc: float = 0.2

    def __post_init__(self) -> None:
        if min(self.w_base, self.w_feature, self.w_joint, self.w_ncc) < 0:
            raise ConfigError("loss weights must be non-negative")


def cross_entropy(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-probability of the true class.

    Expects probabilities (rows summing to 1 within 1e-5); they are clamped
    below at 1e-12 before the log.
    """
    labels = np.asarray(labels)
    if probs.ndim != 2:
        raise ShapeError(f"expected [B, n_classes] probabilities, got {probs.shape}")
    batch, n_classes = probs.shape
    if labels.shape != (batch,):
        raise ValueError(f"expected {batch} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"class index out of range for {n_classes} classes")
    sums = probs.data.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-5):
        raise ValueError("probability rows must sum to 1")
    onehot = np.zeros((batch, n_classes))
    onehot[np.arange(batch), labels] = 1.0
    p_true = T.tsum(probs * Tensor(onehot), axis=1)
    return -T.tmean(T.log(T.clip_min(p_true, PROB_CLAMP)))


def _zscore_rows(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    sigma = x.std(axis=1, keepdims=True)
    return (x - mu) / (sigma + NCC_EPS)


def ncc_loss(pred_cam: Tensor, gt_cam: np.ndarray) -> Tensor:
    """Negative normalized cross-correlation between predicted and target maps.

    Both arguments are [B, M] (a single [M] pair is promoted). Each row is
    z-scored with the population deviation stabilized as sigma + 1e-8, the
    per-record score is the mean elementwise product, and the batch result
    averages the negated scores. Rows whose target is all zeros carry no
    attention information and are excluded; if every row is excluded the
    loss is a constant 0.
    """
    if pred_cam.ndim == 1:
        pred_cam = pred_cam.reshape(1, -1)
    gt = np.asarray(gt_cam, dtype=np.float64)
    if gt.ndim == 1:
        gt = gt.reshape(1, -1)
    if gt.shape != pred_cam.shape:
        raise ShapeError(f"prediction {pred_cam.shape} vs target {gt.shape}")

    include = np.any(gt != 0.0, axis=1)
    if not include.any():
        return Tensor(0.0)

    mu = pred_cam.mean(axis=1, keepdims=True)
    centered = pred_cam - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    z_pred = centered * T.power(T.sqrt(var) + NCC_EPS, -1.0)
    z_gt = _zscore_rows(gt)

    per_record = -T.tmean(z_pred * Tensor(z_gt), axis=1)
    weights = include.astype(np.float64)
    return T.tsum(per_record * Tensor(weights)) * (1.0 / weights.sum())


def total_loss(
    logits_base: Tensor,
    logits_feat: Tensor,
    logits_joint: Tensor,
    labels: np.ndarray,
    train_cam: Tensor,
    gt_cam: np.ndarray,
    weights: LossWeights = LossWeights(),
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the three classification terms and the guidance term.

    Returns the differentiable total and a plain-float breakdown for logging.
    """
    for name, value in (("logits_base", logits_base), ("logits_feat", logits_feat),
                        ("logits_joint", logits_joint), ("train_cam", train_cam)):
        if value is None:
            raise ConfigError(f"total_loss needs {name}; run the forward pass in training mode")
    ce_base = cross_entropy(T.softmax(logits_base, axis=1), labels)
    ce_feat = cross_entropy(T.softmax(logits_feat, axis=1), labels)
    ce_joint = cross_entropy(T.softmax(logits_joint, axis=1), labels)
    ncc = ncc_loss(train_cam, gt_cam)
    total = (weights.w_base * ce_base + weights.w_feature * ce_feat
             + weights.w_joint * ce_joint + weights.w_ncc * ncc)
    parts = {
        "ce_base": ce_base.item(),
        "ce_feat": ce_feat.item(),
        "ce_joint": ce_joint.item(),
        "ncc": ncc.item(),
        "total": total.item(),
    }
    return total, parts
