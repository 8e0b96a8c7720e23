"""Class activation maps from the final feature block, and their
agreement with the RR-variability ground truth.

The map for class c weights each feature channel by the gradient of the
class score with respect to the feature map, averages the weighted map
across channels, and min-max normalizes to [0, 1]. The same arithmetic
serves two callers:

  * generate_cam: inference-time explanation, class picked by argmax;
  * training_cam: differentiable surrogate used by the guidance loss,
    class fixed to the ground-truth label, channel weights treated as
    constants so gradients reach the feature map only (computing them
    exactly would need derivatives of derivatives, which the tape does
    not and need not support).
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .engine import tensor as T
from .engine.tensor import Tensor
from .gtcam import GtCam
from .losses import NCC_EPS
from .model import ExgNet


@contextmanager
def _params_frozen(model: ExgNet):
    """Make parameters invisible to backward inside the block."""
    params = list(model.params().values())
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p in params:
            p.requires_grad = True


def _channel_weights(model: ExgNet, feat_values: np.ndarray, class_idx: np.ndarray) -> np.ndarray:
    """d(score of chosen class)/d(feature map), parameters held constant."""
    leaf = Tensor(feat_values, requires_grad=True)
    with _params_frozen(model):
        logits, _ = model.head(leaf)
        batch = logits.shape[0]
        onehot = np.zeros(logits.shape)
        onehot[np.arange(batch), class_idx] = 1.0
        score = T.tsum(logits * Tensor(onehot))
        score.backward()
    assert leaf.grad is not None
    return leaf.grad


def _normalize_rows(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row min and scale for min-max mapping; flat rows scale by 1 (giving zeros)."""
    mn = raw.min(axis=1, keepdims=True)
    mx = raw.max(axis=1, keepdims=True)
    span = mx - mn
    flat = span[:, 0] == 0.0
    span[flat] = 1.0
    return mn, span, flat


def generate_cam(model: ExgNet, x: Tensor | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inference-path maps for a batch: returns (cams [B, M], predicted classes [B])."""
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=np.float64))
    with T.no_grad():
        feat_map = model.feature_map(x, mode="eval")
        logits, _ = model.head(feat_map)
    pred = logits.data.argmax(axis=1)
    w = _channel_weights(model, feat_map.data, pred)
    raw = (feat_map.data * w).mean(axis=1)
    mn, span, _ = _normalize_rows(raw)
    return (raw - mn) / span, pred


def training_cam(model: ExgNet, feat_map: Tensor, true_labels: np.ndarray) -> Tensor:
    """Differentiable surrogate map; value-identical to generate_cam at equal
    class choice, but connected to the tape through the feature map alone."""
    labels = np.asarray(true_labels)
    w = _channel_weights(model, feat_map.data, labels)
    raw = T.tmean(feat_map * Tensor(w), axis=1)
    mn, span, _ = _normalize_rows(raw.data)
    return (raw - Tensor(mn)) * Tensor(1.0 / span)


def alignment_metrics(pred_cam: np.ndarray, gt_cam: np.ndarray) -> tuple[float, float, float, bool]:
    """(ncc, l1, l2, degenerate) between two equal-length maps.

    ncc here is the positive goodness convention (1 is perfect agreement).
    A constant map on either side has no shape to correlate; ncc is
    reported as 0 with the degenerate flag raised.
    """
    a = np.asarray(pred_cam, dtype=np.float64).reshape(-1)
    b = np.asarray(gt_cam, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    l1 = float(np.mean(np.abs(diff)))
    l2 = float(np.sqrt(np.mean(diff * diff)))
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0, l1, l2, True
    ncc = float(np.mean(((a - a.mean()) / (sa + NCC_EPS)) * ((b - b.mean()) / (sb + NCC_EPS))))
    return ncc, l1, l2, False


@dataclass(frozen=True)
class CamReport:
    """Explanation summary for one record."""

    record_id: str
    pred_cam: np.ndarray
    gt_cam: GtCam
    ncc: float
    l1: float
    l2: float
    predicted_class: int
    true_class: int
    degenerate: bool


def cam_report(model: ExgNet, record_id: str, x: np.ndarray, gt: GtCam, true_class: int) -> CamReport:
    cams, preds = generate_cam(model, np.asarray(x, dtype=np.float64).reshape(1, 1, -1))
    ncc, l1, l2, degenerate = alignment_metrics(cams[0], gt.values)
    return CamReport(
        record_id=record_id,
        pred_cam=cams[0],
        gt_cam=gt,
        ncc=ncc,
        l1=l1,
        l2=l2,
        predicted_class=int(preds[0]),
        true_class=int(true_class),
        degenerate=degenerate,
    )
