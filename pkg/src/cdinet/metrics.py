"""
Per-image saliency metrics: precision/recall, F-measure, MAE and S-measure.

All kernels work on :class:`SaliencyPair` objects holding a float64
prediction in [0, 1] and a binary ground-truth mask of the same shape.
Binarisation uses ``pred > threshold`` over the 8-bit grid ``k / 255`` for
``k = 0 .. 254``.

Empty-set conventions:

- precision is 1 when nothing is predicted positive;
- recall is 1 when the mask has no foreground;
- F is 0 when ``beta2 * P + R`` is 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch
import torch.nn.functional as F

from cdinet.exceptions import ConfigurationError, ShapeError

DEFAULT_BETA2 = 0.3
DEFAULT_ALPHA = 0.5
NUM_THRESHOLDS = 255
THRESHOLDS = np.arange(NUM_THRESHOLDS, dtype=np.float64) / 255.0

# Machine epsilon, as in the reference structure-measure code.
EPS = float(np.spacing(1))


@dataclass(frozen=True)
class SaliencyPair:
    """A prediction and its ground truth, both (H, W)."""

    pred: np.ndarray
    gt: np.ndarray

    def __post_init__(self) -> None:
        if self.pred.ndim != 2 or self.gt.ndim != 2:
            raise ShapeError(
                f"saliency pairs must be 2-D, got {self.pred.shape} and {self.gt.shape}"
            )
        if self.pred.shape != self.gt.shape:
            raise ShapeError.mismatch("prediction vs ground truth", self.pred.shape, self.gt.shape)

    @classmethod
    def from_arrays(cls, pred: np.ndarray, gt: np.ndarray) -> SaliencyPair:
        """
        Build a pair, resizing ``pred`` bilinearly to the mask resolution.

        ``pred`` is clipped to [0, 1]; ``gt`` is binarised at 0.5.
        """
        pred = np.asarray(pred, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        if pred.ndim != 2 or gt.ndim != 2:
            raise ShapeError(f"saliency pairs must be 2-D, got {pred.shape} and {gt.shape}")
        if pred.shape != gt.shape:
            resized = F.interpolate(
                torch.from_numpy(pred)[None, None],
                size=gt.shape,
                mode="bilinear",
                align_corners=False,
            )
            pred = resized[0, 0].numpy()
        return cls(pred=np.clip(pred, 0.0, 1.0), gt=(gt >= 0.5).astype(np.float64))


def _check_threshold(threshold: float) -> None:
    if not 0.0 <= threshold <= 1.0:
        raise ConfigurationError(f"threshold must lie in [0, 1], got {threshold}")


def precision_recall(pair: SaliencyPair, threshold: float) -> Tuple[float, float]:
    """Precision and recall of ``pred > threshold`` against the mask."""
    _check_threshold(threshold)
    positive = pair.pred > threshold
    fg = pair.gt > 0.5
    tp = int(np.count_nonzero(positive & fg))
    predicted = int(np.count_nonzero(positive))
    actual = int(np.count_nonzero(fg))
    precision = tp / predicted if predicted else 1.0
    recall = tp / actual if actual else 1.0
    return precision, recall


def pr_curve(pair: SaliencyPair) -> Tuple[np.ndarray, np.ndarray]:
    """
    Precision and recall at every grid threshold.

    Returns:
        Two arrays of length 255, index ``k`` for threshold ``k / 255``.
    """
    fg = pair.gt > 0.5
    fg_scores = np.sort(pair.pred[fg])
    bg_scores = np.sort(pair.pred[~fg])
    # count of scores strictly above each threshold
    tp = fg_scores.size - np.searchsorted(fg_scores, THRESHOLDS, side="right")
    fp = bg_scores.size - np.searchsorted(bg_scores, THRESHOLDS, side="right")
    predicted = tp + fp

    precision = np.ones(NUM_THRESHOLDS, dtype=np.float64)
    nonzero = predicted > 0
    precision[nonzero] = tp[nonzero] / predicted[nonzero]
    if fg_scores.size:
        recall = tp / float(fg_scores.size)
    else:
        recall = np.ones(NUM_THRESHOLDS, dtype=np.float64)
    return precision, recall.astype(np.float64)


def f_measure(precision: float, recall: float, beta2: float = DEFAULT_BETA2) -> float:
    """Weighted harmonic mean ``(1 + b2) P R / (b2 P + R)``; 0 for a zero denominator."""
    denominator = beta2 * precision + recall
    if denominator == 0:
        return 0.0
    return float((1.0 + beta2) * precision * recall / denominator)


def f_curve(
    precision: np.ndarray, recall: np.ndarray, beta2: float = DEFAULT_BETA2
) -> np.ndarray:
    """Vectorised :func:`f_measure` over aligned precision/recall arrays."""
    denominator = beta2 * precision + recall
    numerator = (1.0 + beta2) * precision * recall
    out = np.zeros_like(numerator, dtype=np.float64)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def max_f_measure(pair: SaliencyPair, beta2: float = DEFAULT_BETA2) -> float:
    """Highest F-measure over the threshold grid."""
    return float(f_curve(*pr_curve(pair), beta2=beta2).max())


def mae(pair: SaliencyPair) -> float:
    """Mean absolute pixel difference."""
    return float(np.abs(pair.pred - pair.gt).mean())


def _object_similarity(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def object_score(pair: SaliencyPair) -> float:
    """Object-aware similarity: foreground and background distributions weighted by mask area."""
    pred, gt = pair.pred, pair.gt
    fg = gt > 0.5
    u = float(fg.mean())
    fg_score = _object_similarity(pred[fg])
    bg_score = _object_similarity(1.0 - pred[~fg])
    return u * fg_score + (1.0 - u) * bg_score


def centroid(gt: np.ndarray) -> Tuple[int, int]:
    """
    Split point ``(x, y)`` of the mask: its rounded centre of mass plus one,
    or the image centre for an empty mask.
    """
    height, width = gt.shape
    rows, cols = np.nonzero(gt > 0.5)
    if rows.size == 0:
        return int(round(width / 2)), int(round(height / 2))
    return int(round(cols.mean())) + 1, int(round(rows.mean())) + 1


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    x, y = pred.mean(), gt.mean()
    sigma_x = ((pred - x) ** 2).sum() / (n - 1 + EPS)
    sigma_y = ((gt - y) ** 2).sum() / (n - 1 + EPS)
    sigma_xy = ((pred - x) * (gt - y)).sum() / (n - 1 + EPS)
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x + sigma_y)
    if alpha != 0:
        return float(alpha / (beta + EPS))
    if beta == 0:
        return 1.0
    return 0.0


def region_score(pair: SaliencyPair) -> float:
    """Region-aware similarity: area-weighted SSIM over the four quadrants around the mask centroid."""
    pred, gt = pair.pred, pair.gt
    height, width = gt.shape
    area = height * width
    x, y = centroid(gt)
    quadrants = [
        (slice(0, y), slice(0, x), x * y),
        (slice(0, y), slice(x, width), (width - x) * y),
        (slice(y, height), slice(0, x), x * (height - y)),
        (slice(y, height), slice(x, width), (width - x) * (height - y)),
    ]
    score = 0.0
    for rows, cols, weight_area in quadrants:
        weight = weight_area / area
        if weight > 0:
            score += weight * _ssim(pred[rows, cols], gt[rows, cols])
    return score


def s_measure(pair: SaliencyPair, alpha: float = DEFAULT_ALPHA) -> float:
    """
    Structure measure ``alpha * S_o + (1 - alpha) * S_r``, clamped to [0, 1].

    An all-background mask scores ``1 - mean(pred)``; an all-foreground
    mask scores ``mean(pred)``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha must lie in [0, 1], got {alpha}")
    fg_ratio = float((pair.gt > 0.5).mean())
    if fg_ratio == 0.0:
        score = 1.0 - float(pair.pred.mean())
    elif fg_ratio == 1.0:
        score = float(pair.pred.mean())
    else:
        score = alpha * object_score(pair) + (1.0 - alpha) * region_score(pair)
    return float(min(max(score, 0.0), 1.0))
